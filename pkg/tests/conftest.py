import pytest

from fkroi.replay import default_scene
from fkroi.roi import RoiPolicy

_ACCEPTANCE = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker and (rep.when == "call" or (rep.when == "setup" and not rep.passed)):
        _ACCEPTANCE.append((marker.args[0], rep.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for label, outcome in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {label}")


@pytest.fixture(scope="session")
def scene():
    return default_scene()


@pytest.fixture(scope="session")
def small_scene():
    return default_scene(n_steps=12)


@pytest.fixture
def policy():
    return RoiPolicy()
