import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fkroi.kinematics import Pose
from fkroi.sync import (
    StateRecord,
    UnsortedStreamError,
    group_by_arm,
    load_image_index,
    load_state_log,
    pair_streams,
    save_image_index,
    save_state_log,
)


def states_at(ts, arm="arm0"):
    return [StateRecord(t, "robot", arm, (0.0,)) for t in ts]


def brute_nearest(t, state_ts):
    """Linear scan; strict < keeps the earliest state on ties."""
    best = 0
    for j, s in enumerate(state_ts):
        if abs(t - s) < abs(t - state_ts[best]):
            best = j
    return best


def test_aligned_grids_have_zero_residual():
    ts = [i * 0.033 for i in range(30)]
    samples, unmatched = pair_streams([(t, f"f{i}") for i, t in enumerate(ts)], states_at(ts))
    assert [s.sync_residual for s in samples] == [0.0] * 30
    assert all(s.within_tolerance for s in samples)
    assert unmatched == {"images": 0, "states": 0}


def test_nearest_neighbor_example():
    samples, _ = pair_streams([(1.00, "img")], states_at([0.98, 1.03]), tolerance=0.01)
    (s,) = samples
    assert s.state.t == 0.98
    assert s.sync_residual == pytest.approx(0.02, abs=1e-12)
    assert not s.within_tolerance  # flagged, still emitted


def test_tie_goes_to_earlier_state():
    samples, _ = pair_streams([(1.0, "img")], states_at([0.5, 1.5]))
    assert samples[0].state.t == 0.5 and samples[0].sync_residual == 0.5


def test_empty_state_stream():
    samples, unmatched = pair_streams([(0.0, "a"), (1.0, "b")], [])
    assert samples == [] and unmatched["images"] == 2


def test_unused_states_are_counted():
    _, unmatched = pair_streams([(0.0, "a")], states_at([0.0, 1.0, 2.0]))
    assert unmatched == {"images": 0, "states": 2}


def test_unsorted_streams_rejected_with_index():
    with pytest.raises(UnsortedStreamError) as exc:
        pair_streams([(0.0, "a"), (0.2, "b"), (0.1, "c")], states_at([0.0]))
    assert exc.value.index == 2 and exc.value.stream == "image"
    with pytest.raises(UnsortedStreamError) as exc:
        pair_streams([(0.0, "a")], states_at([0.0, 0.1, 0.1]))  # states must be strictly increasing
    assert exc.value.index == 2 and exc.value.stream == "state"


@settings(max_examples=150, deadline=None)
@given(
    st.lists(st.integers(0, 5000), min_size=0, max_size=40).map(sorted),
    st.lists(st.integers(0, 5000), min_size=1, max_size=40, unique=True).map(sorted),
    st.integers(0, 100),
)
def test_pairing_matches_linear_scan(img_ms, state_ms, tol_ms):
    img_ts = [m / 1000 for m in img_ms]
    state_ts = [m / 1000 for m in state_ms]
    tol = tol_ms / 1000
    samples, unmatched = pair_streams([(t, i) for i, t in enumerate(img_ts)], states_at(state_ts), tol)
    assert len(img_ts) == len(samples) + unmatched["images"]
    for s, t in zip(samples, img_ts):
        j = brute_nearest(t, state_ts)
        assert s.state.t == state_ts[j]
        assert s.sync_residual == t - state_ts[j]
        assert s.within_tolerance == (abs(s.sync_residual) <= tol)
    assert max((abs(s.sync_residual) for s in samples if s.within_tolerance), default=0.0) <= tol


def test_pairing_is_deterministic():
    rng = random.Random(3)
    imgs = sorted(rng.uniform(0, 10) for _ in range(200))
    sts = sorted(set(rng.uniform(0, 10) for _ in range(150)))
    a = pair_streams([(t, i) for i, t in enumerate(imgs)], states_at(sts))
    b = pair_streams([(t, i) for i, t in enumerate(imgs)], states_at(sts))
    assert a == b


def test_state_log_round_trip(tmp_path):
    states = [
        StateRecord(0.0, "r", "left", (0.1, 0.2)),
        StateRecord(
            0.02, "r", "left", (0.3, 0.4), t_cmd=0.015,
            cmd_pose=Pose.from_translation((1, 2, 3)),
            mapped_operator_pose=Pose.from_translation((1, 2, 3.01)),
            buffering_delay={"camera_ms": 4},
        ),
    ]
    save_state_log(states, tmp_path / "s.jsonl")
    assert load_state_log(tmp_path / "s.jsonl") == states
    assert len((tmp_path / "s.jsonl").read_text().splitlines()) == 2


def test_image_index_paths_resolve_against_index(tmp_path):
    (tmp_path / "sub").mkdir()
    save_image_index([(0.5, "frames/a.png")], tmp_path / "sub" / "index.jsonl")
    assert json.loads((tmp_path / "sub" / "index.jsonl").read_text()) == {"t": 0.5, "path": "frames/a.png"}
    assert load_image_index(tmp_path / "sub" / "index.jsonl") == [(0.5, tmp_path / "sub" / "frames" / "a.png")]


def test_bad_jsonl_reports_line(tmp_path):
    p = tmp_path / "s.jsonl"
    p.write_text('{"t": 0, "q": []}\n{oops\n')
    with pytest.raises(ValueError, match=":2:"):
        load_state_log(p)


def test_group_by_arm():
    states = states_at([0.0, 0.1], "left") + states_at([0.0, 0.1], "right")
    groups = group_by_arm(states)
    assert set(groups) == {("robot", "left"), ("robot", "right")}
    assert all(len(v) == 2 for v in groups.values())
