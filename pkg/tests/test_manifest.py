import dataclasses
import hashlib
import json

import jsonschema
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fkroi.imageio import read_png, sha256_file, write_png
from fkroi.kinematics import Pose
from fkroi.manifest import (
    MissingArtifactError,
    build_manifest,
    load_manifest,
    tree_checksum,
    validate_manifest_dict,
    verify_regeneration,
    write_manifest,
)
from fkroi.records import (
    RECORD_KEYS,
    LineageTuple,
    Rect,
    RoiRecord,
    TeleopMetrics,
    parse_record,
    read_records,
    serialize_record,
    write_records,
)

from helpers import LINEAGE, make_record, random_rotation

EMPTY_SHA256 = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
unit = st.floats(0, 1)
ident = st.text(st.characters(min_codepoint=32, max_codepoint=0x2FFF), min_size=1, max_size=8)


@st.composite
def records(draw):
    valid = draw(st.booleans())
    geom = dict(projected_center=None, offset_center=None, crop_rect=None, ell=None)
    if valid:
        geom = dict(
            projected_center=(draw(finite), draw(finite)),
            offset_center=(draw(finite), draw(finite)),
            crop_rect=Rect(draw(st.integers(-5000, 5000)), draw(st.integers(-5000, 5000)), draw(st.integers(1, 600)), draw(st.integers(1, 600))),
            ell=draw(st.floats(1, 600)),
        )
    in_frame = draw(unit)
    teleop = draw(st.none() | st.builds(TeleopMetrics, st.none() | finite, st.none() | finite, st.none() | finite))
    rot = random_rotation(np.random.default_rng(draw(st.integers(0, 2**32 - 1))))
    return RoiRecord(
        timestamp=draw(finite),
        frame_index=draw(st.integers(0, 10**7)),
        camera_id=draw(ident),
        robot_id=draw(ident),
        arm_id=draw(ident),
        valid_projection=valid,
        in_frame_ratio=in_frame,
        padding_ratio=1.0 - in_frame,
        confidence=draw(unit),
        ee_pose_base=Pose(rot, (draw(finite), draw(finite), draw(finite))),
        ee_point_camera=(draw(finite), draw(finite), draw(finite)),
        sync_residual=draw(st.floats(-1, 1)),
        teleop=teleop,
        quality_flags=tuple(draw(st.lists(st.sampled_from(["sync-flagged", "boundary-heavy", "occluded-suspect", "x"])))),
        lineage=LineageTuple(*(draw(ident) for _ in range(6))),
        **geom,
    )


# --- records -------------------------------------------------------------------


@settings(max_examples=200, deadline=None)
@given(records())
def test_record_round_trip_is_field_exact(rec):
    line = serialize_record(rec)
    back = parse_record(line)
    assert back == rec
    assert serialize_record(back) == line


@settings(max_examples=200, deadline=None)
@given(records(), records())
def test_serialization_is_injective(a, b):
    if a != b:
        assert serialize_record(a) != serialize_record(b)


def test_key_order_and_sentinels():
    line = serialize_record(make_record(valid=False))
    d = json.loads(line)
    assert tuple(d) == RECORD_KEYS
    assert d["projected_center"] is None and d["crop_rect"] is None and d["ell"] is None
    assert b" " not in line and line.endswith(b"\n")


def test_shortest_round_trip_floats():
    d = json.loads(serialize_record(make_record(t=0.1, residual=1e-17)))
    raw = serialize_record(make_record(t=0.1, residual=1e-17)).decode()
    assert '"timestamp":0.1,' in raw and '"sync_residual":1e-17,' in raw
    assert d["timestamp"] == 0.1


def test_non_finite_values_rejected():
    with pytest.raises(ValueError):
        serialize_record(make_record(residual=float("nan")))


def test_sentinel_geometry_invariant():
    rec = make_record()
    with pytest.raises(ValueError):
        dataclasses.replace(rec, valid_projection=False)
    with pytest.raises(ValueError):
        dataclasses.replace(make_record(valid=False), valid_projection=True)


def test_lineage_validation():
    with pytest.raises(ValueError):
        LineageTuple("a", "", "c", "d", "e", "f")
    with pytest.raises(ValueError):
        LineageTuple("a", "b", "c", "d", "e", "f", padding_mode="reflect")


def test_write_records_empty_digest(tmp_path):
    assert hashlib.sha256(b"").hexdigest() == EMPTY_SHA256
    assert write_records([], tmp_path / "r.jsonl") == EMPTY_SHA256
    assert (tmp_path / "r.jsonl").read_bytes() == b""


def test_write_records_determinism_and_sensitivity(tmp_path):
    recs = [make_record(t=i * 0.1) for i in range(5)]
    a = write_records(recs, tmp_path / "a.jsonl")
    b = write_records(recs, tmp_path / "b.jsonl")
    assert a == b == sha256_file(tmp_path / "a.jsonl")
    changed = recs[:2] + [make_record(t=0.2, confidence=0.999)] + recs[3:]
    assert write_records(changed, tmp_path / "c.jsonl") != a
    assert read_records(tmp_path / "a.jsonl") == recs


def test_write_records_requires_order(tmp_path):
    with pytest.raises(ValueError):
        write_records([make_record(t=1.0), make_record(t=0.0)], tmp_path / "r.jsonl")


def test_write_records_io_error_names_path(tmp_path):
    dest = tmp_path / "missing-dir" / "r.jsonl"
    with pytest.raises(OSError, match="missing-dir"):
        write_records([], dest)


# --- manifests -----------------------------------------------------------------


def _dataset(tmp_path, n=3, lineage=LINEAGE):
    root = tmp_path / "ds"
    (root / "roi").mkdir(parents=True)
    recs = [make_record(t=i * 0.1, frame_index=i, lineage=lineage) for i in range(n)]
    rec_sum = write_records(recs, root / "records.jsonl")
    roi = {}
    for r in recs:
        rel = f"roi/{r.roi_filename}"
        write_png(root / rel, np.full((8, 8, 3), 10 * r.frame_index, dtype=np.uint8))
        roi[rel] = sha256_file(root / rel)
    inputs_dir = tmp_path / "inputs"
    inputs_dir.mkdir()
    inputs = {}
    for role in ("state_log", "image_index", "calibration", "chain", "policy"):
        p = inputs_dir / f"{role}.json"
        p.write_text(json.dumps({"role": role}))
        inputs[role] = p
    manifest = build_manifest(rec_sum, roi, inputs, lineage, dataset_root=root, record_count=n, tool_version="t-1")
    return root, manifest, inputs


def test_minimal_manifest_validates(tmp_path):
    _, m, _ = _dataset(tmp_path, n=1)
    validate_manifest_dict(m.to_dict())
    assert m.to_dict()["inputs"]["chain"]["file"] == "chain.json"


def test_manifest_is_deterministic(tmp_path):
    root, m, inputs = _dataset(tmp_path)
    again = build_manifest(m.record_sha256, m.roi_files, inputs, LINEAGE, dataset_root=root, record_count=3, tool_version="t-1")
    assert m.to_bytes() == again.to_bytes()


def test_extrinsics_version_field_isolation(tmp_path):
    _, m, inputs = _dataset(tmp_path)
    bumped = dataclasses.replace(m, lineage=dataclasses.replace(LINEAGE, extrinsics_ver="extr-2"))

    def flatten(d, prefix=""):
        out = {}
        for k, v in d.items():
            if isinstance(v, dict):
                out.update(flatten(v, f"{prefix}{k}."))
            else:
                out[f"{prefix}{k}"] = v
        return out

    a, b = flatten(m.to_dict()), flatten(bumped.to_dict())
    assert set(a) == set(b)
    assert {k for k in a if a[k] != b[k]} == {"lineage.extrinsics_ver", "manifest_sha256"}


def test_manifest_round_trip_and_tamper_detection(tmp_path):
    root, m, _ = _dataset(tmp_path)
    write_manifest(m, root / "manifest.json")
    assert load_manifest(root / "manifest.json") == m
    d = json.loads((root / "manifest.json").read_text())
    d["dataset_id"] = "other"
    (root / "manifest.json").write_text(json.dumps(d))
    with pytest.raises(ValueError, match="manifest_sha256"):
        load_manifest(root / "manifest.json")


def test_schema_rejects_malformed(tmp_path):
    _, m, _ = _dataset(tmp_path)
    d = m.to_dict()
    del d["lineage"]
    with pytest.raises(jsonschema.ValidationError):
        validate_manifest_dict(d)
    d = m.to_dict()
    d["records"]["sha256"] = "xyz"
    with pytest.raises(jsonschema.ValidationError):
        validate_manifest_dict(d)


def test_missing_artifact_rejected_by_name(tmp_path):
    root, m, inputs = _dataset(tmp_path)
    (root / "roi" / "00000001_arm0.png").unlink()
    with pytest.raises(MissingArtifactError, match="00000001_arm0.png"):
        build_manifest(m.record_sha256, m.roi_files, inputs, LINEAGE, dataset_root=root)
    inputs["policy"].unlink()
    with pytest.raises(MissingArtifactError, match="policy"):
        build_manifest(m.record_sha256, {}, inputs, LINEAGE)


def test_tree_checksum_oracle():
    files = {"roi/b.png": "1" * 64, "roi/a.png": "0" * 64}
    listing = f"{'0' * 64}  roi/a.png\n{'1' * 64}  roi/b.png\n"
    assert tree_checksum(files) == hashlib.sha256(listing.encode()).hexdigest()
    assert tree_checksum({}) == EMPTY_SHA256


# --- verification --------------------------------------------------------------


def test_verify_fixed_point(tmp_path):
    root, m, _ = _dataset(tmp_path)
    report = verify_regeneration(m, root)
    assert report.ok and len(report.artifacts) == 4 and report.lineage_mismatches == []


def test_verify_single_pixel_flip(tmp_path):
    root, m, _ = _dataset(tmp_path)
    target = root / "roi" / "00000002_arm0.png"
    px = read_png(target)
    px[3, 4, 1] ^= 1
    write_png(target, px)
    report = verify_regeneration(m, root)
    assert not report.ok
    assert report.mismatched == ["roi/00000002_arm0.png"]
    assert report.lineage_mismatches == []


def test_verify_reports_missing_and_continues(tmp_path):
    root, m, _ = _dataset(tmp_path)
    (root / "roi" / "00000000_arm0.png").unlink()
    report = verify_regeneration(m, root)
    assert report.mismatched == ["roi/00000000_arm0.png"]
    (missing,) = [a for a in report.artifacts if not a.ok]
    assert missing.reason == "missing"
    assert len(report.artifacts) == 4
    assert "missing" in report.summary()


def test_verify_reports_lineage_skew_first(tmp_path):
    root, m, _ = _dataset(tmp_path)
    skewed = dataclasses.replace(m, lineage=dataclasses.replace(LINEAGE, roi_generator_ver="gen-2"))
    report = verify_regeneration(skewed, root)
    assert not report.ok
    assert report.lineage_mismatches == [("roi_generator_ver", "gen-2", "gen-1")]
    assert all(a.ok for a in report.artifacts)
    summary = report.summary().splitlines()
    assert "lineage mismatch roi_generator_ver" in summary[1]


def test_verify_accepts_manifest_path(tmp_path):
    root, m, _ = _dataset(tmp_path)
    write_manifest(m, tmp_path / "manifest.json")
    assert verify_regeneration(tmp_path / "manifest.json", root).ok
