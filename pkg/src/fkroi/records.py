"""Per-frame ROI records and their canonical JSON Lines serialization.

Canonical form: one JSON object per line, keys in ``RECORD_KEYS`` order,
compact separators, ASCII only, floats in Python's shortest round-trip repr,
``null`` for sentinel geometry. Identical records always give identical bytes.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, NamedTuple

from .kinematics import Pose

PADDING_MODE = "zero"

# starter vocabulary; any other string is accepted
FLAG_PROJECTION_INVALID = "projection-invalid"
FLAG_SYNC = "sync-flagged"
FLAG_BOUNDARY_HEAVY = "boundary-heavy"
FLAG_OUT_OF_FRAME = "out-of-frame"
FLAG_OCCLUDED_SUSPECT = "occluded-suspect"

RECORD_KEYS = (
    "timestamp",
    "frame_index",
    "camera_id",
    "robot_id",
    "arm_id",
    "valid_projection",
    "projected_center",
    "offset_center",
    "crop_rect",
    "ell",
    "in_frame_ratio",
    "padding_ratio",
    "confidence",
    "ee_pose_base",
    "ee_point_camera",
    "sync_residual",
    "teleop",
    "quality_flags",
    "lineage",
)


class Rect(NamedTuple):
    """Integer pixel rectangle; may extend past the image."""

    u0: int
    v0: int
    w: int
    h: int

    @property
    def area(self) -> int:
        return self.w * self.h


class TeleopMetrics(NamedTuple):
    latency: float | None
    frequency: float | None
    mapping_residual: float | None


@dataclass(frozen=True)
class LineageTuple:
    intrinsics_ver: str
    extrinsics_ver: str
    fk_ver: str
    roi_generator_ver: str
    crop_offset_ver: str
    resize_policy: str
    padding_mode: str = PADDING_MODE

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name):
                raise ValueError(f"lineage field {f.name} is empty")
        if self.padding_mode != PADDING_MODE:
            raise ValueError(f"padding_mode must be {PADDING_MODE!r}, got {self.padding_mode!r}")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "LineageTuple":
        return cls(**{f.name: str(d[f.name]) for f in fields(cls)})

    def diff(self, other: "LineageTuple") -> list[tuple[str, str, str]]:
        return [
            (f.name, getattr(self, f.name), getattr(other, f.name))
            for f in fields(self)
            if getattr(self, f.name) != getattr(other, f.name)
        ]


@dataclass(frozen=True)
class RoiRecord:
    timestamp: float
    frame_index: int
    camera_id: str
    robot_id: str
    arm_id: str
    valid_projection: bool
    projected_center: tuple[float, float] | None
    offset_center: tuple[float, float] | None
    crop_rect: Rect | None
    ell: float | None
    in_frame_ratio: float
    padding_ratio: float
    confidence: float
    ee_pose_base: Pose
    ee_point_camera: tuple[float, float, float]
    sync_residual: float
    teleop: TeleopMetrics | None
    quality_flags: tuple[str, ...]
    lineage: LineageTuple

    def __post_init__(self):
        geometry = (self.projected_center, self.offset_center, self.crop_rect, self.ell)
        if self.valid_projection and any(g is None for g in geometry):
            raise ValueError("valid projection requires all geometry fields")
        if not self.valid_projection and any(g is not None for g in geometry):
            raise ValueError("invalid projection must carry sentinel (null) geometry")
        object.__setattr__(self, "quality_flags", tuple(sorted(set(self.quality_flags))))

    @property
    def sort_key(self):
        return (self.timestamp, self.arm_id, self.frame_index)

    @property
    def roi_filename(self) -> str:
        return f"{self.frame_index:08d}_{self.arm_id}.png"


def _f(x) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {x!r} cannot be serialized")
    return x


def _pair(p):
    return None if p is None else [_f(p[0]), _f(p[1])]


def record_to_dict(r: RoiRecord) -> dict:
    d = {
        "timestamp": _f(r.timestamp),
        "frame_index": int(r.frame_index),
        "camera_id": r.camera_id,
        "robot_id": r.robot_id,
        "arm_id": r.arm_id,
        "valid_projection": bool(r.valid_projection),
        "projected_center": _pair(r.projected_center),
        "offset_center": _pair(r.offset_center),
        "crop_rect": None if r.crop_rect is None else [int(v) for v in r.crop_rect],
        "ell": None if r.ell is None else _f(r.ell),
        "in_frame_ratio": _f(r.in_frame_ratio),
        "padding_ratio": _f(r.padding_ratio),
        "confidence": _f(r.confidence),
        "ee_pose_base": [_f(v) for v in r.ee_pose_base.to_list()],
        "ee_point_camera": [_f(v) for v in r.ee_point_camera],
        "sync_residual": _f(r.sync_residual),
        "teleop": None
        if r.teleop is None
        else {
            "L_t": None if r.teleop.latency is None else _f(r.teleop.latency),
            "f_t": None if r.teleop.frequency is None else _f(r.teleop.frequency),
            "r_t": None if r.teleop.mapping_residual is None else _f(r.teleop.mapping_residual),
        },
        "quality_flags": list(r.quality_flags),
        "lineage": r.lineage.to_dict(),
    }
    assert tuple(d) == RECORD_KEYS
    return d


def record_from_dict(d: dict) -> RoiRecord:
    tele = d.get("teleop")
    return RoiRecord(
        timestamp=float(d["timestamp"]),
        frame_index=int(d["frame_index"]),
        camera_id=d["camera_id"],
        robot_id=d["robot_id"],
        arm_id=d["arm_id"],
        valid_projection=bool(d["valid_projection"]),
        projected_center=None if d["projected_center"] is None else tuple(float(v) for v in d["projected_center"]),
        offset_center=None if d["offset_center"] is None else tuple(float(v) for v in d["offset_center"]),
        crop_rect=None if d["crop_rect"] is None else Rect(*(int(v) for v in d["crop_rect"])),
        ell=None if d["ell"] is None else float(d["ell"]),
        in_frame_ratio=float(d["in_frame_ratio"]),
        padding_ratio=float(d["padding_ratio"]),
        confidence=float(d["confidence"]),
        ee_pose_base=Pose.from_matrix(d["ee_pose_base"]),
        ee_point_camera=tuple(float(v) for v in d["ee_point_camera"]),
        sync_residual=float(d["sync_residual"]),
        teleop=None if tele is None else TeleopMetrics(tele["L_t"], tele["f_t"], tele["r_t"]),
        quality_flags=tuple(d["quality_flags"]),
        lineage=LineageTuple.from_dict(d["lineage"]),
    )


def canonical_json(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=True, allow_nan=False)


def serialize_record(r: RoiRecord) -> bytes:
    return (canonical_json(record_to_dict(r)) + "\n").encode("ascii")


def parse_record(line: bytes | str) -> RoiRecord:
    return record_from_dict(json.loads(line))


def write_records(records: Iterable[RoiRecord], destination) -> str:
    """Write records as canonical JSON Lines; return the SHA-256 of the bytes."""
    records = list(records)
    keys = [r.sort_key for r in records]
    if keys != sorted(keys):
        raise ValueError("records must be ordered by (timestamp, arm_id)")
    data = b"".join(serialize_record(r) for r in records)
    path = Path(destination)
    try:
        path.write_bytes(data)
    except OSError as exc:
        raise OSError(f"cannot write records to {path}: {exc}") from exc
    return hashlib.sha256(data).hexdigest()


def read_records(path) -> list[RoiRecord]:
    with open(path, "rb") as f:
        return [parse_record(line) for line in f if line.strip()]
