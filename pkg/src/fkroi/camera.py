"""Pinhole intrinsics, base->camera extrinsics, and point projection."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kinematics import Pose, transform_point

DEFAULT_DEPTH_EPSILON = 1e-6


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    version: str = "unversioned"

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"resolution must be positive, got {self.width}x{self.height}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(f"principal point ({self.cx}, {self.cy}) outside the sensor")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class CalibrationSet:
    intrinsics: Intrinsics
    extrinsics_cam_from_base: Pose
    extrinsics_version: str = "unversioned"


@dataclass(frozen=True)
class Projection:
    """Pixel coordinates of a camera-frame point.

    When ``valid`` is false, ``u`` and ``v`` are NaN and only ``depth_z`` is
    meaningful.
    """

    u: float
    v: float
    depth_z: float
    valid: bool

    @property
    def uv(self) -> tuple[float, float]:
        return (self.u, self.v)


def to_camera_frame(calib: CalibrationSet, p_base) -> np.ndarray:
    return transform_point(calib.extrinsics_cam_from_base, p_base)


def project(intr: Intrinsics, p_cam, depth_epsilon: float = DEFAULT_DEPTH_EPSILON) -> Projection:
    x, y, z = (float(c) for c in p_cam)
    if not z > depth_epsilon:
        return Projection(math.nan, math.nan, z, False)
    u = intr.fx * x / z + intr.cx
    v = intr.fy * y / z + intr.cy
    if not (math.isfinite(u) and math.isfinite(v)):
        return Projection(math.nan, math.nan, z, False)
    return Projection(u, v, z, True)


def project_base_point(calib: CalibrationSet, p_base, depth_epsilon: float = DEFAULT_DEPTH_EPSILON) -> Projection:
    return project(calib.intrinsics, to_camera_frame(calib, p_base), depth_epsilon)


def calibration_from_dict(data: dict) -> CalibrationSet:
    if data.get("distortion") is not None:
        raise ValueError("lens distortion is not supported; 'distortion' must be null")
    i = data["intrinsics"]
    intr = Intrinsics(
        fx=float(i["fx"]),
        fy=float(i["fy"]),
        cx=float(i["cx"]),
        cy=float(i["cy"]),
        width=int(i["width"]),
        height=int(i["height"]),
        version=str(i.get("version", "unversioned")),
    )
    e = data["extrinsics"]
    return CalibrationSet(intr, Pose.from_matrix(e["cam_from_base"]), str(e.get("version", "unversioned")))


def calibration_to_dict(calib: CalibrationSet) -> dict:
    i = calib.intrinsics
    return {
        "intrinsics": {
            "fx": i.fx,
            "fy": i.fy,
            "cx": i.cx,
            "cy": i.cy,
            "width": i.width,
            "height": i.height,
            "version": i.version,
        },
        "distortion": None,
        "extrinsics": {
            "cam_from_base": calib.extrinsics_cam_from_base.to_list(),
            "version": calib.extrinsics_version,
        },
    }


def load_calibration(path) -> CalibrationSet:
    with open(path) as f:
        return calibration_from_dict(json.load(f))


def save_calibration(calib: CalibrationSet, path) -> None:
    Path(path).write_text(json.dumps(calibration_to_dict(calib), indent=2) + "\n")
