"""Hand-centric ROI generation from FK-projected end-effector poses.

Pixel convention: pixel ``(x, y)`` covers ``[x, x+1) x [y, y+1)`` so its
center sits at ``(x + 0.5, y + 0.5)``; images are ``H x W x C`` arrays.
All quantization uses ``floor(x + 0.5)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .camera import DEFAULT_DEPTH_EPSILON, CalibrationSet, project, to_camera_frame
from .kinematics import KinematicChain, Pose, fk, transform_point
from .records import (
    FLAG_BOUNDARY_HEAVY,
    FLAG_OUT_OF_FRAME,
    FLAG_PROJECTION_INVALID,
    FLAG_SYNC,
    LineageTuple,
    Rect,
    RoiRecord,
    TeleopMetrics,
)
from .sync import FrameSample

ROI_GENERATOR_VERSION = "fkroi-roi/1"
ZERO_DIRECTION = (0.0, 0.0)
MIN_DISPLACEMENT_PX = 1e-6


@dataclass(frozen=True)
class RoiPolicy:
    beta: float = 0.0
    tip_offset_delta: float = 0.05
    alpha: float = 1.0
    nominal_radius_r: float = 0.08
    ell_min: float = 64.0
    ell_max: float = 512.0
    aspect_w: float = 1.0
    aspect_h: float = 1.0
    output_size: int = 256
    sync_tau: float = 0.02
    policy_version: str = "v1"
    # "depth" uses the clip law; "fixed" uses clip(fixed_ell, ell_min, ell_max)
    scaling: str = "depth"
    fixed_ell: float | None = None

    def __post_init__(self):
        if not (0 < self.ell_min <= self.ell_max):
            raise ValueError(f"need 0 < ell_min <= ell_max, got {self.ell_min}, {self.ell_max}")
        if not (self.aspect_w > 0 and self.aspect_h > 0):
            raise ValueError("aspect multipliers must be positive")
        if not (isinstance(self.output_size, int) and self.output_size > 0):
            raise ValueError(f"output_size must be a positive int, got {self.output_size!r}")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.sync_tau <= 0:
            raise ValueError("sync_tau must be positive")
        if self.scaling not in ("depth", "fixed"):
            raise ValueError(f"scaling must be 'depth' or 'fixed', got {self.scaling!r}")
        if self.scaling == "fixed" and self.fixed_ell is None:
            raise ValueError("fixed scaling requires fixed_ell")

    @classmethod
    def from_dict(cls, d: dict) -> "RoiPolicy":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown policy fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def load_policy(path) -> RoiPolicy:
    with open(path) as f:
        return RoiPolicy.from_dict(json.load(f))


def save_policy(policy: RoiPolicy, path) -> None:
    Path(path).write_text(json.dumps(policy.to_dict(), indent=2) + "\n")


@dataclass(frozen=True)
class RoiGeometry:
    projected_center: tuple[float, float] | None
    inward_dir: tuple[float, float]
    offset_center: tuple[float, float] | None
    ell: float | None
    crop_rect: Rect | None
    in_frame_ratio: float
    padding_ratio: float
    confidence: float
    valid_projection: bool


@dataclass(frozen=True)
class RoiImage:
    pixels: np.ndarray
    source_rect: Rect | None


def _round(x: float) -> int:
    return math.floor(x + 0.5)


def inward_direction(
    calib: CalibrationSet, ee_pose: Pose, tip_offset_delta: float, depth_epsilon: float = DEFAULT_DEPTH_EPSILON
) -> tuple[float, float]:
    """Image-plane unit vector from the projected wrist toward the projected tip.

    The tip is ``tip_offset_delta`` meters along +z of the end-effector frame.
    Degenerate geometry returns ``ZERO_DIRECTION`` so no offset is applied.
    """
    intr = calib.intrinsics
    wrist = project(intr, to_camera_frame(calib, transform_point(ee_pose, (0.0, 0.0, 0.0))), depth_epsilon)
    tip = project(intr, to_camera_frame(calib, transform_point(ee_pose, (0.0, 0.0, tip_offset_delta))), depth_epsilon)
    if not (wrist.valid and tip.valid):
        return ZERO_DIRECTION
    du, dv = tip.u - wrist.u, tip.v - wrist.v
    n = math.hypot(du, dv)
    if not n >= MIN_DISPLACEMENT_PX:
        return ZERO_DIRECTION
    return (du / n, dv / n)


def offset_center(center, d_in, beta: float) -> tuple[float, float]:
    u, v = center
    if beta == 0 or tuple(d_in) == ZERO_DIRECTION:
        return (float(u), float(v))
    return (u + beta * d_in[0], v + beta * d_in[1])


def roi_scale(fx: float, r: float, z_c: float, alpha: float, ell_min: float, ell_max: float) -> float:
    """Depth-adaptive ROI side length ``clip(alpha * fx * r / z_c, ell_min, ell_max)``."""
    if not z_c > 0:
        raise ValueError(f"roi_scale needs positive depth, got {z_c}; use the invalid-frame path")
    ell = alpha * fx * r / z_c
    if not ell > ell_min:
        return float(ell_min)
    if ell >= ell_max:
        return float(ell_max)
    return float(ell)


def crop_bounds(center, ell: float, aspect_w: float = 1.0, aspect_h: float = 1.0) -> Rect:
    if not ell > 0:
        raise ValueError(f"ell must be positive, got {ell}")
    uc, vc = center
    w = max(1, _round(ell * aspect_w))
    h = max(1, _round(ell * aspect_h))
    return Rect(_round(uc - w / 2), _round(vc - h / 2), w, h)


def extract_roi(image: np.ndarray, rect: Rect) -> tuple[np.ndarray, float, float]:
    """Copy ``rect`` out of ``image``, zero-filling everything outside it.

    Returns ``(patch, in_frame_ratio, padding_ratio)``; the ratios are exact
    integer pixel-count fractions and always sum to 1.
    """
    if image.size == 0:
        raise ValueError("image is empty")
    H, W = image.shape[:2]
    u0, v0, w, h = rect
    patch = np.zeros((h, w) + image.shape[2:], dtype=image.dtype)
    x0, x1 = max(u0, 0), min(u0 + w, W)
    y0, y1 = max(v0, 0), min(v0 + h, H)
    inside = max(0, x1 - x0) * max(0, y1 - y0)
    if inside:
        patch[y0 - v0 : y1 - v0, x0 - u0 : x1 - u0] = image[y0:y1, x0:x1]
    in_frame = inside / (w * h)
    return patch, in_frame, 1.0 - in_frame


def _overlap_weights(n_src: int, n_out: int) -> np.ndarray:
    # Coordinates scaled by n_src * n_out so every footprint edge is an integer:
    # source pixel k spans [k*n_out, (k+1)*n_out), output j spans [j*n_src, (j+1)*n_src).
    src = np.arange(n_src, dtype=np.int64) * n_out
    out = np.arange(n_out, dtype=np.int64) * n_src
    lo = np.maximum(out[:, None], src[None, :])
    hi = np.minimum(out[:, None] + n_src, src[None, :] + n_out)
    return np.clip(hi - lo, 0, None)


def resize_area(patch: np.ndarray, out: int) -> np.ndarray:
    """Exact area resampling of an 8-bit patch to ``out x out``.

    Each output pixel is the overlap-weighted mean of the source pixels under
    its footprint. Weights are integers, so the weighted sums are computed
    exactly and rounded half away from zero with integer arithmetic; the
    result is byte-identical across runs and BLAS builds.
    """
    h, w = patch.shape[:2]
    if h < 1 or w < 1:
        raise ValueError("patch must be at least 1x1")
    squeeze = patch.ndim == 2
    src = patch[:, :, None] if squeeze else patch
    if h == out and w == out:
        return patch.copy()
    wy = _overlap_weights(h, out).astype(np.float64)
    wx = _overlap_weights(w, out).astype(np.float64)
    # integer-valued float64 stays exact while |sum| < 2**53
    if 255.0 * h * w >= 2.0**53:
        raise ValueError(f"patch {w}x{h} too large for exact resampling to {out}")
    rows = np.tensordot(wy, src.astype(np.float64), axes=(1, 0))  # (out, w, C)
    num = np.tensordot(rows, wx, axes=(1, 1))  # (out, C, out)
    num = np.rint(num).astype(np.int64).transpose(0, 2, 1)
    den = h * w
    res = np.clip((2 * num + den) // (2 * den), 0, 255).astype(np.uint8)
    return res[:, :, 0] if squeeze else res


def confidence(valid_projection: bool, in_frame_ratio: float, sync_residual: float, sync_tau: float) -> float:
    if sync_tau <= 0:
        raise ValueError("sync_tau must be positive")
    if not valid_projection:
        return 0.0
    return in_frame_ratio * max(0.0, 1.0 - abs(sync_residual) / sync_tau)


def make_lineage(chain: KinematicChain, calib: CalibrationSet, policy: RoiPolicy) -> LineageTuple:
    return LineageTuple(
        intrinsics_ver=calib.intrinsics.version,
        extrinsics_ver=calib.extrinsics_version,
        fk_ver=chain.version,
        roi_generator_ver=ROI_GENERATOR_VERSION,
        crop_offset_ver=policy.policy_version,
        resize_policy=f"area-exact/{policy.output_size}",
    )


def compute_geometry(
    ee_pose: Pose,
    calib: CalibrationSet,
    policy: RoiPolicy,
    image_shape,
    sync_residual: float = 0.0,
    depth_epsilon: float = DEFAULT_DEPTH_EPSILON,
) -> tuple[RoiGeometry, np.ndarray]:
    """Geometry-only part of frame generation; also returns the camera-frame point."""
    p_cam = to_camera_frame(calib, ee_pose.translation)
    proj = project(calib.intrinsics, p_cam, depth_epsilon)
    if not proj.valid:
        return RoiGeometry(None, ZERO_DIRECTION, None, None, None, 0.0, 1.0, 0.0, False), p_cam
    d_in = inward_direction(calib, ee_pose, policy.tip_offset_delta, depth_epsilon)
    center = offset_center(proj.uv, d_in, policy.beta)
    if policy.scaling == "fixed":
        ell = float(min(max(policy.fixed_ell, policy.ell_min), policy.ell_max))
    else:
        ell = roi_scale(
            calib.intrinsics.fx, policy.nominal_radius_r, proj.depth_z, policy.alpha, policy.ell_min, policy.ell_max
        )
    rect = crop_bounds(center, ell, policy.aspect_w, policy.aspect_h)
    H, W = image_shape[:2]
    x_in = max(0, min(rect.u0 + rect.w, W) - max(rect.u0, 0))
    y_in = max(0, min(rect.v0 + rect.h, H) - max(rect.v0, 0))
    in_frame = (x_in * y_in) / rect.area
    conf = confidence(True, in_frame, sync_residual, policy.sync_tau)
    geom = RoiGeometry(proj.uv, d_in, center, ell, rect, in_frame, 1.0 - in_frame, conf, True)
    return geom, p_cam


def _load_image(ref) -> np.ndarray:
    if isinstance(ref, np.ndarray):
        return ref
    from .imageio import read_png

    return read_png(ref)


def generate_frame(
    sample: FrameSample,
    chain: KinematicChain,
    calib: CalibrationSet,
    policy: RoiPolicy,
    arm_id: str,
    *,
    camera_id: str = "cam0",
    depth_epsilon: float = DEFAULT_DEPTH_EPSILON,
    image: np.ndarray | None = None,
    teleop: TeleopMetrics | None = None,
    lineage: LineageTuple | None = None,
) -> tuple[RoiRecord, RoiImage]:
    """Run the full per-frame pipeline for one arm.

    Frames whose end-effector does not project (behind the camera) are still
    emitted: all-zero ROI image, null geometry, confidence 0.
    """
    state = sample.state
    where = f"frame {sample.frame_index} (t={sample.image_t})"
    if state.arm_id != arm_id:
        raise ValueError(f"{where}: no joint state for arm {arm_id!r} (state is for {state.arm_id!r})")
    try:
        ee_pose = fk(chain, state.q)
    except ValueError as exc:
        raise ValueError(f"{where}, arm {arm_id!r}: {exc}") from exc

    if image is None:
        image = _load_image(sample.image_ref)
    geom, p_cam = compute_geometry(ee_pose, calib, policy, image.shape, sample.sync_residual, depth_epsilon)

    out = policy.output_size
    flags = []
    if not sample.within_tolerance:
        flags.append(FLAG_SYNC)
    if geom.valid_projection:
        patch, in_frame, padding = extract_roi(image, geom.crop_rect)
        pixels = resize_area(patch, out)
        if padding > 0.5:
            flags.append(FLAG_BOUNDARY_HEAVY)
        if in_frame == 0:
            flags.append(FLAG_OUT_OF_FRAME)
    else:
        pixels = np.zeros((out, out) + image.shape[2:], dtype=np.uint8)
        flags.append(FLAG_PROJECTION_INVALID)

    record = RoiRecord(
        timestamp=sample.image_t,
        frame_index=sample.frame_index,
        camera_id=camera_id,
        robot_id=state.robot_id,
        arm_id=arm_id,
        valid_projection=geom.valid_projection,
        projected_center=geom.projected_center,
        offset_center=geom.offset_center,
        crop_rect=geom.crop_rect,
        ell=geom.ell,
        in_frame_ratio=geom.in_frame_ratio,
        padding_ratio=geom.padding_ratio,
        confidence=geom.confidence,
        ee_pose_base=ee_pose,
        ee_point_camera=tuple(float(c) for c in p_cam),
        sync_residual=sample.sync_residual,
        teleop=teleop,
        quality_flags=tuple(flags),
        lineage=lineage or make_lineage(chain, calib, policy),
    )
    return record, RoiImage(pixels, geom.crop_rect)
