"""Synthetic replay scenes with a ground-truth end-effector marker.

A scene renders a filled disk at the true projection of the FK end-effector
on a constant background. Running the normal pipeline over those frames and
locating the marker inside each ROI checks projection, offset and padding
logic against known geometry, optionally under injected latency or
extrinsic rotation drift.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .camera import (
    DEFAULT_DEPTH_EPSILON,
    CalibrationSet,
    Intrinsics,
    calibration_from_dict,
    load_calibration,
    project_base_point,
    save_calibration,
)
from .gates import GateReport, GateThresholds, aggregate_report, projection_validity_ratio
from .imageio import write_png
from .kinematics import (
    JointSpec,
    KinematicChain,
    Pose,
    chain_from_dict,
    compose,
    fk,
    load_chain,
    rotation_about,
    save_chain,
)
from .records import RoiRecord
from .roi import RoiPolicy, generate_frame, load_policy, save_policy
from .sync import DEFAULT_TOLERANCE, StateRecord, pair_streams, save_image_index, save_state_log


@dataclass(frozen=True)
class SyntheticScene:
    chain: KinematicChain
    calib: CalibrationSet
    trajectory: tuple[StateRecord, ...]
    marker_radius: float = 6.0
    background: tuple[int, int, int] = (32, 32, 32)
    marker_color: tuple[int, int, int] = (255, 255, 255)

    def __post_init__(self):
        object.__setattr__(self, "trajectory", tuple(self.trajectory))
        ts = [s.t for s in self.trajectory]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("trajectory timestamps must be strictly increasing")

    @property
    def image_size(self) -> tuple[int, int]:
        """``(width, height)`` in pixels."""
        return (self.calib.intrinsics.width, self.calib.intrinsics.height)

    @property
    def arm_id(self) -> str:
        return self.trajectory[0].arm_id if self.trajectory else "arm0"


def synth_trajectory(
    chain: KinematicChain,
    waypoints: Sequence[Sequence[float]],
    n_steps: int,
    t0: float = 0.0,
    dt: float = 0.05,
    robot_id: str = "sim",
    arm_id: str = "arm0",
) -> list[StateRecord]:
    """``n_steps`` states evenly spaced along the piecewise-linear joint path."""
    if n_steps < 2:
        raise ValueError("n_steps must be >= 2")
    if not dt > 0:
        raise ValueError("dt must be positive")
    wps = [np.asarray(w, dtype=np.float64) for w in waypoints]
    if not wps:
        raise ValueError("need at least one waypoint")
    for i, w in enumerate(wps):
        if w.shape != (chain.dof,):
            raise ValueError(f"waypoint {i} has {w.size} entries, chain expects {chain.dof}")
    if len(wps) == 1:
        wps = wps * 2
    segments = len(wps) - 1
    states = []
    for i in range(n_steps):
        s = i * segments / (n_steps - 1)
        k = min(int(s), segments - 1)
        frac = s - k
        q = wps[k] + frac * (wps[k + 1] - wps[k])
        states.append(StateRecord(t0 + i * dt, robot_id, arm_id, tuple(q)))
    return states


def marker_mask(scene: SyntheticScene, state: StateRecord, depth_epsilon: float = DEFAULT_DEPTH_EPSILON) -> np.ndarray:
    """Boolean ``H x W`` mask of pixels whose centers lie inside the marker disk."""
    W, H = scene.image_size
    mask = np.zeros((H, W), dtype=bool)
    proj = project_base_point(scene.calib, fk(scene.chain, state.q).translation, depth_epsilon)
    if not proj.valid:
        return mask
    r = scene.marker_radius
    x0, x1 = max(0, math.floor(proj.u - r)), min(W, math.ceil(proj.u + r) + 1)
    y0, y1 = max(0, math.floor(proj.v - r)), min(H, math.ceil(proj.v + r) + 1)
    if x1 <= x0 or y1 <= y0:
        return mask
    xs = np.arange(x0, x1) + 0.5 - proj.u
    ys = np.arange(y0, y1) + 0.5 - proj.v
    mask[y0:y1, x0:x1] = (xs[None, :] ** 2 + ys[:, None] ** 2) <= r * r
    return mask


def render_frame(scene: SyntheticScene, state: StateRecord, depth_epsilon: float = DEFAULT_DEPTH_EPSILON) -> np.ndarray:
    W, H = scene.image_size
    img = np.empty((H, W, 3), dtype=np.uint8)
    img[:] = scene.background
    img[marker_mask(scene, state, depth_epsilon)] = scene.marker_color
    return img


def marker_centroid(pixels: np.ndarray, background) -> tuple[float, float] | None:
    """Intensity-weighted centroid of non-background content, in the pixels' own coordinates."""
    weight = np.abs(pixels.astype(np.int64) - np.asarray(background, dtype=np.int64)).sum(axis=2).astype(np.float64)
    total = weight.sum()
    if total == 0:
        return None
    ys, xs = np.indices(weight.shape)
    return (float((weight * (xs + 0.5)).sum() / total), float((weight * (ys + 0.5)).sum() / total))


def roi_to_raw(point, rect, output_size: int) -> tuple[float, float]:
    x, y = point
    return (rect.u0 + x * rect.w / output_size, rect.v0 + y * rect.h / output_size)


def drift_calibration(calib: CalibrationSet, angle: float) -> CalibrationSet:
    """Rotate the camera frame by ``angle`` radians about its own y axis."""
    if angle == 0:
        return calib
    drift = Pose(rotation_about((0.0, 1.0, 0.0), angle), np.zeros(3))
    return CalibrationSet(
        calib.intrinsics, compose(drift, calib.extrinsics_cam_from_base), f"{calib.extrinsics_version}+drift{angle:g}"
    )


@dataclass(frozen=True)
class FrameCheck:
    frame_index: int
    valid_projection: bool
    in_frame_ratio: float
    residual: float | None  # marker centroid vs expected position, raw pixels
    coverage: float | None  # share of true marker pixels inside the crop


@dataclass
class ReplayResult:
    frames: list[FrameCheck]
    records: list[RoiRecord]
    report: GateReport
    latency_shift: float = 0.0
    rotation_drift: float = 0.0
    roi_images: list = field(default_factory=list, repr=False)

    @property
    def measured(self) -> list[float]:
        return [f.residual for f in self.frames if f.residual is not None]

    @property
    def mean_residual(self) -> float | None:
        m = self.measured
        return math.fsum(m) / len(m) if m else None

    @property
    def max_residual(self) -> float | None:
        return max(self.measured, default=None)

    @property
    def marker_lost(self) -> int:
        return sum(1 for f in self.frames if f.valid_projection and f.in_frame_ratio == 1.0 and f.residual is None)

    @property
    def projection_validity(self) -> float | None:
        return projection_validity_ratio(self.records)

    def summary(self) -> dict:
        cov = [f.coverage for f in self.frames if f.coverage is not None]
        return {
            "latency_shift": self.latency_shift,
            "extrinsics_rotation_drift": self.rotation_drift,
            "frames": len(self.frames),
            "frames_measured": len(self.measured),
            "marker_lost": self.marker_lost,
            "mean_residual_px": self.mean_residual,
            "max_residual_px": self.max_residual,
            "mean_coverage": math.fsum(cov) / len(cov) if cov else None,
            "projection_validity": self.projection_validity,
            "gates_passed": self.report.passed,
            "failed_gates": self.report.failed_gates,
        }


def end_to_end_check(
    scene: SyntheticScene,
    policy: RoiPolicy,
    perturbations: dict | None = None,
    *,
    tolerance: float = DEFAULT_TOLERANCE,
    thresholds: GateThresholds = GateThresholds(),
    camera_id: str = "cam0",
    keep_images: bool = False,
) -> ReplayResult:
    """Render the scene, run pairing and ROI generation, and measure the marker.

    ``perturbations`` may hold ``latency_shift`` (frames are stamped that many
    seconds early relative to the state log) and ``extrinsics_rotation_drift``
    (radians; applied to the calibration used for generation, not rendering).
    The residual is measured on frames whose crop lies fully inside the image.
    """
    perturbations = perturbations or {}
    shift = float(perturbations.get("latency_shift", 0.0))
    drift = float(perturbations.get("extrinsics_rotation_drift", 0.0))
    calib_used = drift_calibration(scene.calib, drift)
    arm = scene.arm_id

    frames = [render_frame(scene, s) for s in scene.trajectory]
    masks = [marker_mask(scene, s) for s in scene.trajectory]
    images = [(s.t - shift, i) for i, s in enumerate(scene.trajectory)]
    samples, _ = pair_streams(images, list(scene.trajectory), tolerance)

    checks, records, rois = [], [], []
    for sample in samples:
        idx = sample.image_ref
        record, roi = generate_frame(
            sample, scene.chain, calib_used, policy, arm, camera_id=camera_id, image=frames[idx]
        )
        record_idx = sample.frame_index
        residual = coverage = None
        if record.valid_projection:
            u0, v0, w, h = record.crop_rect
            m = masks[idx]
            n_marker = int(m.sum())
            if n_marker:
                inside = m[max(v0, 0) : max(v0 + h, 0), max(u0, 0) : max(u0 + w, 0)].sum()
                coverage = int(inside) / n_marker
            if record.in_frame_ratio == 1.0:
                c = marker_centroid(roi.pixels, scene.background)
                if c is not None:
                    cu, cv = roi_to_raw(c, record.crop_rect, policy.output_size)
                    eu, ev = record.projected_center
                    residual = math.hypot(cu - eu, cv - ev)
        checks.append(FrameCheck(record_idx, record.valid_projection, record.in_frame_ratio, residual, coverage))
        records.append(record)
        if keep_images:
            rois.append(roi)
    report = aggregate_report(records, samples, thresholds)
    return ReplayResult(checks, records, report, shift, drift, rois)


def degradation_curve(
    scene: SyntheticScene,
    policy: RoiPolicy,
    latency_shifts: Sequence[float] = (),
    rotation_drifts: Sequence[float] = (),
    **kwargs,
) -> list[dict]:
    """One summary row per perturbation level, latency sweep first."""
    rows = []
    for s in latency_shifts:
        rows.append(dict(end_to_end_check(scene, policy, {"latency_shift": s}, **kwargs).summary(), kind="latency_shift"))
    for d in rotation_drifts:
        rows.append(
            dict(end_to_end_check(scene, policy, {"extrinsics_rotation_drift": d}, **kwargs).summary(), kind="extrinsics_rotation_drift")
        )
    return rows


def planar_arm(l1: float = 0.3, l2: float = 0.25, version: str = "planar2-v1") -> KinematicChain:
    """Two revolute-z links in the base xy-plane; tool z axis points along the last link."""
    tool = Pose(rotation_about((0.0, 1.0, 0.0), math.pi / 2), (l2, 0.0, 0.0))
    return KinematicChain(
        (
            JointSpec(Pose(), "revolute", (0.0, 0.0, 1.0)),
            JointSpec(Pose.from_translation((l1, 0.0, 0.0)), "revolute", (0.0, 0.0, 1.0)),
            JointSpec(tool, "fixed"),
        ),
        version,
    )


def default_scene(n_steps: int = 200, dt: float = 0.05, marker_radius: float = 6.0) -> SyntheticScene:
    """Planar arm 1.5 m in front of a 640x480 camera, sweeping monotonically."""
    chain = planar_arm()
    intr = Intrinsics(600.0, 600.0, 320.0, 240.0, 640, 480, "sim-intr-v1")
    calib = CalibrationSet(intr, Pose.from_translation((0.0, 0.0, 1.5)), "sim-extr-v1")
    traj = synth_trajectory(chain, [(-0.6, 1.2), (0.6, 0.9)], n_steps, 0.0, dt, "sim", "arm0")
    return SyntheticScene(chain, calib, traj, marker_radius)


def _inline_or_path(value, base: Path, loader, from_dict):
    if isinstance(value, dict):
        return from_dict(value)
    return loader(base / value)


def scene_from_dict(d: dict, base_dir=".") -> tuple[SyntheticScene, RoiPolicy, dict]:
    """Parse a scene file into ``(scene, policy, perturbation grid)``.

    ``chain``, ``calibration`` and ``policy`` are inline objects or paths
    relative to ``base_dir``.
    """
    base = Path(base_dir)
    chain = _inline_or_path(d["chain"], base, load_chain, chain_from_dict)
    calib = _inline_or_path(d["calibration"], base, load_calibration, calibration_from_dict)
    policy = _inline_or_path(d.get("policy", {}), base, load_policy, RoiPolicy.from_dict)
    traj = synth_trajectory(
        chain,
        d["waypoints"],
        int(d.get("n_steps", 200)),
        float(d.get("t0", 0.0)),
        float(d.get("dt", 0.05)),
        str(d.get("robot_id", "sim")),
        str(d.get("arm_id", "arm0")),
    )
    scene = SyntheticScene(
        chain,
        calib,
        traj,
        float(d.get("marker_radius", 6.0)),
        tuple(d.get("background", (32, 32, 32))),
        tuple(d.get("marker_color", (255, 255, 255))),
    )
    grid = d.get("perturbations", {})
    return scene, policy, {
        "latency_shift": [float(x) for x in grid.get("latency_shift", [])],
        "extrinsics_rotation_drift": [float(x) for x in grid.get("extrinsics_rotation_drift", [])],
    }


def load_scene(path) -> tuple[SyntheticScene, RoiPolicy, dict]:
    path = Path(path)
    with open(path) as f:
        return scene_from_dict(json.load(f), path.parent)


def export_scene(
    scene: SyntheticScene,
    policy: RoiPolicy,
    root,
    *,
    latency_shift: float = 0.0,
    sync_tolerance: float = DEFAULT_TOLERANCE,
    output: str = "dataset",
) -> Path:
    """Write the scene as a regular input dataset and return its run config path.

    Layout: ``frames/*.png``, ``image_index.jsonl``, ``state_log.jsonl``,
    ``calibration.json``, ``chain.json``, ``policy.json``, ``config.json``.
    """
    root = Path(root)
    (root / "frames").mkdir(parents=True, exist_ok=True)
    index = []
    for i, s in enumerate(scene.trajectory):
        rel = f"frames/{i:08d}.png"
        write_png(root / rel, render_frame(scene, s))
        index.append((s.t - latency_shift, rel))
    save_image_index(index, root / "image_index.jsonl")
    save_state_log(scene.trajectory, root / "state_log.jsonl")
    save_calibration(scene.calib, root / "calibration.json")
    save_chain(scene.chain, root / "chain.json")
    save_policy(policy, root / "policy.json")
    config = {
        "state_log": "state_log.jsonl",
        "image_index": "image_index.jsonl",
        "calibration": "calibration.json",
        "chain": "chain.json",
        "policy": "policy.json",
        "output": output,
        "sync_tolerance": sync_tolerance,
        "dataset_id": "replay",
    }
    (root / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    return root / "config.json"
