"""Quality-gate statistics and pass/fail reports over ROI record streams.

Statistics that cannot be computed (empty stream, fewer than two valid
frames) are ``None``. A gate whose statistic is ``None`` is reported as
``n/a`` and does not pass. Thresholds are inclusive.
"""
from __future__ import annotations

import math
import statistics
from dataclasses import asdict, dataclass, field, fields
from typing import NamedTuple, Sequence

import numpy as np

from .records import RoiRecord, TeleopMetrics
from .sync import StateRecord

DEFAULT_DRIFT_WINDOW = 100


@dataclass(frozen=True)
class GateThresholds:
    max_sync_residual: float = 0.010
    min_projection_validity_ratio: float = 0.95
    max_jitter_pos: float = 20.0
    max_jitter_scale: float = 10.0
    min_mean_in_frame_ratio: float = 0.90
    max_mean_padding_ratio: float = 0.10

    def __post_init__(self):
        for name in ("min_projection_validity_ratio", "min_mean_in_frame_ratio", "max_mean_padding_ratio"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("max_sync_residual", "max_jitter_pos", "max_jitter_scale"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "GateThresholds":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown gate thresholds: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})


class Jitter(NamedTuple):
    pos: float
    scale: float
    pairs: int
    excluded: int


@dataclass(frozen=True)
class GateResult:
    name: str
    statistic: float | None
    threshold: float
    comparator: str
    passed: bool

    @property
    def status(self) -> str:
        if self.statistic is None:
            return "n/a"
        return "pass" if self.passed else "fail"


@dataclass
class GateReport:
    gates: list[GateResult]
    frame_counts: dict
    drift: list[dict] = field(default_factory=list)
    jitter_by_arm: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.gates)

    @property
    def failed_gates(self) -> list[str]:
        return [g.name for g in self.gates if not g.passed]

    def gate(self, name: str) -> GateResult:
        return next(g for g in self.gates if g.name == name)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "gates": [dict(asdict(g), status=g.status) for g in self.gates],
            "frame_counts": self.frame_counts,
            "jitter_by_arm": self.jitter_by_arm,
            # windowed means; proxies for calibration / sync drift, not direct measurements
            "drift_proxies": self.drift,
        }

    def summary(self) -> str:
        lines = [f"quality gates: {'PASS' if self.passed else 'FAIL'}"]
        for g in self.gates:
            stat = "n/a" if g.statistic is None else f"{g.statistic:.6g}"
            lines.append(f"  [{g.status:>4}] {g.name:<24} {stat:>12} {g.comparator} {g.threshold:g}")
        c = self.frame_counts
        lines.append(f"  frames: {c['total']} total, {c['valid_projection']} valid projection, {c['sync_flagged']} sync-flagged")
        return "\n".join(lines)


def projection_validity_ratio(records: Sequence[RoiRecord]) -> float | None:
    """Share of frames that project validly and overlap the image."""
    if not records:
        return None
    ok = sum(1 for r in records if r.valid_projection and r.in_frame_ratio > 0)
    return ok / len(records)


def jitter(records: Sequence[RoiRecord]) -> Jitter | None:
    """RMS frame-to-frame change of ROI center and scale for one arm.

    Consecutive pairs touching an invalid frame are skipped and counted in
    ``excluded``. Returns ``None`` when no valid pair exists.
    """
    d_pos, d_scale = [], []
    excluded = 0
    for prev, cur in zip(records, records[1:]):
        if not (prev.valid_projection and cur.valid_projection):
            excluded += 1
            continue
        d_pos.append(math.hypot(cur.offset_center[0] - prev.offset_center[0], cur.offset_center[1] - prev.offset_center[1]))
        d_scale.append(cur.ell - prev.ell)
    if not d_pos:
        return None
    pos = math.sqrt(math.fsum(d * d for d in d_pos) / len(d_pos))
    scale = math.sqrt(math.fsum(d * d for d in d_scale) / len(d_scale))
    return Jitter(pos, scale, len(d_pos), excluded)


def _by_arm(records):
    arms: dict[tuple[str, str], list[RoiRecord]] = {}
    for r in sorted(records, key=lambda r: r.sort_key):
        arms.setdefault((r.robot_id, r.arm_id), []).append(r)
    return arms


def _mean(xs):
    xs = list(xs)
    return math.fsum(xs) / len(xs) if xs else None


def drift_series(records: Sequence[RoiRecord], window: int = DEFAULT_DRIFT_WINDOW) -> list[dict]:
    if window < 1:
        raise ValueError("window must be >= 1")
    ordered = sorted(records, key=lambda r: r.sort_key)
    out = []
    for start in range(0, len(ordered), window):
        chunk = ordered[start : start + window]
        out.append(
            {
                "start": start,
                "count": len(chunk),
                "t_start": chunk[0].timestamp,
                "t_end": chunk[-1].timestamp,
                "mean_in_frame_ratio": _mean(r.in_frame_ratio for r in chunk),
                "mean_abs_sync_residual": _mean(abs(r.sync_residual) for r in chunk),
            }
        )
    return out


def _gate(name, stat, threshold, comparator) -> GateResult:
    if stat is None:
        return GateResult(name, None, threshold, comparator, False)
    ok = stat <= threshold if comparator == "<=" else stat >= threshold
    return GateResult(name, stat, threshold, comparator, bool(ok))


def aggregate_report(
    records: Sequence[RoiRecord],
    samples=None,
    thresholds: GateThresholds = GateThresholds(),
    window: int = DEFAULT_DRIFT_WINDOW,
) -> GateReport:
    """Evaluate every gate over ``records``.

    Sync residuals come from ``samples`` when given, otherwise from the
    residual stored on each record.
    """
    records = list(records)
    if samples is not None:
        residuals = [s.sync_residual for s in samples]
    else:
        residuals = [r.sync_residual for r in records]
    max_residual = max((abs(x) for x in residuals), default=None)

    arms = _by_arm(records)
    jit = {f"{robot}/{arm}": jitter(rs) for (robot, arm), rs in arms.items()}
    valid_jit = [j for j in jit.values() if j is not None]
    j_pos = max((j.pos for j in valid_jit), default=None)
    j_scale = max((j.scale for j in valid_jit), default=None)

    t = thresholds
    gates = [
        _gate("sync_residual", max_residual, t.max_sync_residual, "<="),
        _gate("projection_validity", projection_validity_ratio(records), t.min_projection_validity_ratio, ">="),
        _gate("jitter_pos", j_pos, t.max_jitter_pos, "<="),
        _gate("jitter_scale", j_scale, t.max_jitter_scale, "<="),
        _gate("mean_in_frame_ratio", _mean(r.in_frame_ratio for r in records), t.min_mean_in_frame_ratio, ">="),
        _gate("mean_padding_ratio", _mean(r.padding_ratio for r in records), t.max_mean_padding_ratio, "<="),
    ]
    counts = {
        "total": len(records),
        "valid_projection": sum(r.valid_projection for r in records),
        "sync_flagged": sum(abs(x) > t.max_sync_residual for x in residuals),
        "per_arm": {f"{robot}/{arm}": len(rs) for (robot, arm), rs in arms.items()},
    }
    jitter_by_arm = {k: (None if j is None else j._asdict()) for k, j in jit.items()}
    return GateReport(gates, counts, drift_series(records, window), jitter_by_arm)


def teleop_metrics(states: Sequence[StateRecord], window: int = 10) -> list[TeleopMetrics]:
    """Per-state latency, control frequency and mapping residual.

    ``frequency`` is ``1 / median`` of the last ``window`` inter-state gaps.
    Missing teleop fields give ``None`` for the dependent metric.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    ts = [s.t for s in states]
    gaps = [b - a for a, b in zip(ts, ts[1:])]
    out = []
    for i, s in enumerate(states):
        latency = None if s.t_cmd is None else s.t - s.t_cmd
        recent = gaps[max(0, i - window) : i]
        freq = None
        if recent:
            med = statistics.median(recent)
            freq = 1.0 / med if med > 0 else None
        residual = None
        if s.cmd_pose is not None and s.mapped_operator_pose is not None:
            residual = float(np.linalg.norm(s.mapped_operator_pose.translation - s.cmd_pose.translation))
        out.append(TeleopMetrics(latency, freq, residual))
    return out
