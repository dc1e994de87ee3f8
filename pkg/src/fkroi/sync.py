"""Timestamp pairing of image frames with robot-state records."""
from __future__ import annotations

import bisect
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from .kinematics import Pose

DEFAULT_TOLERANCE = 0.010


class UnsortedStreamError(ValueError):
    def __init__(self, stream: str, index: int):
        super().__init__(f"{stream} stream is not sorted by time: first inversion at index {index}")
        self.stream = stream
        self.index = index


@dataclass(frozen=True)
class StateRecord:
    t: float
    robot_id: str
    arm_id: str
    q: tuple[float, ...]
    t_cmd: float | None = None
    cmd_pose: Pose | None = None
    mapped_operator_pose: Pose | None = None
    # free-form, logged only
    buffering_delay: Any = None

    def __post_init__(self):
        object.__setattr__(self, "q", tuple(float(v) for v in self.q))

    @property
    def has_teleop(self) -> bool:
        return not (self.t_cmd is None and self.cmd_pose is None and self.mapped_operator_pose is None)


@dataclass(frozen=True)
class FrameSample:
    image_t: float
    image_ref: Any
    state: StateRecord
    sync_residual: float
    within_tolerance: bool = True
    frame_index: int = 0


def _check_sorted(ts: Sequence[float], name: str, strict: bool) -> None:
    for i in range(1, len(ts)):
        if ts[i] < ts[i - 1] or (strict and ts[i] == ts[i - 1]):
            raise UnsortedStreamError(name, i)


def pair_streams(images, states: Sequence[StateRecord], tolerance: float = DEFAULT_TOLERANCE):
    """Pair each image with the nearest-in-time state.

    ``images`` is an ordered sequence of ``(t, ref)``. Ties go to the earlier
    state. Pairs outside ``tolerance`` are kept with ``within_tolerance``
    false; an image is unmatched only when there is no state at all.

    Returns ``(samples, unmatched)`` where ``unmatched`` counts unpaired
    images and states that no image selected.
    """
    images = list(images)
    img_ts = [float(t) for t, _ in images]
    st_ts = [s.t for s in states]
    _check_sorted(img_ts, "image", strict=False)
    _check_sorted(st_ts, "state", strict=True)

    if not states:
        return [], {"images": len(images), "states": 0}

    samples = []
    used = set()
    for idx, (t, ref) in enumerate(images):
        t = float(t)
        k = bisect.bisect_left(st_ts, t)
        if k == 0:
            j = 0
        elif k == len(st_ts):
            j = k - 1
        else:
            before, after = t - st_ts[k - 1], st_ts[k] - t
            j = k - 1 if before <= after else k
        residual = t - st_ts[j]
        used.add(j)
        samples.append(FrameSample(t, ref, states[j], residual, abs(residual) <= tolerance, idx))
    return samples, {"images": 0, "states": len(states) - len(used)}


def state_from_dict(d: dict) -> StateRecord:
    def pose(key):
        return Pose.from_matrix(d[key]) if d.get(key) is not None else None

    return StateRecord(
        t=float(d["t"]),
        robot_id=str(d.get("robot_id", "robot")),
        arm_id=str(d.get("arm_id", "arm")),
        q=tuple(d["q"]),
        t_cmd=None if d.get("t_cmd") is None else float(d["t_cmd"]),
        cmd_pose=pose("cmd_pose"),
        mapped_operator_pose=pose("mapped_operator_pose"),
        buffering_delay=d.get("buffering_delay"),
    )


def state_to_dict(s: StateRecord) -> dict:
    d = {"t": s.t, "robot_id": s.robot_id, "arm_id": s.arm_id, "q": list(s.q)}
    if s.t_cmd is not None:
        d["t_cmd"] = s.t_cmd
    if s.cmd_pose is not None:
        d["cmd_pose"] = s.cmd_pose.to_list()
    if s.mapped_operator_pose is not None:
        d["mapped_operator_pose"] = s.mapped_operator_pose.to_list()
    if s.buffering_delay is not None:
        d["buffering_delay"] = s.buffering_delay
    return d


def _read_jsonl(path):
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if line.strip():
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return out


def load_state_log(path) -> list[StateRecord]:
    return [state_from_dict(d) for d in _read_jsonl(path)]


def save_state_log(states, path) -> None:
    with open(path, "w") as f:
        for s in states:
            f.write(json.dumps(state_to_dict(s)) + "\n")


def load_image_index(path) -> list[tuple[float, Path]]:
    """Image index entries with paths resolved against the index's directory."""
    base = Path(path).parent
    return [(float(d["t"]), base / d["path"]) for d in _read_jsonl(path)]


def save_image_index(entries, path) -> None:
    with open(path, "w") as f:
        for t, rel in entries:
            f.write(json.dumps({"t": t, "path": str(rel)}) + "\n")


def group_by_arm(states) -> dict[tuple[str, str], list[StateRecord]]:
    groups: dict[tuple[str, str], list[StateRecord]] = {}
    for s in states:
        groups.setdefault((s.robot_id, s.arm_id), []).append(s)
    return groups
