"""Rigid transforms and forward kinematics for simple serial chains.

Rotations are stored as 3x3 matrices and checked on construction. A chain is
an ordered list of joints, each with a fixed parent->joint transform followed
by a motion about (revolute) or along (prismatic) a unit axis.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

ORTHONORMAL_TOL = 1e-9
AXIS_TOL = 1e-9

JOINT_KINDS = ("revolute", "prismatic", "fixed")


class DimensionError(ValueError):
    """Joint vector length does not match the chain's degrees of freedom."""


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Pose:
    """Element of SE(3): ``p -> rotation @ p + translation`` (meters)."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = _frozen(self.rotation)
        t = _frozen(self.translation)
        if R.shape != (3, 3) or t.shape != (3,):
            raise ValueError(f"bad pose shapes {R.shape}, {t.shape}")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("pose contains non-finite values")
        err = np.abs(R.T @ R - np.eye(3)).max()
        det = np.linalg.det(R)
        if err > ORTHONORMAL_TOL or abs(det - 1.0) > ORTHONORMAL_TOL:
            raise ValueError(
                f"rotation is not orthonormal with det +1 (|R^T R - I|={err:.3g}, det={det:.12g})"
            )
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        """Build from a 4x4 homogeneous matrix or 16 row-major floats."""
        m = np.asarray(m, dtype=np.float64)
        if m.shape == (16,):
            m = m.reshape(4, 4)
        if m.shape != (4, 4):
            raise ValueError(f"expected 4x4 or 16 values, got shape {m.shape}")
        if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise ValueError(f"last row of a homogeneous transform must be [0,0,0,1], got {m[3].tolist()}")
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_translation(cls, t) -> "Pose":
        return cls(np.eye(3), t)

    @classmethod
    def from_axis_angle(cls, axis, angle: float, translation=(0.0, 0.0, 0.0)) -> "Pose":
        return cls(rotation_about(axis, angle), translation)

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def to_list(self) -> list[float]:
        """16 row-major floats, the on-disk transform representation."""
        return [float(x) for x in self.matrix.reshape(-1)]

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)

    def __matmul__(self, other: "Pose") -> "Pose":
        return compose(self, other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(
            np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation.tobytes()))

    def __repr__(self):
        return f"Pose(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, rtol=0, atol=atol)
            and np.allclose(self.translation, other.translation, rtol=0, atol=atol)
        )


def compose(a: Pose, b: Pose) -> Pose:
    """Return ``a o b``, i.e. apply ``b`` first and then ``a``."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def transform_point(T: Pose, p) -> np.ndarray:
    return T.rotation @ np.asarray(p, dtype=np.float64) + T.translation


def rotation_about(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    x, y, z = np.asarray(axis, dtype=np.float64)
    K = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + math.sin(angle) * K + (1.0 - math.cos(angle)) * (K @ K)


@dataclass(frozen=True)
class JointSpec:
    fixed_transform: Pose
    kind: str = "fixed"
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if self.kind not in JOINT_KINDS:
            raise ValueError(f"unknown joint kind {self.kind!r}")
        axis = tuple(float(a) for a in self.axis)
        if len(axis) != 3:
            raise ValueError("joint axis must have 3 components")
        if self.kind != "fixed" and abs(math.sqrt(sum(a * a for a in axis)) - 1.0) > AXIS_TOL:
            raise ValueError(f"joint axis {axis} is not unit length")
        object.__setattr__(self, "axis", axis)

    def motion(self, value: float) -> Pose:
        if self.kind == "revolute":
            return Pose(rotation_about(self.axis, value), np.zeros(3))
        if self.kind == "prismatic":
            return Pose(np.eye(3), np.asarray(self.axis) * value)
        return Pose()


@dataclass(frozen=True)
class KinematicChain:
    joints: tuple[JointSpec, ...]
    version: str = "unversioned"

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))

    @property
    def dof(self) -> int:
        return sum(1 for j in self.joints if j.kind != "fixed")

    def __add__(self, other: "KinematicChain") -> "KinematicChain":
        return KinematicChain(self.joints + other.joints, f"{self.version}+{other.version}")


def fk(chain: KinematicChain, q: Sequence[float]) -> Pose:
    """End-effector pose in the base frame for joint vector ``q``.

    Joint values are radians for revolute joints and meters for prismatic
    ones; fixed joints consume no entry of ``q``.
    """
    q = [float(v) for v in q]
    if len(q) != chain.dof:
        raise DimensionError(f"joint vector has {len(q)} entries, chain expects {chain.dof}")
    T = Pose()
    i = 0
    for joint in chain.joints:
        T = compose(T, joint.fixed_transform)
        if joint.kind != "fixed":
            T = compose(T, joint.motion(q[i]))
            i += 1
    return T


def chain_from_dict(data: dict) -> KinematicChain:
    joints = []
    for i, j in enumerate(data["joints"]):
        try:
            joints.append(
                JointSpec(
                    fixed_transform=Pose.from_matrix(j["transform"]),
                    kind=j["kind"],
                    axis=tuple(j.get("axis", (0.0, 0.0, 1.0))),
                )
            )
        except (KeyError, ValueError) as exc:
            raise ValueError(f"joint {i}: {exc}") from exc
    return KinematicChain(tuple(joints), str(data.get("version", "unversioned")))


def chain_to_dict(chain: KinematicChain) -> dict:
    return {
        "version": chain.version,
        "joints": [
            {"kind": j.kind, "axis": list(j.axis), "transform": j.fixed_transform.to_list()}
            for j in chain.joints
        ],
    }


def load_chain(path) -> KinematicChain:
    with open(path) as f:
        return chain_from_dict(json.load(f))


def save_chain(chain: KinematicChain, path) -> None:
    Path(path).write_text(json.dumps(chain_to_dict(chain), indent=2) + "\n")
