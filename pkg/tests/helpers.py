import math
from fractions import Fraction

import numpy as np

from fkroi.kinematics import Pose
from fkroi.records import LineageTuple, Rect, RoiRecord

LINEAGE = LineageTuple("intr-1", "extr-1", "fk-1", "gen-1", "crop-1", "area-exact/256")


def make_record(
    t=0.0,
    center=(100.0, 100.0),
    ell=64.0,
    valid=True,
    in_frame=1.0,
    residual=0.0,
    arm="arm0",
    frame_index=None,
    confidence=1.0,
    lineage=LINEAGE,
    flags=(),
    teleop=None,
):
    if frame_index is None:
        frame_index = int(round(t * 1000))
    if valid:
        rect = Rect(math.floor(center[0] - ell / 2 + 0.5), math.floor(center[1] - ell / 2 + 0.5), int(ell), int(ell))
        geom = dict(projected_center=tuple(center), offset_center=tuple(center), crop_rect=rect, ell=ell)
    else:
        geom = dict(projected_center=None, offset_center=None, crop_rect=None, ell=None)
        in_frame, confidence = 0.0, 0.0
    return RoiRecord(
        timestamp=t,
        frame_index=frame_index,
        camera_id="cam0",
        robot_id="robot",
        arm_id=arm,
        valid_projection=valid,
        in_frame_ratio=in_frame,
        padding_ratio=1.0 - in_frame,
        confidence=confidence,
        ee_pose_base=Pose.from_translation((0.1, 0.2, 0.3)),
        ee_point_camera=(0.1, 0.2, 1.3),
        sync_residual=residual,
        teleop=teleop,
        quality_flags=flags,
        lineage=lineage,
        **geom,
    )


def random_rotation(rng):
    """Uniform random rotation from a normalized Gaussian quaternion."""
    w, x, y, z = rng.normal(size=4)
    n = math.sqrt(w * w + x * x + y * y + z * z)
    w, x, y, z = w / n, x / n, y / n, z / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def random_pose(rng, scale=1.0):
    return Pose(random_rotation(rng), rng.uniform(-scale, scale, size=3))


def brute_extract(image, rect):
    u0, v0, w, h = rect
    H, W = image.shape[:2]
    patch = np.zeros((h, w, image.shape[2]), dtype=image.dtype)
    inside = 0
    for y in range(h):
        for x in range(w):
            sx, sy = u0 + x, v0 + y
            if 0 <= sx < W and 0 <= sy < H:
                patch[y, x] = image[sy, sx]
                inside += 1
    return patch, Fraction(inside, w * h)


def block_mean_oracle(patch, out):
    """Integer-factor downscale: mean of each block, rounded half up."""
    h, w, c = patch.shape
    ky, kx = h // out, w // out
    res = np.zeros((out, out, c), dtype=np.uint8)
    for i in range(out):
        for j in range(out):
            for ch in range(c):
                s = int(patch[i * ky : (i + 1) * ky, j * kx : (j + 1) * kx, ch].astype(np.int64).sum())
                mean = Fraction(s, kx * ky)
                res[i, j, ch] = math.floor(mean + Fraction(1, 2))
    return res
