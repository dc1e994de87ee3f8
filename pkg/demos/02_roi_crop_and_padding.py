"""What happens when the hand leaves the frame.

The crop rectangle is never clamped to the image. Out-of-image pixels are
zero, and the in-frame/padding ratios say how much of the crop is real.
The ROI images are written as PNGs so they can be inspected.
"""
from fkroi.camera import CalibrationSet
from fkroi.imageio import write_png
from fkroi.kinematics import Pose
from fkroi.replay import SyntheticScene, default_scene, render_frame
from fkroi.roi import RoiPolicy, generate_frame
from fkroi.sync import FrameSample, StateRecord

from _common import output_dir

out = output_dir("padding")
base = default_scene()
# camera shifted so the arm base images near the right edge
calib = CalibrationSet(base.calib.intrinsics, Pose.from_translation((0.5, 0.0, 1.5)), "shifted-v1")
policy = RoiPolicy()

for i, q1 in enumerate([1.2, 0.9, 0.6, 0.3, 0.0]):
    state = StateRecord(i * 0.05, "sim", "arm0", (q1, 0.0))
    frame = render_frame(SyntheticScene(base.chain, calib, [state]), state)
    sample = FrameSample(state.t, None, state, 0.0, True, i)
    rec, roi = generate_frame(sample, base.chain, calib, policy, "arm0", image=frame)
    write_png(out / f"roi_{i}_q1_{q1:.1f}.png", roi.pixels)
    u, v = rec.projected_center
    print(
        f"q1={q1:.1f}  center ({u:6.1f}, {v:6.1f})  rect {tuple(rec.crop_rect)}  "
        f"in-frame {rec.in_frame_ratio:.3f}  padding {rec.padding_ratio:.3f}  flags {list(rec.quality_flags)}"
    )
print(f"\nimage width {calib.intrinsics.width}; ROI images written to {out}")
