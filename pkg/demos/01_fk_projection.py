"""From joint angles to a hand-centric crop rectangle.

A two-link planar arm sits 1.5 m in front of a 640x480 camera. For a few
joint configurations we run forward kinematics, move the end-effector into
the camera frame, project it, and size the ROI from depth.
"""
import math

from fkroi.camera import to_camera_frame
from fkroi.kinematics import fk
from fkroi.replay import default_scene
from fkroi.roi import RoiPolicy, compute_geometry, roi_scale

scene = default_scene()
policy = RoiPolicy(beta=12.0, nominal_radius_r=0.2)  # 12 px toward the fingertip side
W, H = scene.image_size

print(f"camera {W}x{H}, fx={scene.calib.intrinsics.fx}, arm dof={scene.chain.dof}")
print(f"{'q (deg)':>16}  {'EE base (m)':>22}  {'Z_c':>5}  {'(u, v)':>16}  {'ell':>6}  crop rect")
for q in [(-0.6, 1.2), (0.0, 1.0), (0.6, 0.9), (1.2, 0.3)]:
    ee = fk(scene.chain, q)
    p_cam = to_camera_frame(scene.calib, ee.translation)
    geom, _ = compute_geometry(ee, scene.calib, policy, (H, W))
    deg = tuple(round(math.degrees(a)) for a in q)
    base = "(" + ", ".join(f"{v:+.3f}" for v in ee.translation) + ")"
    uv = f"({geom.projected_center[0]:.1f}, {geom.projected_center[1]:.1f})"
    print(f"{str(deg):>16}  {base:>22}  {p_cam[2]:5.2f}  {uv:>16}  {geom.ell:6.1f}  {tuple(geom.crop_rect)}")

# The inward offset moves the crop center along the projected tool axis.
ee = fk(scene.chain, (0.0, 1.0))
geom, _ = compute_geometry(ee, scene.calib, policy, (H, W))
du = geom.offset_center[0] - geom.projected_center[0]
dv = geom.offset_center[1] - geom.projected_center[1]
print(f"\ninward direction {tuple(round(x, 3) for x in geom.inward_dir)}, offset ({du:.2f}, {dv:.2f}) px")

# Crop size follows depth: the same hand seen from further away gets a smaller crop.
for z in (0.5, 1.0, 1.5, 3.0, 6.0):
    ell = roi_scale(scene.calib.intrinsics.fx, policy.nominal_radius_r, z, policy.alpha, policy.ell_min, policy.ell_max)
    print(f"Z_c = {z:3.1f} m -> ell = {ell:6.1f} px")
