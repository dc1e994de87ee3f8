"""Validate the geometry against synthetic ground truth before touching hardware.

A white disk is drawn where the end-effector really projects. If projection,
offset and crop logic are right, the disk sits at the ROI center. Then we
inject latency and calibration drift and watch the residual grow.
"""
from fkroi.replay import default_scene, degradation_curve, end_to_end_check
from fkroi.roi import RoiPolicy

scene = default_scene(n_steps=200)
policy = RoiPolicy(beta=0.0)

base = end_to_end_check(scene, policy)
print(f"{len(base.frames)} frames, projection validity {base.projection_validity}")
print(f"marker-to-center residual: mean {base.mean_residual:.3f} px, max {base.max_residual:.3f} px")
print(f"all gates pass: {base.report.passed}\n")

rows = degradation_curve(scene, policy, [0.0, 0.05, 0.1, 0.15, 0.2], [0.001, 0.002, 0.005], tolerance=1.0)
print(f"{'perturbation':<28} {'mean px':>8} {'max px':>8}  failed gates")
for r in rows:
    level = r["latency_shift"] if r["kind"] == "latency_shift" else r["extrinsics_rotation_drift"]
    unit = "s" if r["kind"] == "latency_shift" else "rad"
    label = f"{r['kind']} {level:g} {unit}"
    print(f"{label:<28} {r['mean_residual_px']:8.3f} {r['max_residual_px']:8.3f}  {', '.join(r['failed_gates']) or '-'}")
