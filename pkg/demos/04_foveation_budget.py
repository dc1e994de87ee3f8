"""Why a crop-then-resize branch sees more detail, and what it costs in tokens."""
from fkroi.foveation import View, density_gain, global_footprint, token_accounting
from fkroi.records import Rect

w0, wg, w_roi, wr = 1280, 256, 256, 256
print(f"raw {w0} px -> global {wg} px: a {w_roi} px hand region keeps {global_footprint(w0, wg, w_roi):.1f} px")
print(f"the ROI branch resamples it to {wr} px: density gain {density_gain(w0, wg, w_roi, wr):.1f}x\n")

print(f"{'ROI size in raw':>16}  {'density gain':>12}")
for size in (128, 256, 384, 512):
    print(f"{size:>16}  {density_gain(w0, wg, size, wr):12.2f}")

views = [View(256), View(256, True, Rect(300, 200, 256, 256)), View(256, True, Rect(700, 260, 256, 256))]
stats = token_accounting(views, patch=16, raw_size=(1280, 720))
print(f"\nglobal + two ROI views at patch 16: {stats.tokens_per_view} tokens, total {stats.n_total}")
print(f"ROI token share {stats.roi_token_fraction} ({float(stats.roi_token_fraction):.3f})")
print(f"raw-frame area covered by ROI footprints {stats.duplication_overlap:.3f}")
