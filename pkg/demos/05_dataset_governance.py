"""Package a dataset, regenerate it, and catch a one-pixel change.

Runs the same stages an operator would through the CLI: generate, validate,
package, then verify a fresh regeneration against the manifest.
"""
import json

from fkroi.cli import main
from fkroi.imageio import read_png, write_png
from fkroi.replay import default_scene, export_scene
from fkroi.roi import RoiPolicy

from _common import output_dir

out = output_dir("governance")
config = export_scene(default_scene(n_steps=40), RoiPolicy(), out / "inputs")


def fkroi(*args):
    print(f"$ fkroi {' '.join(args)}", flush=True)
    code = main([args[0], "--config", str(config), "-q", *args[1:]])
    print(f"  exit {code}", flush=True)
    return code


fkroi("generate", "--output", str(out / "original"))
fkroi("validate", "--output", str(out / "original"))
fkroi("package", "--output", str(out / "original"))
manifest = json.loads((out / "original" / "manifest.json").read_text())
print(f"  manifest {manifest['manifest_sha256'][:16]}..., lineage {manifest['lineage']}", flush=True)

fkroi("generate", "--output", str(out / "regenerated"))
fkroi("verify", "--output", str(out / "original"), "--against", str(out / "regenerated"))

victim = sorted((out / "regenerated" / "roi").glob("*.png"))[10]
pixels = read_png(victim)
pixels[0, 0, 0] ^= 1
write_png(victim, pixels)
print(f"  flipped one bit in {victim.name}", flush=True)
fkroi("verify", "--output", str(out / "original"), "--against", str(out / "regenerated"))
