"""Command-line entry point.

    fkroi <generate|validate|package|verify|analyze|replay> --config PATH
          [--output DIR] [--arm ID] [--threads N]

Exit status: 0 success, 1 gate or verification failure, 2 input error.
Logs and summaries go to stderr; results are written to files.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import jsonschema

from . import pipeline
from .manifest import MissingArtifactError
from .pipeline import InputError

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
log = logging.getLogger("fkroi")


def _generate(cfg, args):
    pipeline.run_generate(cfg)
    return EXIT_OK


def _validate(cfg, args):
    report = pipeline.run_validate(cfg)
    print(report.summary(), file=sys.stderr)
    if not report.passed:
        log.error("validate: failed gates: %s", ", ".join(report.failed_gates))
        return EXIT_FAIL
    return EXIT_OK


def _package(cfg, args):
    m = pipeline.run_package(cfg)
    log.info("package: manifest %s (%d records, %d ROI images)", m.checksum, m.record_count, len(m.roi_files))
    return EXIT_OK


def _verify(cfg, args):
    report = pipeline.run_verify(cfg, args.manifest, args.against)
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    print(report.summary(), file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_FAIL


def _analyze(cfg, args):
    result = pipeline.run_analyze(cfg)
    cfg.output.mkdir(parents=True, exist_ok=True)
    (cfg.output / "analysis.json").write_text(json.dumps(result, indent=2) + "\n")
    print(pipeline.format_analysis(result))
    return EXIT_OK


def _replay(cfg, args):
    from .replay import degradation_curve, end_to_end_check, export_scene, load_scene

    if cfg.scene is None or not cfg.scene.is_file():
        raise InputError(f"replay needs a scene file; got {cfg.scene}")
    try:
        scene, policy, grid = load_scene(cfg.scene)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"cannot parse scene {cfg.scene}: {exc}") from exc

    # exercise the regular on-disk pipeline on the exported scene
    scene_cfg_path = export_scene(scene, policy, cfg.output / "scene", sync_tolerance=cfg.sync_tolerance)
    scene_cfg = pipeline.load_config(scene_cfg_path, threads=cfg.threads)
    scene_cfg.thresholds = cfg.thresholds
    pipeline.run_generate(scene_cfg)
    gates = pipeline.run_validate(scene_cfg)

    base = end_to_end_check(scene, policy, tolerance=cfg.sync_tolerance, thresholds=cfg.thresholds)
    curve = degradation_curve(
        scene, policy, grid["latency_shift"], grid["extrinsics_rotation_drift"],
        tolerance=cfg.sync_tolerance, thresholds=cfg.thresholds,
    )
    max_res = base.max_residual
    ok = max_res is not None and max_res <= 1.0 and base.projection_validity == 1.0
    report = {
        "ok": ok,
        "residual_bound_px": 1.0,
        "baseline": base.summary(),
        "per_frame_residual_px": [f.residual for f in base.frames],
        "dataset_gates": gates.to_dict(),
        "degradation": curve,
    }
    (cfg.output / "replay_report.json").write_text(json.dumps(report, indent=2) + "\n")
    log.info(
        "replay: %d frames, max residual %s px, projection validity %s",
        len(base.frames), max_res, base.projection_validity,
    )
    for row in curve:
        level = row["latency_shift"] if row["kind"] == "latency_shift" else row["extrinsics_rotation_drift"]
        log.info("replay: %s=%g mean residual %s px", row["kind"], level, row["mean_residual_px"])
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "generate": _generate,
    "validate": _validate,
    "package": _package,
    "verify": _verify,
    "analyze": _analyze,
    "replay": _replay,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fkroi", description="FK-projected hand-centric ROI pipeline")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--output", help="dataset/output root (overrides config)")
    p.add_argument("--arm", action="append", dest="arms", help="restrict to this arm id (repeatable)")
    p.add_argument("--threads", type=int, help="worker threads for per-frame work")
    p.add_argument("--manifest", help="verify: reference manifest (default: <output>/manifest.json)")
    p.add_argument("--against", help="verify: regenerated dataset root to check (default: <output>)")
    p.add_argument("--report", help="verify: also write the verification report JSON here")
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr, level=logging.WARNING if args.quiet else logging.INFO, format="fkroi: %(message)s"
    )
    stage = args.command
    try:
        cfg = pipeline.load_config(args.config, output=args.output, arms=args.arms, threads=args.threads)
        return COMMANDS[stage](cfg, args)
    except (InputError, MissingArtifactError, jsonschema.ValidationError) as exc:
        log.error("%s: input error: %s", stage, exc)
        return EXIT_INPUT
    except (OSError, ValueError) as exc:
        log.error("%s: stage failed: %s", stage, exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
