"""Pipeline stages over on-disk inputs: generate, validate, package, verify, analyze."""
from __future__ import annotations

import json
import logging
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .camera import DEFAULT_DEPTH_EPSILON, CalibrationSet, load_calibration
from .foveation import View, density_gain, global_footprint, token_accounting
from .gates import DEFAULT_DRIFT_WINDOW, GateReport, GateThresholds, aggregate_report, teleop_metrics
from .imageio import read_png, sha256_file, write_png
from .kinematics import KinematicChain, load_chain
from .manifest import (
    MANIFEST_FILE,
    RECORDS_FILE,
    ROI_DIR,
    MissingArtifactError,
    VerificationReport,
    build_manifest,
    verify_regeneration,
    write_manifest,
)
from .records import LineageTuple, RoiRecord, read_records, write_records
from .roi import RoiImage, RoiPolicy, generate_frame, load_policy, make_lineage
from .sync import DEFAULT_TOLERANCE, group_by_arm, load_image_index, load_state_log, pair_streams

log = logging.getLogger("fkroi")


class InputError(ValueError):
    """A referenced input is missing or does not parse."""


@dataclass
class RunConfig:
    base_dir: Path
    output: Path
    state_log: Path | None = None
    image_index: Path | None = None
    calibration: Path | None = None
    chains: dict = field(default_factory=dict)  # arm_id -> path; "*" applies to every arm
    policy: Path | None = None
    scene: Path | None = None
    camera_id: str = "cam0"
    sync_tolerance: float = DEFAULT_TOLERANCE
    depth_epsilon: float = DEFAULT_DEPTH_EPSILON
    arms: list | None = None
    thresholds: GateThresholds = field(default_factory=GateThresholds)
    drift_window: int = DEFAULT_DRIFT_WINDOW
    teleop_window: int = 10
    global_resolution: int = 256
    patch_size: int = 16
    dataset_id: str = "fkroi-dataset"
    access_policy: str = ""
    threads: int = 1

    def input_paths(self) -> dict:
        paths = {
            "state_log": self.state_log,
            "image_index": self.image_index,
            "calibration": self.calibration,
            "policy": self.policy,
        }
        for arm, p in sorted(self.chains.items()):
            paths["chain" if arm == "*" else f"chain:{arm}"] = p
        return {k: v for k, v in paths.items() if v is not None}

    def require(self, *names: str) -> None:
        for name in names:
            if name == "chain":
                if not self.chains:
                    raise InputError("config names no kinematic chain")
                paths = list(self.chains.values())
            else:
                p = getattr(self, name)
                if p is None:
                    raise InputError(f"config is missing {name!r}")
                paths = [p]
            for p in paths:
                if not Path(p).is_file():
                    raise InputError(f"{name} not found: {p}")

    def creation_parameters(self) -> dict:
        return {
            "camera_id": self.camera_id,
            "sync_tolerance": self.sync_tolerance,
            "depth_epsilon": self.depth_epsilon,
            "arms": sorted(self.arms) if self.arms else "all",
            "teleop_window": self.teleop_window,
        }


def load_config(path, *, output=None, arms=None, threads=None) -> RunConfig:
    """Read a JSON run config; paths are relative to the config file. Flags win."""
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    base = path.parent

    def p(key):
        return None if d.get(key) is None else base / d[key]

    chains = {}
    if "chain" in d:
        chains["*"] = base / d["chain"]
    for arm, rel in d.get("chains", {}).items():
        chains[arm] = base / rel
    try:
        cfg = RunConfig(
            base_dir=base,
            output=Path(output) if output is not None else base / d.get("output", "output"),
            state_log=p("state_log"),
            image_index=p("image_index"),
            calibration=p("calibration"),
            chains=chains,
            policy=p("policy"),
            scene=p("scene"),
            camera_id=str(d.get("camera_id", "cam0")),
            sync_tolerance=float(d.get("sync_tolerance", DEFAULT_TOLERANCE)),
            depth_epsilon=float(d.get("depth_epsilon", DEFAULT_DEPTH_EPSILON)),
            arms=arms if arms else d.get("arms"),
            thresholds=GateThresholds.from_dict(d.get("thresholds", {})),
            drift_window=int(d.get("drift_window", DEFAULT_DRIFT_WINDOW)),
            teleop_window=int(d.get("teleop_window", 10)),
            global_resolution=int(d.get("global_resolution", 256)),
            patch_size=int(d.get("patch_size", 16)),
            dataset_id=str(d.get("dataset_id", "fkroi-dataset")),
            access_policy=str(d.get("access_policy", "")),
            threads=int(threads if threads is not None else d.get("threads", 1)),
        )
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid config {path}: {exc}") from exc
    if cfg.threads < 1:
        raise InputError("threads must be >= 1")
    return cfg


def _parse(loader, p, what):
    try:
        return loader(p)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"cannot parse {what} {p}: {exc}") from exc


def generate_records(
    images,
    states,
    chains,
    calib: CalibrationSet,
    policy: RoiPolicy,
    *,
    tolerance: float = DEFAULT_TOLERANCE,
    camera_id: str = "cam0",
    depth_epsilon: float = DEFAULT_DEPTH_EPSILON,
    arms=None,
    teleop_window: int = 10,
    threads: int = 1,
) -> tuple[list[tuple[RoiRecord, RoiImage]], dict]:
    """Pair and generate ROIs for every selected arm.

    ``images`` is ``[(t, ref)]`` with ``ref`` a path or an array; ``chains``
    is a chain or ``{arm_id: chain}`` (``"*"`` as fallback). Output is sorted
    by ``(timestamp, arm_id)`` whatever the thread count.
    """
    images = list(images)
    groups = group_by_arm(states)
    if arms:
        missing = set(arms) - {a for _, a in groups}
        if missing:
            raise InputError(f"no states for selected arms {sorted(missing)}")
        groups = {k: v for k, v in groups.items() if k[1] in arms}
    arm_ids = [a for _, a in groups]
    if len(set(arm_ids)) != len(arm_ids):
        raise InputError("arm ids must be unique across robots")

    def chain_for(arm) -> KinematicChain:
        if isinstance(chains, KinematicChain):
            return chains
        c = chains.get(arm, chains.get("*"))
        if c is None:
            raise InputError(f"no kinematic chain for arm {arm!r}")
        return c

    per_frame: dict[int, list] = {}
    counts = {"images": len(images), "unmatched_images": {}, "unused_states": {}, "sync_flagged": 0}
    for (robot, arm), arm_states in sorted(groups.items()):
        samples, unmatched = pair_streams(images, arm_states, tolerance)
        counts["unmatched_images"][arm] = unmatched["images"]
        counts["unused_states"][arm] = unmatched["states"]
        tele = dict(zip((s.t for s in arm_states), teleop_metrics(arm_states, teleop_window)))
        chain = chain_for(arm)
        lineage = make_lineage(chain, calib, policy)
        for s in samples:
            counts["sync_flagged"] += not s.within_tolerance
            t = tele[s.state.t] if s.state.has_teleop else None
            per_frame.setdefault(s.frame_index, []).append((arm, s, chain, t, lineage))

    def work(frame_index):
        jobs = per_frame[frame_index]
        ref = jobs[0][1].image_ref
        image = ref if not isinstance(ref, (str, Path)) else read_png(ref)
        return [
            generate_frame(
                s, chain, calib, policy, arm,
                camera_id=camera_id, depth_epsilon=depth_epsilon, image=image, teleop=t, lineage=lin,
            )
            for arm, s, chain, t, lin in jobs
        ]

    order = sorted(per_frame)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(work, order))
    else:
        chunks = [work(i) for i in order]
    results = [item for chunk in chunks for item in chunk]
    results.sort(key=lambda rr: rr[0].sort_key)
    return results, counts


def write_dataset(root, results) -> tuple[str, dict]:
    """Write ``records.jsonl`` and ROI PNGs; return record checksum and ROI checksums."""
    root = Path(root)
    roi_dir = root / ROI_DIR
    roi_dir.mkdir(parents=True, exist_ok=True)
    for stale in roi_dir.glob("*.png"):
        stale.unlink()
    roi_sums = {}
    for record, roi in results:
        rel = f"{ROI_DIR}/{record.roi_filename}"
        write_png(root / rel, roi.pixels)
        roi_sums[rel] = sha256_file(root / rel)
    checksum = write_records([r for r, _ in results], root / RECORDS_FILE)
    return checksum, roi_sums


def run_generate(cfg: RunConfig) -> dict:
    cfg.require("state_log", "image_index", "calibration", "chain", "policy")
    states = _parse(load_state_log, cfg.state_log, "state log")
    images = _parse(load_image_index, cfg.image_index, "image index")
    calib = _parse(load_calibration, cfg.calibration, "calibration")
    policy = _parse(load_policy, cfg.policy, "policy")
    chains = {arm: _parse(load_chain, p, "kinematic chain") for arm, p in cfg.chains.items()}
    for t, p in images:
        if not Path(p).is_file():
            raise InputError(f"image listed in index not found: {p}")
    log.info("generate: %d images, %d state records", len(images), len(states))
    results, counts = generate_records(
        images, states, chains, calib, policy,
        tolerance=cfg.sync_tolerance, camera_id=cfg.camera_id, depth_epsilon=cfg.depth_epsilon,
        arms=cfg.arms, teleop_window=cfg.teleop_window, threads=cfg.threads,
    )
    checksum, roi_sums = write_dataset(cfg.output, results)
    counts.update(records=len(results), records_sha256=checksum)
    log.info("generate: wrote %d records (%s) to %s", len(results), checksum, cfg.output)
    return counts


def run_validate(cfg: RunConfig) -> GateReport:
    path = cfg.output / RECORDS_FILE
    if not path.is_file():
        raise InputError(f"records not found: {path}")
    records = _parse(read_records, path, "records")
    report = aggregate_report(records, None, cfg.thresholds, cfg.drift_window)
    (cfg.output / "gate_report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    return report


def _merge_lineage(lineages) -> LineageTuple:
    values = [lin.to_dict() for lin in lineages]
    merged = {k: "+".join(sorted({v[k] for v in values})) for k in values[0]}
    return LineageTuple.from_dict(merged)


def run_package(cfg: RunConfig):
    cfg.require("state_log", "image_index", "calibration", "chain", "policy")
    root = cfg.output
    rec_path = root / RECORDS_FILE
    if not rec_path.is_file():
        raise MissingArtifactError(f"artifact missing from dataset: {RECORDS_FILE}")
    records = _parse(read_records, rec_path, "records")
    roi_sums = {}
    for r in records:
        rel = f"{ROI_DIR}/{r.roi_filename}"
        if not (root / rel).is_file():
            raise MissingArtifactError(f"artifact missing from dataset: {rel}")
        roi_sums[rel] = sha256_file(root / rel)
    if records:
        lineage = _merge_lineage({r.lineage for r in records})
    else:
        calib = _parse(load_calibration, cfg.calibration, "calibration")
        policy = _parse(load_policy, cfg.policy, "policy")
        chains = [_parse(load_chain, p, "kinematic chain") for p in cfg.chains.values()]
        lineage = _merge_lineage([make_lineage(c, calib, policy) for c in chains])
    manifest = build_manifest(
        sha256_file(rec_path),
        roi_sums,
        cfg.input_paths(),
        lineage,
        dataset_root=root,
        dataset_id=cfg.dataset_id,
        record_count=len(records),
        parameters=cfg.creation_parameters(),
        access_policy=cfg.access_policy,
    )
    write_manifest(manifest, root / MANIFEST_FILE)
    return manifest


def run_verify(cfg: RunConfig, manifest_path=None, against=None) -> VerificationReport:
    manifest_path = Path(manifest_path) if manifest_path else cfg.output / MANIFEST_FILE
    if not manifest_path.is_file():
        raise InputError(f"manifest not found: {manifest_path}")
    root = Path(against) if against else cfg.output
    return verify_regeneration(manifest_path, root, workers=max(cfg.threads, 1))


def run_analyze(cfg: RunConfig) -> dict:
    cfg.require("calibration", "policy")
    calib = _parse(load_calibration, cfg.calibration, "calibration")
    policy = _parse(load_policy, cfg.policy, "policy")
    rec_path = cfg.output / RECORDS_FILE
    records = _parse(read_records, rec_path, "records") if rec_path.is_file() else []
    valid = [r for r in records if r.valid_projection]
    w0, wg, wr = calib.intrinsics.width, cfg.global_resolution, policy.output_size
    widths = [r.crop_rect.w for r in valid]
    w_roi = statistics.median(widths) if widths else policy.ell_min * policy.aspect_w
    arms = sorted({r.arm_id for r in records}) or ["arm"]
    # one ROI view per arm, footprints from the first frame that has them all
    footprints = {}
    for r in valid:
        footprints.setdefault(r.arm_id, r.crop_rect)
    views = [View(wg)] + [View(wr, True, footprints.get(a)) for a in arms]
    stats = token_accounting(views, cfg.patch_size, (calib.intrinsics.width, calib.intrinsics.height))
    return {
        "raw_width": w0,
        "global_width": wg,
        "roi_width_raw": w_roi,
        "roi_output": wr,
        "scale_s": wg / w0,
        "global_footprint_px": global_footprint(w0, wg, w_roi),
        "density_gain": density_gain(w0, wg, w_roi, wr),
        "views": len(views),
        "patch": cfg.patch_size,
        "tokens_per_view": list(stats.tokens_per_view),
        "n_total": stats.n_total,
        "roi_token_fraction": float(stats.roi_token_fraction),
        "duplication_overlap": stats.duplication_overlap,
        "frames_analyzed": len(valid),
    }


def format_analysis(a: dict) -> str:
    rows = [
        ("raw width W0", a["raw_width"]),
        ("global width Wg", a["global_width"]),
        ("scale s", f"{a['scale_s']:.4g}"),
        ("ROI width in raw (median)", a["roi_width_raw"]),
        ("ROI footprint in global", f"{a['global_footprint_px']:.4g}"),
        ("ROI output width Wr", a["roi_output"]),
        ("density gain rho", f"{a['density_gain']:.4g}"),
        ("views", a["views"]),
        ("tokens per view", ", ".join(map(str, a["tokens_per_view"]))),
        ("total tokens", a["n_total"]),
        ("ROI token fraction", f"{a['roi_token_fraction']:.4f}"),
        ("duplication overlap", f"{a['duplication_overlap']:.4f}"),
    ]
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)
