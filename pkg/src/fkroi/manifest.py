"""Checksummed dataset manifests and regeneration verification.

Dataset layout (all paths relative to the dataset root)::

    records.jsonl
    roi/{frame_index:08d}_{arm_id}.png
    manifest.json
"""
from __future__ import annotations

import copy
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .imageio import sha256_bytes, sha256_file
from .records import LineageTuple, canonical_json, read_records

MANIFEST_SCHEMA_ID = "fkroi-manifest/1"
RECORDS_FILE = "records.jsonl"
ROI_DIR = "roi"
MANIFEST_FILE = "manifest.json"

_SHA = {"type": "string", "pattern": "^[0-9a-f]{64}$"}

MANIFEST_SCHEMA = {
    "type": "object",
    "required": [
        "schema",
        "dataset_id",
        "tool_version",
        "access_policy",
        "lineage",
        "inputs",
        "records",
        "roi_images",
        "parameters",
        "manifest_sha256",
    ],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": MANIFEST_SCHEMA_ID},
        "dataset_id": {"type": "string", "minLength": 1},
        "tool_version": {"type": "string", "minLength": 1},
        "access_policy": {"type": "string"},
        "lineage": {
            "type": "object",
            "required": [
                "intrinsics_ver",
                "extrinsics_ver",
                "fk_ver",
                "roi_generator_ver",
                "crop_offset_ver",
                "resize_policy",
                "padding_mode",
            ],
            "additionalProperties": {"type": "string", "minLength": 1},
            "properties": {"padding_mode": {"const": "zero"}},
        },
        "inputs": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["file", "sha256"],
                "properties": {"file": {"type": "string"}, "sha256": _SHA},
            },
        },
        "records": {
            "type": "object",
            "required": ["path", "sha256", "count"],
            "properties": {"path": {"type": "string"}, "sha256": _SHA, "count": {"type": "integer", "minimum": 0}},
        },
        "roi_images": {
            "type": "object",
            "required": ["count", "tree_sha256", "files"],
            "properties": {
                "count": {"type": "integer", "minimum": 0},
                "tree_sha256": _SHA,
                "files": {"type": "object", "additionalProperties": _SHA},
            },
        },
        "parameters": {"type": "object"},
        "manifest_sha256": _SHA,
    },
}


class MissingArtifactError(FileNotFoundError):
    pass


def tree_checksum(files: dict[str, str]) -> str:
    """SHA-256 over sorted ``"<sha>  <path>\\n"`` lines."""
    listing = "".join(f"{files[p]}  {p}\n" for p in sorted(files))
    return sha256_bytes(listing.encode("utf-8"))


@dataclass(frozen=True)
class DatasetManifest:
    dataset_id: str
    record_path: str
    record_sha256: str
    record_count: int
    roi_files: dict
    lineage: LineageTuple
    inputs: dict
    tool_version: str
    parameters: dict = field(default_factory=dict)
    access_policy: str = ""

    def _body(self) -> dict:
        return {
            "schema": MANIFEST_SCHEMA_ID,
            "dataset_id": self.dataset_id,
            "tool_version": self.tool_version,
            "access_policy": self.access_policy,
            "lineage": self.lineage.to_dict(),
            "inputs": {k: dict(self.inputs[k]) for k in sorted(self.inputs)},
            "records": {"path": self.record_path, "sha256": self.record_sha256, "count": self.record_count},
            "roi_images": {
                "count": len(self.roi_files),
                "tree_sha256": tree_checksum(self.roi_files),
                "files": {p: self.roi_files[p] for p in sorted(self.roi_files)},
            },
            "parameters": copy.deepcopy(self.parameters),
        }

    @property
    def checksum(self) -> str:
        return sha256_bytes(canonical_json(_sorted(self._body())).encode("ascii"))

    def to_dict(self) -> dict:
        d = self._body()
        d["manifest_sha256"] = self.checksum
        return d

    def to_bytes(self) -> bytes:
        return (canonical_json(_sorted(self.to_dict())) + "\n").encode("ascii")

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        validate_manifest_dict(d)
        m = cls(
            dataset_id=d["dataset_id"],
            record_path=d["records"]["path"],
            record_sha256=d["records"]["sha256"],
            record_count=d["records"]["count"],
            roi_files=dict(d["roi_images"]["files"]),
            lineage=LineageTuple.from_dict(d["lineage"]),
            inputs={k: dict(v) for k, v in d["inputs"].items()},
            tool_version=d["tool_version"],
            parameters=d["parameters"],
            access_policy=d["access_policy"],
        )
        if m.checksum != d["manifest_sha256"]:
            raise ValueError("manifest_sha256 does not match manifest content")
        if tree_checksum(m.roi_files) != d["roi_images"]["tree_sha256"]:
            raise ValueError("roi tree checksum does not match file list")
        return m


def _sorted(obj):
    if isinstance(obj, dict):
        return {k: _sorted(obj[k]) for k in sorted(obj)}
    if isinstance(obj, list):
        return [_sorted(v) for v in obj]
    return obj


def validate_manifest_dict(d: dict) -> None:
    jsonschema.validate(d, MANIFEST_SCHEMA)


def write_manifest(manifest: DatasetManifest, path) -> str:
    data = manifest.to_bytes()
    Path(path).write_bytes(data)
    return sha256_bytes(data)


def load_manifest(path) -> DatasetManifest:
    with open(path) as f:
        return DatasetManifest.from_dict(json.load(f))


def checksum_inputs(inputs: dict) -> dict:
    """``{role: path}`` -> ``{role: {"file": basename, "sha256": ...}}``."""
    out = {}
    for role in sorted(inputs):
        p = Path(inputs[role])
        if not p.is_file():
            raise MissingArtifactError(f"input {role!r} not found: {p}")
        out[role] = {"file": p.name, "sha256": sha256_file(p)}
    return out


def build_manifest(
    record_checksum: str,
    roi_checksums: dict,
    inputs: dict,
    lineage: LineageTuple,
    *,
    dataset_root=None,
    dataset_id: str = "fkroi-dataset",
    record_count: int = 0,
    tool_version: str | None = None,
    parameters: dict | None = None,
    access_policy: str = "",
) -> DatasetManifest:
    """Assemble a manifest.

    ``inputs`` maps an input role to a path (checksummed here) or to an
    already computed ``{"file", "sha256"}`` entry. With ``dataset_root``,
    every referenced artifact must exist on disk.
    """
    if tool_version is None:
        from . import __version__ as tool_version
    if dataset_root is not None:
        root = Path(dataset_root)
        for rel in [RECORDS_FILE, *sorted(roi_checksums)]:
            if not (root / rel).is_file():
                raise MissingArtifactError(f"artifact missing from dataset: {rel}")
    paths = {k: v for k, v in inputs.items() if not isinstance(v, dict)}
    entries = checksum_inputs(paths)
    entries.update({k: dict(v) for k, v in inputs.items() if isinstance(v, dict)})
    return DatasetManifest(
        dataset_id=dataset_id,
        record_path=RECORDS_FILE,
        record_sha256=record_checksum,
        record_count=record_count,
        roi_files=dict(roi_checksums),
        lineage=lineage,
        inputs=entries,
        tool_version=tool_version,
        parameters=parameters or {},
        access_policy=access_policy,
    )


@dataclass(frozen=True)
class ArtifactCheck:
    path: str
    expected: str
    actual: str | None
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.actual == self.expected


@dataclass
class VerificationReport:
    lineage_mismatches: list[tuple[str, str, str]]
    artifacts: list[ArtifactCheck]
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.lineage_mismatches and all(a.ok for a in self.artifacts)

    @property
    def mismatched(self) -> list[str]:
        return [a.path for a in self.artifacts if not a.ok]

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "lineage_mismatches": [{"field": f, "expected": e, "found": g} for f, e, g in self.lineage_mismatches],
            "artifacts": [
                {"path": a.path, "expected": a.expected, "actual": a.actual, "match": a.ok, "reason": a.reason}
                for a in self.artifacts
            ],
            "notes": self.notes,
        }

    def summary(self) -> str:
        lines = [f"verification: {'OK' if self.ok else 'FAILED'} ({len(self.artifacts)} artifacts)"]
        for f, e, g in self.lineage_mismatches:
            lines.append(f"  lineage mismatch {f}: expected {e!r}, found {g!r}")
        for a in self.artifacts:
            if not a.ok:
                lines.append(f"  mismatch {a.path}: {a.reason or 'checksum differs'}")
        lines.extend(f"  note: {n}" for n in self.notes)
        return "\n".join(lines)


def _check(root: Path, rel: str, expected: str) -> ArtifactCheck:
    try:
        return ArtifactCheck(rel, expected, sha256_file(root / rel))
    except FileNotFoundError:
        return ArtifactCheck(rel, expected, None, "missing")
    except OSError as exc:
        return ArtifactCheck(rel, expected, None, f"unreadable: {exc}")


def _found_lineages(root: Path, notes: list) -> list[LineageTuple]:
    found = []
    try:
        found.extend({r.lineage for r in read_records(root / RECORDS_FILE)})
    except (OSError, ValueError, KeyError) as exc:
        notes.append(f"could not read record lineage: {exc}")
    if not found and (root / MANIFEST_FILE).is_file():
        try:
            found.append(load_manifest(root / MANIFEST_FILE).lineage)
        except (OSError, ValueError, jsonschema.ValidationError) as exc:
            notes.append(f"could not read dataset manifest lineage: {exc}")
    return sorted(found, key=lambda lin: tuple(lin.to_dict().values()))


def verify_regeneration(manifest, regenerated_root, workers: int = 4) -> VerificationReport:
    """Compare a regenerated dataset against ``manifest``.

    Lineage is compared first; artifact checksums are then recomputed for
    every file the manifest lists. Unreadable files count as mismatches.
    """
    if not isinstance(manifest, DatasetManifest):
        manifest = load_manifest(manifest)
    root = Path(regenerated_root)
    notes: list[str] = []

    lineage_mismatches = []
    found = _found_lineages(root, notes)
    if not found:
        notes.append("no lineage available in regenerated dataset; lineage not compared")
    for lin in found:
        for item in manifest.lineage.diff(lin):
            if item not in lineage_mismatches:
                lineage_mismatches.append(item)

    expected = {manifest.record_path: manifest.record_sha256}
    expected.update(manifest.roi_files)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        checks = list(pool.map(lambda rel: _check(root, rel, expected[rel]), sorted(expected)))
    return VerificationReport(lineage_mismatches, checks, notes)
