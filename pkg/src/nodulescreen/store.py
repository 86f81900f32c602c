"""On-disk study bundle store.

Bundle directory layout (all JSON UTF-8 with sorted keys):

    <study_id>/
        study.json        metadata, description, current verdicts
        volume.json       dims, spacing, dtype "int16-le", hu_offset 0, payload checksums
        volume.raw        little-endian int16, x-fastest
        lobes.raw         uint8, same voxel order
        candidates.json   candidate list
        truth.json        optional ground truth
        decisions.json    append-only verdict history

Payload integrity is guarded by SHA-256 checksums recorded in volume.json;
a corrupted byte surfaces as ``IntegrityError`` on load. Writes go through
temp files with the metadata written last, and per-study writer locks keep
concurrent mutation serialized (readers need no lock).
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .model import (
    CtVolume,
    Decision,
    GroundTruthNodule,
    LobeMap,
    NoduleCandidate,
    Provenance,
    StudyBundle,
    ValidationError,
    Verdict,
    VerdictSource,
)

SCHEMA_VERSION = 1


class IntegrityError(RuntimeError):
    """A persisted bundle is corrupt or inconsistent with its checksums."""


def _dump_json(path: Path, payload: object) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text + "\n", encoding="utf-8")
    os.replace(tmp, path)


def _load_json(path: Path) -> object:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise IntegrityError(f"{path.name} is not valid JSON: {exc}") from exc


def _mask_to_json(mask: Optional[frozenset[tuple[int, int, int]]]) -> Optional[list]:
    if mask is None:
        return None
    return [list(v) for v in sorted(mask)]


def _mask_from_json(data: Optional[list]) -> Optional[frozenset[tuple[int, int, int]]]:
    if data is None:
        return None
    return frozenset(tuple(int(c) for c in v) for v in data)


def candidate_to_json(cand: NoduleCandidate) -> dict:
    entry = {
        "id": cand.id,
        "centroid": list(cand.centroid),
        "bbox": [list(cand.bbox[0]), list(cand.bbox[1])],
        "confidence": cand.confidence,
    }
    if cand.mask is not None:
        entry["mask"] = _mask_to_json(cand.mask)
    return entry


def candidate_from_json(entry: dict, index: int = -1) -> NoduleCandidate:
    where = f"candidates[{index}]" if index >= 0 else "candidate"
    if not isinstance(entry, dict):
        raise ValidationError(f"{where}: expected an object")
    for key in ("id", "centroid", "bbox", "confidence"):
        if key not in entry:
            raise ValidationError(f"{where}: missing field {key!r}")
    try:
        return NoduleCandidate(
            id=str(entry["id"]),
            centroid=tuple(entry["centroid"]),
            bbox=(tuple(entry["bbox"][0]), tuple(entry["bbox"][1])),
            confidence=float(entry["confidence"]),
            mask=_mask_from_json(entry.get("mask")),
        )
    except ValidationError as exc:
        raise ValidationError(f"{where}: {exc}") from exc
    except (TypeError, ValueError, IndexError) as exc:
        raise ValidationError(f"{where}: malformed value ({exc})") from exc


def truth_to_json(gt: GroundTruthNodule) -> dict:
    entry = {
        "id": gt.id,
        "centroid": list(gt.centroid),
        "diameter_mm": gt.diameter_mm,
    }
    if gt.mask is not None:
        entry["mask"] = _mask_to_json(gt.mask)
    return entry


def truth_from_json(entry: dict) -> GroundTruthNodule:
    return GroundTruthNodule(
        id=str(entry["id"]),
        centroid=tuple(entry["centroid"]),
        diameter_mm=float(entry["diameter_mm"]),
        mask=_mask_from_json(entry.get("mask")),
    )


def verdict_to_json(verdict: Verdict) -> dict:
    return {
        "candidate_id": verdict.candidate_id,
        "decision": verdict.decision.value,
        "rationale": verdict.rationale,
        "source": verdict.source.value,
    }


def verdict_from_json(entry: dict) -> Verdict:
    return Verdict(
        candidate_id=str(entry["candidate_id"]),
        decision=Decision(entry["decision"]),
        rationale=str(entry.get("rationale", "")),
        source=VerdictSource(entry["source"]),
    )


def save_study(bundle: StudyBundle, root: Path | str) -> Path:
    """Persist a bundle under ``root/<study_id>`` and return that path.

    The bundle is validated first; invariant violations refuse the save.
    """
    return save_study_dir(bundle, Path(root) / bundle.study_id)


def save_study_dir(bundle: StudyBundle, study_dir: Path | str) -> Path:
    """Persist a bundle into an explicit directory (created on demand)."""
    bundle.validate()
    study_dir = Path(study_dir)
    study_dir.mkdir(parents=True, exist_ok=True)

    vol_bytes = np.ascontiguousarray(bundle.volume.voxels, dtype="<i2").tobytes()
    lobe_bytes = np.ascontiguousarray(bundle.lobes.labels, dtype=np.uint8).tobytes()
    (study_dir / "volume.raw").write_bytes(vol_bytes)
    (study_dir / "lobes.raw").write_bytes(lobe_bytes)

    _dump_json(
        study_dir / "volume.json",
        {
            "dims": list(bundle.volume.dims),
            "spacing": list(bundle.volume.spacing),
            "dtype": "int16-le",
            "hu_offset": 0,
            "volume_sha256": hashlib.sha256(vol_bytes).hexdigest(),
            "lobes_sha256": hashlib.sha256(lobe_bytes).hexdigest(),
        },
    )
    _dump_json(
        study_dir / "candidates.json",
        [candidate_to_json(c) for c in bundle.candidates],
    )
    truth_path = study_dir / "truth.json"
    if bundle.truth is not None:
        _dump_json(truth_path, [truth_to_json(t) for t in bundle.truth])
    elif truth_path.exists():
        truth_path.unlink()
    _dump_json(
        study_dir / "decisions.json",
        [verdict_to_json(v) for v in bundle.decision_log],
    )
    # study.json last: its presence marks a complete bundle.
    _dump_json(
        study_dir / "study.json",
        {
            "schema_version": SCHEMA_VERSION,
            "study_id": bundle.study_id,
            "created_at": bundle.provenance.created_at,
            "config_hash": bundle.provenance.config_hash,
            "description": bundle.description,
            "verdicts": [verdict_to_json(v) for v in bundle.verdicts],
        },
    )
    return study_dir


def load_study(study_dir: Path | str) -> StudyBundle:
    """Load and validate a bundle saved by :func:`save_study`."""
    study_dir = Path(study_dir)
    meta = _load_json(study_dir / "study.json")
    volmeta = _load_json(study_dir / "volume.json")
    if not isinstance(meta, dict) or not isinstance(volmeta, dict):
        raise IntegrityError("study.json/volume.json must hold objects")

    dims = tuple(int(d) for d in volmeta["dims"])
    spacing = tuple(float(s) for s in volmeta["spacing"])
    if volmeta.get("dtype") != "int16-le":
        raise IntegrityError(f"unsupported voxel dtype {volmeta.get('dtype')!r}")

    vol_bytes = (study_dir / "volume.raw").read_bytes()
    lobe_bytes = (study_dir / "lobes.raw").read_bytes()
    if hashlib.sha256(vol_bytes).hexdigest() != volmeta.get("volume_sha256"):
        raise IntegrityError("volume.raw checksum mismatch")
    if hashlib.sha256(lobe_bytes).hexdigest() != volmeta.get("lobes_sha256"):
        raise IntegrityError("lobes.raw checksum mismatch")

    nx, ny, nz = dims
    expected = nx * ny * nz
    if len(vol_bytes) != expected * 2 or len(lobe_bytes) != expected:
        raise IntegrityError("raw payload size does not match dims")
    voxels = np.frombuffer(vol_bytes, dtype="<i2").reshape(nz, ny, nx)
    labels = np.frombuffer(lobe_bytes, dtype=np.uint8).reshape(nz, ny, nx)

    cands_json = _load_json(study_dir / "candidates.json")
    candidates = [candidate_from_json(entry, i) for i, entry in enumerate(cands_json)]

    truth = None
    if (study_dir / "truth.json").exists():
        truth = [truth_from_json(entry) for entry in _load_json(study_dir / "truth.json")]

    decision_log = [verdict_from_json(e) for e in _load_json(study_dir / "decisions.json")]

    bundle = StudyBundle(
        study_id=str(meta["study_id"]),
        volume=CtVolume(dims=dims, spacing=spacing, voxels=voxels),
        lobes=LobeMap(dims=dims, labels=labels),
        candidates=candidates,
        truth=truth,
        description=meta.get("description"),
        verdicts=[verdict_from_json(e) for e in meta.get("verdicts", [])],
        decision_log=decision_log,
        provenance=Provenance(
            created_at=str(meta.get("created_at", "")),
            config_hash=str(meta.get("config_hash", "")),
        ),
    )
    bundle.validate()
    return bundle


class StudyStore:
    """Directory of study bundles with per-study writer serialization."""

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock_for(self, study_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(study_id, threading.Lock())

    def list_studies(self) -> list[str]:
        return sorted(
            p.name for p in self.root.iterdir() if (p / "study.json").exists()
        )

    def __contains__(self, study_id: str) -> bool:
        return (self.root / study_id / "study.json").exists()

    def path_of(self, study_id: str) -> Path:
        return self.root / study_id

    def load(self, study_id: str) -> StudyBundle:
        if study_id not in self:
            raise KeyError(study_id)
        return load_study(self.root / study_id)

    def save(self, bundle: StudyBundle) -> Path:
        with self._lock_for(bundle.study_id):
            return save_study(bundle, self.root)

    def mutate(self, study_id: str) -> "_StudyMutation":
        """Load-modify-save under the study's writer lock."""
        return _StudyMutation(self, study_id)


class _StudyMutation:
    def __init__(self, store: StudyStore, study_id: str):
        self._store = store
        self._study_id = study_id
        self._lock = store._lock_for(study_id)
        self.bundle: Optional[StudyBundle] = None

    def __enter__(self) -> StudyBundle:
        self._lock.acquire()
        try:
            if self._study_id not in self._store:
                raise KeyError(self._study_id)
            self.bundle = load_study(self._store.root / self._study_id)
            return self.bundle
        except BaseException:
            self._lock.release()
            raise

    def __exit__(self, exc_type, exc, tb) -> None:
        try:
            if exc_type is None and self.bundle is not None:
                save_study(self.bundle, self._store.root)
        finally:
            self._lock.release()
