"""Shared domain types for CT studies, candidates, verdicts, and strategies.

All types are immutable value objects once constructed (numpy payloads are
frozen via the read-only flag) and safe to share across threads. Validation
happens eagerly in ``validate()``/constructors so that invalid states never
circulate.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

HU_MIN = -1024
HU_MAX = 3071

# Lobe label encoding, fixed for this project (0 is background).
LOBE_LABELS = {
    1: ("left", "upper"),
    2: ("left", "lower"),
    3: ("right", "upper"),
    4: ("right", "middle"),
    5: ("right", "lower"),
}

LOBE_ABBREVIATIONS = {1: "LUL", 2: "LLL", 3: "RUL", 4: "RML", 5: "RLL"}


class ValidationError(ValueError):
    """An object violates one of its declared invariants."""


class Laterality(str, Enum):
    LEFT = "left"
    RIGHT = "right"
    UNSPECIFIED = "unspecified"


class Lobe(str, Enum):
    UPPER = "upper"
    MIDDLE = "middle"
    LOWER = "lower"
    UNSPECIFIED = "unspecified"


class Decision(str, Enum):
    KEEP = "keep"
    DISCARD = "discard"
    REJECT = "reject"


class VerdictSource(str, Enum):
    LVM = "lvm"
    RULE = "rule"
    HUMAN_OVERRIDE = "human_override"


def _as_readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class CtVolume:
    """3D CT voxel grid in Hounsfield units with physical spacing.

    ``voxels`` is indexed ``[z, y, x]`` (C order, so the raw byte layout is
    x-fastest); ``dims`` and ``spacing`` are given as (nx, ny, nz) and
    (sx, sy, sz) in millimeters per voxel.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    voxels: np.ndarray  # int16, shape (nz, ny, nx)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CtVolume):
            return NotImplemented
        return (
            self.dims == other.dims
            and self.spacing == other.spacing
            and np.array_equal(self.voxels, other.voxels)
        )

    def __post_init__(self) -> None:
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(
            self, "voxels", _as_readonly(np.asarray(self.voxels, dtype=np.int16))
        )
        self.validate()

    def validate(self) -> None:
        nx, ny, nz = self.dims
        if min(nx, ny, nz) < 1:
            raise ValidationError(f"volume dims must all be >= 1, got {self.dims}")
        if min(self.spacing) <= 0:
            raise ValidationError(f"spacing must be positive, got {self.spacing}")
        if self.voxels.shape != (nz, ny, nx):
            raise ValidationError(
                f"voxel array shape {self.voxels.shape} does not match dims {self.dims}"
            )
        lo, hi = int(self.voxels.min()), int(self.voxels.max())
        if lo < HU_MIN or hi > HU_MAX:
            raise ValidationError(
                f"HU values [{lo}, {hi}] outside calibrated range [{HU_MIN}, {HU_MAX}]"
            )

    def voxel_volume_mm3(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz


@dataclass(frozen=True, eq=False)
class LobeMap:
    """Per-voxel lung-lobe labels aligned with a companion ``CtVolume``."""

    dims: tuple[int, int, int]
    labels: np.ndarray  # uint8, shape (nz, ny, nx), values 0..5

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LobeMap):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self.labels, other.labels)

    def __post_init__(self) -> None:
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(
            self, "labels", _as_readonly(np.asarray(self.labels, dtype=np.uint8))
        )
        self.validate()

    def validate(self) -> None:
        nx, ny, nz = self.dims
        if self.labels.shape != (nz, ny, nx):
            raise ValidationError(
                f"lobe label shape {self.labels.shape} does not match dims {self.dims}"
            )
        if int(self.labels.max(initial=0)) > 5:
            raise ValidationError("lobe labels must be in 0..5")
        if not self.labels.any():
            raise ValidationError("lobe map has no nonzero voxels")

    def label_at(self, x: int, y: int, z: int) -> int:
        return int(self.labels[z, y, x])


@dataclass(frozen=True)
class NoduleCandidate:
    """One detected nodule candidate in voxel coordinates.

    ``bbox`` is inclusive on both corners: ((xmin, ymin, zmin), (xmax, ymax,
    zmax)). ``mask``, when present, is a frozenset of (x, y, z) voxels inside
    the bbox.
    """

    id: str
    centroid: tuple[int, int, int]
    bbox: tuple[tuple[int, int, int], tuple[int, int, int]]
    confidence: float
    mask: Optional[frozenset[tuple[int, int, int]]] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "centroid", tuple(int(c) for c in self.centroid))
        lo, hi = self.bbox
        object.__setattr__(
            self, "bbox", (tuple(int(v) for v in lo), tuple(int(v) for v in hi))
        )
        if self.mask is not None:
            object.__setattr__(
                self, "mask", frozenset(tuple(int(v) for v in vx) for vx in self.mask)
            )
        self.validate()

    def validate(self) -> None:
        if not self.id:
            raise ValidationError("candidate id must be non-empty")
        lo, hi = self.bbox
        for axis in range(3):
            if lo[axis] > hi[axis]:
                raise ValidationError(f"candidate {self.id}: bbox min > max on axis {axis}")
            if not (lo[axis] <= self.centroid[axis] <= hi[axis]):
                raise ValidationError(f"candidate {self.id}: centroid outside bbox")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValidationError(
                f"candidate {self.id}: confidence {self.confidence} outside [0, 1]"
            )
        if self.mask is not None:
            for vx in self.mask:
                if any(not (lo[a] <= vx[a] <= hi[a]) for a in range(3)):
                    raise ValidationError(
                        f"candidate {self.id}: mask voxel {vx} outside bbox"
                    )

    def validate_within(self, dims: tuple[int, int, int]) -> None:
        lo, hi = self.bbox
        for axis in range(3):
            if lo[axis] < 0 or hi[axis] >= dims[axis]:
                raise ValidationError(
                    f"candidate {self.id}: bbox outside volume dims {dims}"
                )

    def bbox_voxel_count(self) -> int:
        lo, hi = self.bbox
        n = 1
        for axis in range(3):
            n *= hi[axis] - lo[axis] + 1
        return n


@dataclass(frozen=True)
class GroundTruthNodule:
    """A verified nodule: voxel centroid plus equivalent-sphere diameter in mm."""

    id: str
    centroid: tuple[int, int, int]
    diameter_mm: float
    mask: Optional[frozenset[tuple[int, int, int]]] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "centroid", tuple(int(c) for c in self.centroid))
        if self.mask is not None:
            object.__setattr__(
                self, "mask", frozenset(tuple(int(v) for v in vx) for vx in self.mask)
            )
        self.validate()

    def validate(self) -> None:
        if not self.id:
            raise ValidationError("truth nodule id must be non-empty")
        if self.diameter_mm <= 0:
            raise ValidationError(f"truth {self.id}: diameter must be > 0")

    def validate_within(self, dims: tuple[int, int, int]) -> None:
        if any(not (0 <= self.centroid[a] < dims[a]) for a in range(3)):
            raise ValidationError(f"truth {self.id}: centroid outside volume dims {dims}")


@dataclass(frozen=True)
class Verdict:
    """A keep/discard/reject decision for one candidate."""

    candidate_id: str
    decision: Decision
    rationale: str = ""
    source: VerdictSource = VerdictSource.LVM

    def __post_init__(self) -> None:
        object.__setattr__(self, "decision", Decision(self.decision))
        object.__setattr__(self, "source", VerdictSource(self.source))
        self.validate()

    def validate(self) -> None:
        if self.decision is Decision.REJECT and self.source is not VerdictSource.LVM:
            raise ValidationError(
                f"verdict for {self.candidate_id}: reject can only originate from the LVM"
            )


@dataclass(frozen=True)
class StrategyConfig:
    """The six prompt-strategy toggles plus the RNG seed driving random choices."""

    single_vision_input: bool = True
    leave_time_to_think: bool = True
    conceal_medical_intent: bool = True
    guiding_questions: bool = True
    vision_instructions: bool = True
    highlight_roi: bool = True
    rng_seed: int = 0

    TOGGLE_NAMES = (
        "single_vision_input",
        "leave_time_to_think",
        "conceal_medical_intent",
        "guiding_questions",
        "vision_instructions",
        "highlight_roi",
    )

    def __post_init__(self) -> None:
        if not (0 <= int(self.rng_seed) < 2**64):
            raise ValidationError("rng_seed must fit in an unsigned 64-bit integer")

    def toggles(self) -> tuple[bool, ...]:
        return tuple(getattr(self, name) for name in self.TOGGLE_NAMES)

    def with_seed(self, seed: int) -> "StrategyConfig":
        return replace(self, rng_seed=seed)

    def label(self) -> str:
        """Short human-readable name: 'all_on' or '<first disabled toggle>_off'."""
        off = [name for name in self.TOGGLE_NAMES if not getattr(self, name)]
        if not off:
            return "all_on"
        return "+".join(f"{name}_off" for name in off)


@dataclass(frozen=True)
class Provenance:
    created_at: str = "1970-01-01T00:00:00Z"
    config_hash: str = ""


@dataclass
class StudyBundle:
    """Everything known about one study: volume, lobes, candidates, text, verdicts.

    ``verdicts`` holds the current effective decision per candidate (at most
    one each); ``decision_log`` is the append-only history including
    superseded entries, so human overrides never erase LVM output.
    """

    study_id: str
    volume: CtVolume
    lobes: LobeMap
    candidates: list[NoduleCandidate] = field(default_factory=list)
    truth: Optional[list[GroundTruthNodule]] = None
    description: Optional[str] = None
    verdicts: list[Verdict] = field(default_factory=list)
    decision_log: list[Verdict] = field(default_factory=list)
    provenance: Provenance = field(default_factory=Provenance)

    def validate(self) -> None:
        if not self.study_id:
            raise ValidationError("study_id must be non-empty")
        self.volume.validate()
        self.lobes.validate()
        if self.lobes.dims != self.volume.dims:
            raise ValidationError(
                f"lobe dims {self.lobes.dims} do not match volume dims {self.volume.dims}"
            )
        seen: set[str] = set()
        for cand in self.candidates:
            cand.validate()
            cand.validate_within(self.volume.dims)
            if cand.id in seen:
                raise ValidationError(f"duplicate candidate id {cand.id!r}")
            seen.add(cand.id)
        if self.truth is not None:
            truth_seen: set[str] = set()
            for gt in self.truth:
                gt.validate()
                gt.validate_within(self.volume.dims)
                if gt.id in truth_seen:
                    raise ValidationError(f"duplicate truth id {gt.id!r}")
                truth_seen.add(gt.id)
        verdict_seen: set[str] = set()
        for verdict in self.verdicts:
            verdict.validate()
            if verdict.candidate_id not in seen:
                raise ValidationError(
                    f"verdict references unknown candidate {verdict.candidate_id!r}"
                )
            if verdict.candidate_id in verdict_seen:
                raise ValidationError(
                    f"more than one verdict for candidate {verdict.candidate_id!r}"
                )
            verdict_seen.add(verdict.candidate_id)

    def candidate_by_id(self, candidate_id: str) -> NoduleCandidate:
        for cand in self.candidates:
            if cand.id == candidate_id:
                return cand
        raise KeyError(candidate_id)

    def verdict_for(self, candidate_id: str) -> Optional[Verdict]:
        for verdict in self.verdicts:
            if verdict.candidate_id == candidate_id:
                return verdict
        return None

    def set_verdict(self, verdict: Verdict) -> None:
        """Install/replace the current verdict and append it to the log."""
        self.verdicts = [v for v in self.verdicts if v.candidate_id != verdict.candidate_id]
        self.verdicts.append(verdict)
        self.decision_log.append(verdict)


def locate_candidate(
    candidate: NoduleCandidate, lobes: LobeMap
) -> Optional[tuple[Laterality, Lobe]]:
    """Assign a candidate to a (laterality, lobe) pair from the lobe map.

    Reads the label at the centroid voxel. If that voxel is background but at
    least 50% of the bbox voxels share one nonzero label, that label wins
    (rescue rule for centroids that fall just outside a lobe). Returns None
    for background.
    """
    nx, ny, nz = lobes.dims
    cx, cy, cz = candidate.centroid
    if not (0 <= cx < nx and 0 <= cy < ny and 0 <= cz < nz):
        raise ValidationError(
            f"candidate {candidate.id}: centroid {candidate.centroid} outside lobe map dims"
        )
    label = lobes.label_at(cx, cy, cz)
    if label == 0:
        lo, hi = candidate.bbox
        if lo[0] < 0 or lo[1] < 0 or lo[2] < 0 or hi[0] >= nx or hi[1] >= ny or hi[2] >= nz:
            raise ValidationError(
                f"candidate {candidate.id}: bbox outside lobe map dims"
            )
        box = lobes.labels[lo[2] : hi[2] + 1, lo[1] : hi[1] + 1, lo[0] : hi[0] + 1]
        counts = np.bincount(box.ravel(), minlength=6)
        total = box.size
        nonzero = counts[1:]
        best = int(nonzero.argmax()) + 1
        if counts[best] * 2 >= total and counts[best] > 0:
            label = best
    if label == 0:
        return None
    lat, lobe = LOBE_LABELS[label]
    return (Laterality(lat), Lobe(lobe))
