"""Synthetic phantom studies and a deterministic baseline candidate detector.

Phantoms stand in for clinical CT: five ellipsoidal lobes filled with lung
parenchyma around -850 HU inside a soft-tissue body, spherical nodules at a
configurable HU, vessel-like cylinder distractors, lobe-border blobs, and
optional Gaussian noise. Physical positions use the ``index * spacing``
convention (voxel (x, y, z) sits at (x*sx, y*sy, z*sz) mm).

The detector thresholds HU inside the lobes, takes connected components at
6 or 26 connectivity, and filters by physical volume; it is a high-recall
stand-in for a trained detector, so downstream false-positive reduction has
realistic work to do.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .model import (
    HU_MAX,
    HU_MIN,
    LOBE_LABELS,
    CtVolume,
    GroundTruthNodule,
    LobeMap,
    NoduleCandidate,
    Provenance,
    StudyBundle,
    ValidationError,
)
from .store import candidate_from_json

PARENCHYMA_HU = -850
BODY_HU = 40


@dataclass(frozen=True)
class LobeEllipsoid:
    label: int  # 1..5
    center_mm: tuple[float, float, float]
    semi_axes_mm: tuple[float, float, float]

    def contains_mm(self, point_mm: Sequence[float]) -> bool:
        return (
            sum(
                ((point_mm[i] - self.center_mm[i]) / self.semi_axes_mm[i]) ** 2
                for i in range(3)
            )
            <= 1.0
        )


@dataclass(frozen=True)
class PlantedNodule:
    center_mm: tuple[float, float, float]
    diameter_mm: float
    hu: int


@dataclass(frozen=True)
class Distractor:
    """Vessel-like cylinder or lobe-border blob.

    kind = "cylinder": axis p0_mm -> p1_mm with the given radius.
    kind = "border_blob": sphere of radius_mm centered on the surface of the
    ellipsoid with ``lobe_label``, along unit ``direction``.
    """

    kind: str
    hu: int
    radius_mm: float
    p0_mm: Optional[tuple[float, float, float]] = None
    p1_mm: Optional[tuple[float, float, float]] = None
    lobe_label: Optional[int] = None
    direction: Optional[tuple[float, float, float]] = None


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    lobes: tuple[LobeEllipsoid, ...]
    nodules: tuple[PlantedNodule, ...] = ()
    distractors: tuple[Distractor, ...] = ()
    noise_sigma_hu: float = 0.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.noise_sigma_hu < 0:
            raise ValidationError("noise sigma must be >= 0")
        labels = [lobe.label for lobe in self.lobes]
        if any(l not in range(1, 6) for l in labels) or len(set(labels)) != len(labels):
            raise ValidationError("lobe labels must be distinct values in 1..5")
        for nodule in self.nodules:
            if nodule.diameter_mm <= 0:
                raise ValidationError("nodule diameters must be > 0")
            if not any(lobe.contains_mm(nodule.center_mm) for lobe in self.lobes):
                raise ValidationError(
                    f"nodule at {nodule.center_mm} lies outside every lobe ellipsoid"
                )
        for d in self.distractors:
            if d.kind not in ("cylinder", "border_blob"):
                raise ValidationError(f"unknown distractor kind {d.kind!r}")
            if d.radius_mm <= 0:
                raise ValidationError("distractor radius must be > 0")
            if d.kind == "cylinder" and (d.p0_mm is None or d.p1_mm is None):
                raise ValidationError("cylinder distractors need p0_mm and p1_mm")
            if d.kind == "border_blob" and (d.lobe_label is None or d.direction is None):
                raise ValidationError("border_blob distractors need lobe_label and direction")


@dataclass(frozen=True)
class DetectorParams:
    hu_threshold: int = -300
    min_volume_mm3: float = 8.0
    max_volume_mm3: float = 12000.0
    connectivity: int = 26

    def __post_init__(self) -> None:
        if self.min_volume_mm3 >= self.max_volume_mm3:
            raise ValidationError("min volume must be < max volume")
        if self.connectivity not in (6, 26):
            raise ValidationError("connectivity must be 6 or 26")


def default_lobes(dims: tuple[int, int, int], spacing: tuple[float, float, float]) -> tuple[LobeEllipsoid, ...]:
    """Five non-overlapping ellipsoids roughly mimicking lung-lobe layout."""
    ext = tuple(dims[i] * spacing[i] for i in range(3))
    X, Y, Z = ext

    def e(label, cx, cz, ax, az):
        return LobeEllipsoid(
            label=label,
            center_mm=(cx * X, 0.5 * Y, cz * Z),
            semi_axes_mm=(ax * X, 0.30 * Y, az * Z),
        )

    return (
        e(1, 0.72, 0.71, 0.16, 0.19),  # left upper
        e(2, 0.72, 0.29, 0.16, 0.19),  # left lower
        e(3, 0.28, 0.76, 0.16, 0.14),  # right upper
        e(4, 0.28, 0.48, 0.16, 0.10),  # right middle
        e(5, 0.28, 0.20, 0.16, 0.12),  # right lower
    )


def _coord_grids(dims, spacing):
    nx, ny, nz = dims
    sx, sy, sz = spacing
    zz, yy, xx = np.meshgrid(
        np.arange(nz) * sz, np.arange(ny) * sy, np.arange(nx) * sx, indexing="ij"
    )
    return xx, yy, zz


def mm_to_voxel(point_mm: Sequence[float], spacing: Sequence[float]) -> tuple[int, int, int]:
    return tuple(int(round(point_mm[i] / spacing[i])) for i in range(3))


def generate_phantom(spec: PhantomSpec, study_id: str = "phantom") -> StudyBundle:
    """Rasterize a phantom spec into a full study bundle with ground truth."""
    nx, ny, nz = spec.dims
    xx, yy, zz = _coord_grids(spec.dims, spec.spacing)

    labels = np.zeros((nz, ny, nx), dtype=np.uint8)
    for lobe in spec.lobes:
        cx, cy, cz = lobe.center_mm
        ax, ay, az = lobe.semi_axes_mm
        inside = (
            ((xx - cx) / ax) ** 2 + ((yy - cy) / ay) ** 2 + ((zz - cz) / az) ** 2
        ) <= 1.0
        labels[inside] = lobe.label

    hu = np.full((nz, ny, nx), BODY_HU, dtype=np.float64)
    hu[labels > 0] = PARENCHYMA_HU

    for d in spec.distractors:
        if d.kind == "cylinder":
            dist2 = _segment_distance_sq(xx, yy, zz, d.p0_mm, d.p1_mm)
            hu[dist2 <= d.radius_mm**2] = d.hu
        else:
            center = _border_point(spec, d)
            dist2 = (xx - center[0]) ** 2 + (yy - center[1]) ** 2 + (zz - center[2]) ** 2
            hu[dist2 <= d.radius_mm**2] = d.hu

    truth = []
    for i, nodule in enumerate(spec.nodules):
        cx, cy, cz = nodule.center_mm
        r = nodule.diameter_mm / 2.0
        dist2 = (xx - cx) ** 2 + (yy - cy) ** 2 + (zz - cz) ** 2
        inside = dist2 <= r * r
        hu[inside] = nodule.hu
        vz, vy, vx = np.nonzero(inside)
        mask = frozenset(zip(vx.tolist(), vy.tolist(), vz.tolist()))
        truth.append(
            GroundTruthNodule(
                id=f"gt-{i:03d}",
                centroid=mm_to_voxel(nodule.center_mm, spec.spacing),
                diameter_mm=nodule.diameter_mm,
                mask=mask if mask else None,
            )
        )

    if spec.noise_sigma_hu > 0:
        rng = np.random.default_rng(spec.rng_seed)
        hu += rng.normal(0.0, spec.noise_sigma_hu, size=hu.shape)

    voxels = np.clip(np.rint(hu), HU_MIN, HU_MAX).astype(np.int16)
    bundle = StudyBundle(
        study_id=study_id,
        volume=CtVolume(dims=spec.dims, spacing=spec.spacing, voxels=voxels),
        lobes=LobeMap(dims=spec.dims, labels=labels),
        truth=truth,
        provenance=Provenance(config_hash=spec_hash(spec)),
    )
    bundle.validate()
    return bundle


def _segment_distance_sq(xx, yy, zz, p0, p1):
    """Squared distance from every voxel position to the segment p0-p1 (mm)."""
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    axis = p1 - p0
    denom = float(axis @ axis)
    dx, dy, dz = xx - p0[0], yy - p0[1], zz - p0[2]
    if denom == 0.0:
        return dx * dx + dy * dy + dz * dz
    t = (dx * axis[0] + dy * axis[1] + dz * axis[2]) / denom
    t = np.clip(t, 0.0, 1.0)
    cx = dx - t * axis[0]
    cy = dy - t * axis[1]
    cz = dz - t * axis[2]
    return cx * cx + cy * cy + cz * cz


def _border_point(spec: PhantomSpec, d: Distractor) -> tuple[float, float, float]:
    lobe = next((l for l in spec.lobes if l.label == d.lobe_label), None)
    if lobe is None:
        raise ValidationError(f"border_blob references missing lobe label {d.lobe_label}")
    direction = np.asarray(d.direction, dtype=np.float64)
    norm = float(np.linalg.norm(direction))
    if norm == 0.0:
        raise ValidationError("border_blob direction must be nonzero")
    direction /= norm
    # scale so the point lands on the ellipsoid surface
    t = 1.0 / math.sqrt(
        sum((direction[i] / lobe.semi_axes_mm[i]) ** 2 for i in range(3))
    )
    return tuple(lobe.center_mm[i] + t * direction[i] for i in range(3))


def spec_hash(spec: PhantomSpec) -> str:
    return hashlib.sha256(json.dumps(spec_to_json(spec), sort_keys=True).encode()).hexdigest()[:16]


def candidate_id(centroid: Sequence[int], bbox) -> str:
    """Content-derived id, stable across re-runs for replay matching."""
    lo, hi = bbox
    key = f"{tuple(centroid)}|{tuple(lo)}|{tuple(hi)}"
    return "cand-" + hashlib.sha256(key.encode()).hexdigest()[:12]


def baseline_detect(
    volume: CtVolume, lobes: LobeMap, params: DetectorParams = DetectorParams()
) -> list[NoduleCandidate]:
    """Threshold + connected components + physical volume filter.

    Only voxels inside a nonzero lobe label participate. Components are
    emitted sorted by descending physical volume (candidate id breaks ties)
    with confidence = min(1, volume / max_volume).
    """
    if volume.dims != lobes.dims:
        raise ValidationError(
            f"volume dims {volume.dims} do not match lobe dims {lobes.dims}"
        )
    mask = (volume.voxels >= params.hu_threshold) & (lobes.labels > 0)
    structure = ndimage.generate_binary_structure(3, 1 if params.connectivity == 6 else 3)
    labeled, count = ndimage.label(mask, structure=structure)
    voxel_mm3 = volume.voxel_volume_mm3()

    found: list[tuple[float, NoduleCandidate]] = []
    for region in range(1, count + 1):
        vz, vy, vx = np.nonzero(labeled == region)
        vol_mm3 = vx.size * voxel_mm3
        if not (params.min_volume_mm3 <= vol_mm3 <= params.max_volume_mm3):
            continue
        centroid = (
            int(round(float(vx.mean()))),
            int(round(float(vy.mean()))),
            int(round(float(vz.mean()))),
        )
        bbox = (
            (int(vx.min()), int(vy.min()), int(vz.min())),
            (int(vx.max()), int(vy.max()), int(vz.max())),
        )
        cand = NoduleCandidate(
            id=candidate_id(centroid, bbox),
            centroid=centroid,
            bbox=bbox,
            confidence=min(1.0, vol_mm3 / params.max_volume_mm3),
            mask=frozenset(zip(vx.tolist(), vy.tolist(), vz.tolist())),
        )
        found.append((vol_mm3, cand))

    found.sort(key=lambda item: (-item[0], item[1].id))
    return [cand for _, cand in found]


def ingest_candidates(path: Path | str, dims: Optional[tuple[int, int, int]] = None) -> list[NoduleCandidate]:
    """Read and validate a candidates.json file produced by any detector."""
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise ValidationError("candidates file must hold a JSON array")
    candidates = [candidate_from_json(entry, i) for i, entry in enumerate(data)]
    seen: set[str] = set()
    for i, cand in enumerate(candidates):
        if cand.id in seen:
            raise ValidationError(f"candidates[{i}]: duplicate id {cand.id!r}")
        seen.add(cand.id)
        if dims is not None:
            cand.validate_within(dims)
    return candidates


# --- phantom spec (de)serialization ---------------------------------------

def spec_to_json(spec: PhantomSpec) -> dict:
    data = {
        "dims": list(spec.dims),
        "spacing": list(spec.spacing),
        "lobes": [
            {
                "label": l.label,
                "center_mm": list(l.center_mm),
                "semi_axes_mm": list(l.semi_axes_mm),
            }
            for l in spec.lobes
        ],
        "nodules": [
            {"center_mm": list(n.center_mm), "diameter_mm": n.diameter_mm, "hu": n.hu}
            for n in spec.nodules
        ],
        "distractors": [],
        "noise_sigma_hu": spec.noise_sigma_hu,
        "rng_seed": spec.rng_seed,
    }
    for d in spec.distractors:
        entry = {"kind": d.kind, "hu": d.hu, "radius_mm": d.radius_mm}
        if d.kind == "cylinder":
            entry["p0_mm"] = list(d.p0_mm)
            entry["p1_mm"] = list(d.p1_mm)
        else:
            entry["lobe_label"] = d.lobe_label
            entry["direction"] = list(d.direction)
        data["distractors"].append(entry)
    return data


def spec_from_json(data: dict) -> PhantomSpec:
    lobes = tuple(
        LobeEllipsoid(
            label=int(l["label"]),
            center_mm=tuple(l["center_mm"]),
            semi_axes_mm=tuple(l["semi_axes_mm"]),
        )
        for l in data.get("lobes", [])
    )
    nodules = tuple(
        PlantedNodule(
            center_mm=tuple(n["center_mm"]),
            diameter_mm=float(n["diameter_mm"]),
            hu=int(n["hu"]),
        )
        for n in data.get("nodules", [])
    )
    distractors = tuple(
        Distractor(
            kind=str(d["kind"]),
            hu=int(d["hu"]),
            radius_mm=float(d["radius_mm"]),
            p0_mm=tuple(d["p0_mm"]) if "p0_mm" in d else None,
            p1_mm=tuple(d["p1_mm"]) if "p1_mm" in d else None,
            lobe_label=d.get("lobe_label"),
            direction=tuple(d["direction"]) if "direction" in d else None,
        )
        for d in data.get("distractors", [])
    )
    return PhantomSpec(
        dims=tuple(int(v) for v in data["dims"]),
        spacing=tuple(float(v) for v in data["spacing"]),
        lobes=lobes,
        nodules=nodules,
        distractors=distractors,
        noise_sigma_hu=float(data.get("noise_sigma_hu", 0.0)),
        rng_seed=int(data.get("rng_seed", 0)),
    )


def load_spec(path: Path | str) -> PhantomSpec:
    return spec_from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def save_spec(spec: PhantomSpec, path: Path | str) -> None:
    Path(path).write_text(
        json.dumps(spec_to_json(spec), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def describe_truth(bundle: StudyBundle) -> str:
    """Plain-language findings note composed from planted ground truth.

    Gives phantom studies a realistic clinical description so the text
    parser and the prompt pipeline have something to work with.
    """
    if not bundle.truth:
        return "No nodules identified."
    sentences = []
    for gt in bundle.truth:
        cx, cy, cz = gt.centroid
        label = int(bundle.lobes.labels[cz, cy, cx])
        if label:
            lat, lobe = LOBE_LABELS[label]
            place = f"in the {lat} {lobe} lobe"
        else:
            place = "in the lung"
        size = f"{gt.diameter_mm:g} mm"
        sentences.append(f"A nodule measuring {size} {place}.")
    return " ".join(sentences)
