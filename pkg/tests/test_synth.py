"""Phantom generation and baseline detection, checked against a BFS oracle."""

from __future__ import annotations

import numpy as np
import pytest

from nodulescreen.model import CtVolume, LobeMap, ValidationError
from nodulescreen.synth import (
    BODY_HU,
    PARENCHYMA_HU,
    DetectorParams,
    Distractor,
    LobeEllipsoid,
    PhantomSpec,
    PlantedNodule,
    baseline_detect,
    candidate_id,
    default_lobes,
    describe_truth,
    generate_phantom,
    ingest_candidates,
    load_spec,
    mm_to_voxel,
    save_spec,
    spec_from_json,
    spec_to_json,
)
from nodulescreen.textparse import Polarity, parse_description

from .conftest import build_spec, build_study
from .oracles import detect_oracle


def boxed_lobe_study(bright_voxels, dims=(12, 10, 8), spacing=(1.0, 1.0, 1.0)):
    """Hand-built study: one big label-1 box, listed voxels raised to -100 HU."""
    nx, ny, nz = dims
    labels = np.zeros((nz, ny, nx), dtype=np.uint8)
    labels[1 : nz - 1, 1 : ny - 1, 1 : nx - 1] = 1
    voxels = np.full((nz, ny, nx), PARENCHYMA_HU, dtype=np.int16)
    for x, y, z in bright_voxels:
        voxels[z, y, x] = -100
    return (
        CtVolume(dims=dims, spacing=spacing, voxels=voxels),
        LobeMap(dims=dims, labels=labels),
    )


class TestPhantomGeneration:
    def test_same_spec_is_bit_identical(self):
        spec = build_spec()
        a = generate_phantom(spec, study_id="s")
        b = generate_phantom(spec, study_id="s")
        assert np.array_equal(a.volume.voxels, b.volume.voxels)
        assert np.array_equal(a.lobes.labels, b.lobes.labels)
        assert a.truth == b.truth

    def test_lobe_interior_is_parenchyma_and_outside_is_body(self):
        spec = build_spec(n_nodules=0, with_distractors=False, noise_sigma_hu=0.0)
        bundle = generate_phantom(spec)
        inside = bundle.volume.voxels[bundle.lobes.labels > 0]
        outside = bundle.volume.voxels[bundle.lobes.labels == 0]
        assert int(inside.max()) == int(inside.min()) == PARENCHYMA_HU
        assert int(outside.max()) == int(outside.min()) == BODY_HU

    def test_truth_masks_carry_the_nodule_hu(self):
        spec = build_spec(n_nodules=2, with_distractors=False, noise_sigma_hu=0.0)
        bundle = generate_phantom(spec)
        for gt, planted in zip(bundle.truth, spec.nodules):
            assert gt.diameter_mm == planted.diameter_mm
            for x, y, z in gt.mask:
                assert int(bundle.volume.voxels[z, y, x]) == planted.hu

    def test_truth_centroid_is_rounded_mm_position(self):
        spec = build_spec(n_nodules=1, with_distractors=False, noise_sigma_hu=0.0)
        bundle = generate_phantom(spec)
        assert bundle.truth[0].centroid == mm_to_voxel(
            spec.nodules[0].center_mm, spec.spacing
        )

    def test_all_five_default_lobes_rasterize(self):
        bundle = generate_phantom(build_spec(n_nodules=0, with_distractors=False))
        present = set(np.unique(bundle.lobes.labels)) - {0}
        assert present == {1, 2, 3, 4, 5}

    def test_noise_respects_seed(self):
        a = generate_phantom(build_spec(rng_seed=3))
        b = generate_phantom(build_spec(rng_seed=4))
        assert not np.array_equal(a.volume.voxels, b.volume.voxels)


class TestSpecValidation:
    def test_nodule_outside_every_lobe_rejected(self):
        lobes = default_lobes((32, 32, 32), (1.0, 1.0, 1.0))
        with pytest.raises(ValidationError):
            PhantomSpec(
                dims=(32, 32, 32),
                spacing=(1.0, 1.0, 1.0),
                lobes=lobes,
                nodules=(PlantedNodule(center_mm=(0.0, 0.0, 0.0), diameter_mm=4.0, hu=30),),
            )

    def test_cylinder_needs_both_endpoints(self):
        lobes = default_lobes((32, 32, 32), (1.0, 1.0, 1.0))
        with pytest.raises(ValidationError):
            PhantomSpec(
                dims=(32, 32, 32),
                spacing=(1.0, 1.0, 1.0),
                lobes=lobes,
                distractors=(Distractor(kind="cylinder", hu=60, radius_mm=1.0),),
            )

    def test_border_blob_needs_lobe_and_direction(self):
        lobes = default_lobes((32, 32, 32), (1.0, 1.0, 1.0))
        with pytest.raises(ValidationError):
            PhantomSpec(
                dims=(32, 32, 32),
                spacing=(1.0, 1.0, 1.0),
                lobes=lobes,
                distractors=(Distractor(kind="border_blob", hu=45, radius_mm=1.0),),
            )

    def test_duplicate_lobe_labels_rejected(self):
        lobe = LobeEllipsoid(label=1, center_mm=(8, 8, 8), semi_axes_mm=(4, 4, 4))
        with pytest.raises(ValidationError):
            PhantomSpec(dims=(16, 16, 16), spacing=(1, 1, 1), lobes=(lobe, lobe))

    def test_negative_noise_rejected(self):
        lobes = default_lobes((16, 16, 16), (1.0, 1.0, 1.0))
        with pytest.raises(ValidationError):
            PhantomSpec(dims=(16, 16, 16), spacing=(1, 1, 1), lobes=lobes, noise_sigma_hu=-1.0)


class TestBaselineDetect:
    @pytest.mark.parametrize("connectivity", [6, 26])
    def test_matches_flood_fill_oracle_on_phantoms(self, connectivity):
        params = DetectorParams(connectivity=connectivity)
        for seed in (11, 12, 13):
            bundle = build_study(detect=False, describe=False, rng_seed=seed)
            expected = detect_oracle(bundle.volume, bundle.lobes, params)
            got = baseline_detect(bundle.volume, bundle.lobes, params)
            assert {c.mask for c in got} == {e["mask"] for e in expected}
            by_mask = {e["mask"]: e for e in expected}
            for cand in got:
                ref = by_mask[cand.mask]
                assert cand.centroid == ref["centroid"]
                assert cand.bbox == ref["bbox"]
                assert cand.confidence == pytest.approx(ref["confidence"])

    def test_sorted_by_descending_volume(self):
        bundle = build_study(detect=False, describe=False)
        candidates = baseline_detect(bundle.volume, bundle.lobes)
        volumes = [len(c.mask) for c in candidates]
        assert volumes == sorted(volumes, reverse=True)

    def test_every_planted_nodule_is_recovered(self):
        for seed in range(5):
            bundle = build_study(detect=False, describe=False, rng_seed=20 + seed)
            candidates = baseline_detect(bundle.volume, bundle.lobes)
            for gt in bundle.truth:
                hits = [
                    c
                    for c in candidates
                    if c.mask is not None and gt.mask is not None and c.mask & gt.mask
                ]
                assert hits, f"seed {seed}: planted nodule {gt.id} missed"

    def test_voxels_outside_lobes_are_ignored(self):
        volume, lobes = boxed_lobe_study([(0, 0, 0)])  # bright voxel, label 0
        assert baseline_detect(volume, lobes, DetectorParams(min_volume_mm3=0.5)) == []

    def test_volume_filter_bounds_are_inclusive(self):
        component = [(3, 3, 3), (4, 3, 3), (5, 3, 3), (6, 3, 3)]  # 4 voxels = 4 mm^3
        volume, lobes = boxed_lobe_study(component)
        base = dict(hu_threshold=-200, max_volume_mm3=100.0)
        at_min = baseline_detect(volume, lobes, DetectorParams(min_volume_mm3=4.0, **base))
        assert len(at_min) == 1
        above_min = baseline_detect(volume, lobes, DetectorParams(min_volume_mm3=4.0001, **base))
        assert above_min == []
        at_max = baseline_detect(
            volume, lobes, DetectorParams(min_volume_mm3=1.0, hu_threshold=-200, max_volume_mm3=4.0)
        )
        assert len(at_max) == 1
        below_max = baseline_detect(
            volume, lobes, DetectorParams(min_volume_mm3=1.0, hu_threshold=-200, max_volume_mm3=3.9999)
        )
        assert below_max == []

    def test_hu_threshold_is_inclusive(self):
        volume, lobes = boxed_lobe_study([(3, 3, 3)])
        params = DetectorParams(hu_threshold=-100, min_volume_mm3=0.5, max_volume_mm3=10.0)
        assert len(baseline_detect(volume, lobes, params)) == 1
        params = DetectorParams(hu_threshold=-99, min_volume_mm3=0.5, max_volume_mm3=10.0)
        assert baseline_detect(volume, lobes, params) == []

    def test_connectivity_changes_component_structure(self):
        diagonal = [(3, 3, 3), (4, 4, 4)]
        volume, lobes = boxed_lobe_study(diagonal)
        base = dict(hu_threshold=-200, min_volume_mm3=0.5, max_volume_mm3=10.0)
        merged = baseline_detect(volume, lobes, DetectorParams(connectivity=26, **base))
        split = baseline_detect(volume, lobes, DetectorParams(connectivity=6, **base))
        assert len(merged) == 1
        assert len(split) == 2

    def test_confidence_saturates_at_one(self):
        component = [(x, y, 3) for x in range(2, 8) for y in range(2, 8)]
        volume, lobes = boxed_lobe_study(component)
        params = DetectorParams(hu_threshold=-200, min_volume_mm3=1.0, max_volume_mm3=10.0)
        # 36 mm^3 component vs max 10: filtered out entirely
        assert baseline_detect(volume, lobes, params) == []
        params = DetectorParams(hu_threshold=-200, min_volume_mm3=1.0, max_volume_mm3=36.0)
        (cand,) = baseline_detect(volume, lobes, params)
        assert cand.confidence == 1.0

    def test_dims_mismatch_is_error(self):
        volume, _ = boxed_lobe_study([])
        _, lobes = boxed_lobe_study([], dims=(12, 10, 6))
        with pytest.raises(ValidationError):
            baseline_detect(volume, lobes)

    def test_detector_params_validation(self):
        with pytest.raises(ValidationError):
            DetectorParams(min_volume_mm3=10.0, max_volume_mm3=5.0)
        with pytest.raises(ValidationError):
            DetectorParams(connectivity=18)


class TestCandidateIds:
    def test_id_depends_only_on_geometry(self):
        a = candidate_id((1, 2, 3), ((0, 0, 0), (4, 4, 4)))
        b = candidate_id((1, 2, 3), ((0, 0, 0), (4, 4, 4)))
        c = candidate_id((1, 2, 4), ((0, 0, 0), (4, 4, 4)))
        assert a == b
        assert a != c
        assert a.startswith("cand-")


class TestIngestCandidates:
    def test_round_trip_of_detected_candidates(self, tmp_path, phantom_study):
        import json

        from nodulescreen.store import candidate_to_json

        path = tmp_path / "candidates.json"
        path.write_text(json.dumps([candidate_to_json(c) for c in phantom_study.candidates]))
        loaded = ingest_candidates(path, dims=phantom_study.volume.dims)
        assert loaded == phantom_study.candidates

    def test_non_array_payload_rejected(self, tmp_path):
        path = tmp_path / "candidates.json"
        path.write_text('{"id": "x"}')
        with pytest.raises(ValidationError):
            ingest_candidates(path)

    def test_duplicate_ids_rejected(self, tmp_path):
        import json

        entry = {
            "id": "dup",
            "centroid": [1, 1, 1],
            "bbox": [[0, 0, 0], [2, 2, 2]],
            "confidence": 0.5,
        }
        path = tmp_path / "candidates.json"
        path.write_text(json.dumps([entry, entry]))
        with pytest.raises(ValidationError):
            ingest_candidates(path)

    def test_out_of_bounds_candidate_rejected(self, tmp_path):
        import json

        entry = {
            "id": "big",
            "centroid": [1, 1, 1],
            "bbox": [[0, 0, 0], [99, 2, 2]],
            "confidence": 0.5,
        }
        path = tmp_path / "candidates.json"
        path.write_text(json.dumps([entry]))
        with pytest.raises(ValidationError):
            ingest_candidates(path, dims=(10, 10, 10))


class TestSpecSerialization:
    def test_json_round_trip(self):
        spec = build_spec()
        assert spec_from_json(spec_to_json(spec)) == spec

    def test_file_round_trip(self, tmp_path):
        spec = build_spec(n_nodules=1)
        path = tmp_path / "spec.json"
        save_spec(spec, path)
        assert load_spec(path) == spec


class TestDescribeTruth:
    def test_empty_truth_reads_as_negative_report(self):
        bundle = build_study(n_nodules=0, with_distractors=False, describe=False)
        assert describe_truth(bundle) == "No nodules identified."

    def test_description_parses_back_to_the_planted_locations(self):
        bundle = build_study(n_nodules=2, describe=False)
        report = parse_description(describe_truth(bundle))
        assert len(report.descriptors) == 2
        assert not report.unrecognized_spans
        # planted at the centers of lobes 1 (left upper) and 2 (left lower)
        got = {(d.laterality.value, d.lobe.value) for d in report.descriptors}
        assert got == {("left", "upper"), ("left", "lower")}
        for d in report.descriptors:
            assert d.polarity is Polarity.AFFIRMED
            assert d.size_mm == (8.0, 8.0)
