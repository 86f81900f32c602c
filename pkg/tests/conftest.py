"""Shared phantom builders for the test suite."""

from __future__ import annotations

import pytest

from nodulescreen.model import Decision, Verdict, VerdictSource
from nodulescreen.synth import (
    DetectorParams,
    Distractor,
    PhantomSpec,
    PlantedNodule,
    baseline_detect,
    default_lobes,
    describe_truth,
    generate_phantom,
)

DIMS = (64, 64, 48)
SPACING = (1.0, 1.0, 1.0)


def build_spec(
    n_nodules: int = 2,
    with_distractors: bool = True,
    noise_sigma_hu: float = 18.0,
    dims=DIMS,
    spacing=SPACING,
    rng_seed: int = 11,
    diameter_mm: float = 8.0,
) -> PhantomSpec:
    """A small phantom: nodules sit at lobe centers, distractors elsewhere."""
    lobes = default_lobes(dims, spacing)
    nodules = tuple(
        PlantedNodule(center_mm=lobes[i].center_mm, diameter_mm=diameter_mm, hu=30)
        for i in range(n_nodules)
    )
    distractors: tuple[Distractor, ...] = ()
    if with_distractors:
        x, y, z = lobes[2].center_mm
        distractors = (
            Distractor(
                kind="cylinder",
                hu=60,
                radius_mm=1.6,
                p0_mm=(x - 6.0, y, z),
                p1_mm=(x + 6.0, y, z),
            ),
            Distractor(
                kind="border_blob",
                hu=45,
                radius_mm=2.5,
                lobe_label=5,
                direction=(0.0, 0.0, -1.0),
            ),
        )
    return PhantomSpec(
        dims=dims,
        spacing=spacing,
        lobes=lobes,
        nodules=nodules,
        distractors=distractors,
        noise_sigma_hu=noise_sigma_hu,
        rng_seed=rng_seed,
    )


def build_study(
    study_id: str = "study-a",
    detect: bool = True,
    describe: bool = True,
    detector: DetectorParams = DetectorParams(),
    **spec_kwargs,
):
    bundle = generate_phantom(build_spec(**spec_kwargs), study_id=study_id)
    if detect:
        bundle.candidates = baseline_detect(bundle.volume, bundle.lobes, detector)
    if describe:
        bundle.description = describe_truth(bundle)
    bundle.validate()
    return bundle


def decide_all(bundle, decision: Decision = Decision.KEEP) -> None:
    for candidate in bundle.candidates:
        bundle.set_verdict(
            Verdict(candidate.id, decision, "test decision", VerdictSource.LVM)
        )


@pytest.fixture
def phantom_study():
    """Fresh two-nodule study with candidates, truth and a description."""
    return build_study()


@pytest.fixture
def quiet_study():
    """Noise-free single-nodule study (for byte-identity style checks)."""
    return build_study(study_id="study-q", n_nodules=1, noise_sigma_hu=0.0)
