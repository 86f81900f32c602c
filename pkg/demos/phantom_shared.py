"""Shared phantom recipe for the demo scripts."""

from nodulescreen.synth import (
    Distractor,
    PhantomSpec,
    PlantedNodule,
    default_lobes,
    generate_phantom,
)

DIMS = (64, 64, 48)
SPACING = (1.0, 1.0, 1.0)


def two_nodule_study(study_id: str, rng_seed: int = 11, diameter_mm: float = 8.0):
    """Two genuine nodules plus a cylinder and a border blob as decoys.

    Candidate ids are derived from component geometry, so studies that
    should behave independently need distinct diameters, not just noise.
    """
    lobes = default_lobes(DIMS, SPACING)
    x, y, z = lobes[2].center_mm
    spec = PhantomSpec(
        dims=DIMS,
        spacing=SPACING,
        lobes=lobes,
        nodules=(
            PlantedNodule(center_mm=lobes[0].center_mm, diameter_mm=diameter_mm, hu=30),
            PlantedNodule(center_mm=lobes[1].center_mm, diameter_mm=diameter_mm, hu=30),
        ),
        distractors=(
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
        ),
        noise_sigma_hu=18.0,
        rng_seed=rng_seed,
    )
    return generate_phantom(spec, study_id=study_id)
