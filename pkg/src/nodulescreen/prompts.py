"""Prompt assembly under the six-toggle strategy configuration.

Each toggle maps to a concrete treatment:

    single_vision_input    one composite image vs. separate ROI/overlay images
    leave_time_to_think    free-length reasoning vs. an injected 50-word cap
    conceal_medical_intent generalized wording vs. clinical wording (and a
                           chest-wall-free crop of the image)
    guiding_questions      stepwise question sequence vs. one direct question
    vision_instructions    color-reference legend in the image(s) plus a key
    highlight_roi          tight crop around the candidate + contrast gamma

The FINAL ANSWER instruction line is present under every configuration so
that verdicts stay machine-parseable regardless of the ablation column.
Template wording lives in plain-text blocks under ``templates/`` so it can
be audited or replaced without code changes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np

from .model import NoduleCandidate, StrategyConfig, StudyBundle, ValidationError
from .render import RenderSpec, render_slice, select_slice

TEMPLATE_DIR = Path(__file__).parent / "templates"

# trace entry used when a toggle is off
OFF_TREATMENTS = {
    "single_vision_input": "multi_image_input",
    "leave_time_to_think": "word_limit_50",
    "conceal_medical_intent": "clinical_framing",
    "guiding_questions": "direct_question",
    "vision_instructions": "no_color_legend",
    "highlight_roi": "full_frame",
}

HIGHLIGHT_MARGIN_VX = 12
CONCEAL_MARGIN_VX = 2
HIGHLIGHT_GAMMA = 0.8


@dataclass(frozen=True)
class PromptBundle:
    """A fully rendered prompt: PNG payload(s) plus the final text."""

    images: tuple[bytes, ...]
    text: str
    config: StrategyConfig
    trace: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.config.single_vision_input and len(self.images) != 1:
            raise ValidationError("single vision input requires exactly one image")
        if not self.images:
            raise ValidationError("prompt bundle must carry at least one image")


@lru_cache(maxsize=None)
def _block(name: str, template_dir: str) -> str:
    path = Path(template_dir) / f"{name}.txt"
    return path.read_text(encoding="utf-8").strip()


def build_trace(config: StrategyConfig) -> tuple[str, ...]:
    return tuple(
        name if getattr(config, name) else OFF_TREATMENTS[name]
        for name in StrategyConfig.TOGGLE_NAMES
    )


def _xy_rect(bbox) -> tuple[int, int, int, int]:
    (x0, y0, _), (x1, y1, _) = bbox
    return (x0, y0, x1, y1)


def _lung_extent(lobe_slice: np.ndarray, fallback: tuple[int, int, int, int]) -> tuple[int, int, int, int]:
    ys, xs = np.nonzero(lobe_slice)
    if xs.size == 0:
        return fallback
    return (int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))


def plan_crop(
    study: StudyBundle, candidate: NoduleCandidate, config: StrategyConfig, z: int
) -> Optional[tuple[int, int, int, int]]:
    """Work out the crop rectangle implied by the conceal/highlight toggles."""
    nx, ny, _ = study.volume.dims
    cand_rect = _xy_rect(candidate.bbox)

    def pad(rect, margin):
        x0, y0, x1, y1 = rect
        return (
            max(0, x0 - margin),
            max(0, y0 - margin),
            min(nx - 1, x1 + margin),
            min(ny - 1, y1 + margin),
        )

    rects = []
    if config.conceal_medical_intent:
        lung = _lung_extent(study.lobes.labels[z], cand_rect)
        merged = (
            min(lung[0], cand_rect[0]),
            min(lung[1], cand_rect[1]),
            max(lung[2], cand_rect[2]),
            max(lung[3], cand_rect[3]),
        )
        rects.append(pad(merged, CONCEAL_MARGIN_VX))
    if config.highlight_roi:
        rects.append(pad(cand_rect, HIGHLIGHT_MARGIN_VX))
    if not rects:
        return None
    crop = rects[0]
    for rect in rects[1:]:
        crop = (
            max(crop[0], rect[0]),
            max(crop[1], rect[1]),
            min(crop[2], rect[2]),
            min(crop[3], rect[3]),
        )
    return crop


def render_specs_for(
    study: StudyBundle, candidate: NoduleCandidate, config: StrategyConfig
) -> list[RenderSpec]:
    """RenderSpecs for the bundle images: one composite, or ROI + overlay views."""
    z = select_slice(candidate, study.lobes, seed=config.rng_seed, mode="centroid")
    base = RenderSpec(
        slice_index=z,
        include_color_legend=config.vision_instructions,
        crop=plan_crop(study, candidate, config, z),
        gamma=HIGHLIGHT_GAMMA if config.highlight_roi else 1.0,
    )
    if config.single_vision_input:
        return [base]
    return [
        replace(base, show_lobe_overlay=False, show_candidate_outline=True),
        replace(base, show_lobe_overlay=True, show_candidate_outline=False),
    ]


def build_prompt(
    study: StudyBundle,
    candidate: NoduleCandidate,
    config: StrategyConfig,
    template_dir: Path | str = TEMPLATE_DIR,
) -> PromptBundle:
    """Assemble the text and image payloads for one candidate."""
    if not study.description:
        raise ValidationError(f"study {study.study_id} has no description to prompt with")
    tdir = str(template_dir)
    style = "concealed" if config.conceal_medical_intent else "clinical"

    parts = [_block(f"context_{style}", tdir)]
    image_block = "single" if config.single_vision_input else "multi"
    parts.append(_block(f"images_{image_block}_{style}", tdir))
    if config.vision_instructions:
        parts.append(_block(f"vision_key_{style}", tdir))
    parts.append(_block(f"note_header_{style}", tdir))
    parts.append(study.description.strip())
    if config.guiding_questions:
        parts.append(_block(f"guiding_questions_{style}", tdir))
    else:
        parts.append(_block(f"direct_question_{style}", tdir))
    if config.leave_time_to_think:
        parts.append(_block("think_freely", tdir))
    else:
        parts.append(_block("word_cap", tdir))
    parts.append(_block("answer_format", tdir))
    text = "\n\n".join(parts)

    images = tuple(
        render_slice(study.volume, study.lobes, candidate, spec)
        for spec in render_specs_for(study, candidate, config)
    )
    return PromptBundle(images=images, text=text, config=config, trace=build_trace(config))


def ablation_configs(rng_seed: int = 0) -> list[StrategyConfig]:
    """The seven strategy columns: six leave-one-out, then all-on.

    Order matches the ablation table layout: highlight_roi off first, then
    vision_instructions, guiding_questions, conceal_medical_intent,
    leave_time_to_think, single_vision_input off, and finally every toggle
    enabled.
    """
    leave_out_order = (
        "highlight_roi",
        "vision_instructions",
        "guiding_questions",
        "conceal_medical_intent",
        "leave_time_to_think",
        "single_vision_input",
    )
    configs = [
        StrategyConfig(**{name: False}, rng_seed=rng_seed) for name in leave_out_order
    ]
    configs.append(StrategyConfig(rng_seed=rng_seed))
    return configs
