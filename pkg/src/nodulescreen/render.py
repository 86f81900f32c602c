"""Deterministic slice rendering: HU windowing, lobe overlays, ROI outline.

All composition happens in numpy on RGBA uint8 so identical inputs yield
byte-identical PNG payloads. The optional color-reference legend is stamped
into the final pixel grid (after crop/resize) at fixed offsets, so its
swatches always carry the exact configured RGBA values.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from PIL import Image

from .model import CtVolume, LobeMap, NoduleCandidate, ValidationError

# Okabe-Ito palette (colorblind safe), semi-transparent fills for labels 1..5.
DEFAULT_LOBE_COLORS: tuple[tuple[int, int, int, int], ...] = (
    (230, 159, 0, 110),    # left upper
    (86, 180, 233, 110),   # left lower
    (0, 158, 115, 110),    # right upper
    (240, 228, 66, 110),   # right middle
    (204, 121, 167, 110),  # right lower
)
DEFAULT_OUTLINE_COLOR: tuple[int, int, int, int] = (213, 94, 0, 255)

# Legend geometry in output pixels: 6 swatches in a row at the top-left.
LEGEND_ORIGIN = (2, 2)
LEGEND_SWATCH = 10
LEGEND_STEP = 12


class RenderError(ValidationError):
    pass


@dataclass(frozen=True)
class RenderSpec:
    """Controls one slice rendering."""

    slice_index: int
    window_level: float = -600.0
    window_width: float = 1500.0
    lobe_colors: tuple[tuple[int, int, int, int], ...] = DEFAULT_LOBE_COLORS
    outline_color: tuple[int, int, int, int] = DEFAULT_OUTLINE_COLOR
    include_color_legend: bool = False
    crop: Optional[tuple[int, int, int, int]] = None  # inclusive (x0, y0, x1, y1)
    gamma: float = 1.0
    output_size: Optional[tuple[int, int]] = (256, 256)
    show_lobe_overlay: bool = True
    show_candidate_outline: bool = True

    def __post_init__(self) -> None:
        if self.window_width <= 0:
            raise RenderError("window width must be > 0")
        if self.gamma <= 0:
            raise RenderError("gamma must be > 0")
        if len(self.lobe_colors) != 5:
            raise RenderError("exactly 5 lobe overlay colors required")


def window_to_unit(hu: np.ndarray, level: float, width: float) -> np.ndarray:
    """Map HU to [0, 1] display gray: clamp((HU - (WL - WW/2)) / WW, 0, 1)."""
    low = level - width / 2.0
    return np.clip((hu.astype(np.float64) - low) / width, 0.0, 1.0)


def select_slice(
    candidate: NoduleCandidate,
    lobes: LobeMap,
    seed: int = 0,
    mode: str = "centroid",
) -> int:
    """Pick the z slice to render for a candidate.

    "centroid" (default) returns the centroid slice. "random" draws a seeded
    uniform choice among slices that intersect the candidate bbox and contain
    a nonzero lobe label inside the bbox xy-rectangle; no such slice is an
    error.
    """
    if mode == "centroid":
        return candidate.centroid[2]
    if mode != "random":
        raise RenderError(f"unknown slice selection mode {mode!r}")
    (x0, y0, z0), (x1, y1, z1) = candidate.bbox
    eligible = [
        z
        for z in range(z0, z1 + 1)
        if lobes.labels[z, y0 : y1 + 1, x0 : x1 + 1].any()
    ]
    if not eligible:
        raise RenderError(
            f"candidate {candidate.id}: no slice intersects both bbox and lobe masks"
        )
    rng = np.random.default_rng(seed)
    return int(eligible[int(rng.integers(0, len(eligible)))])


def render_slice(
    volume: CtVolume,
    lobes: LobeMap,
    candidate: NoduleCandidate,
    spec: RenderSpec,
) -> bytes:
    """Render one axial slice to PNG bytes (8-bit RGBA)."""
    nx, ny, _nz = volume.dims
    z = spec.slice_index
    if not (0 <= z < volume.dims[2]):
        raise RenderError(f"slice index {z} outside volume")

    gray = window_to_unit(volume.voxels[z], spec.window_level, spec.window_width)
    gray = gray**spec.gamma
    base = np.repeat((np.rint(gray * 255.0)).astype(np.uint8)[:, :, None], 3, axis=2)
    rgba = np.concatenate(
        [base, np.full((ny, nx, 1), 255, dtype=np.uint8)], axis=2
    ).astype(np.float64)

    if spec.show_lobe_overlay:
        labels = lobes.labels[z]
        for value in range(1, 6):
            r, g, b, a = spec.lobe_colors[value - 1]
            mask = labels == value
            if not mask.any():
                continue
            alpha = a / 255.0
            for ch, col in enumerate((r, g, b)):
                rgba[:, :, ch][mask] = (1 - alpha) * rgba[:, :, ch][mask] + alpha * col

    if spec.show_candidate_outline:
        (x0, y0, _), (x1, y1, _) = candidate.bbox
        r, g, b, a = spec.outline_color
        color = np.array([r, g, b, a], dtype=np.float64)
        x0c, x1c = max(x0, 0), min(x1, nx - 1)
        y0c, y1c = max(y0, 0), min(y1, ny - 1)
        rgba[y0c, x0c : x1c + 1] = color
        rgba[y1c, x0c : x1c + 1] = color
        rgba[y0c : y1c + 1, x0c] = color
        rgba[y0c : y1c + 1, x1c] = color

    out = np.rint(rgba).astype(np.uint8)

    if spec.crop is not None:
        cx0, cy0, cx1, cy1 = spec.crop
        if not (0 <= cx0 <= cx1 < nx and 0 <= cy0 <= cy1 < ny):
            raise RenderError(f"degenerate or out-of-bounds crop {spec.crop}")
        out = out[cy0 : cy1 + 1, cx0 : cx1 + 1]

    image = Image.fromarray(out, mode="RGBA")
    if spec.output_size is not None and image.size != tuple(spec.output_size):
        image = image.resize(tuple(spec.output_size), resample=Image.NEAREST)

    if spec.include_color_legend:
        pixels = np.asarray(image).copy()
        swatches = list(spec.lobe_colors) + [spec.outline_color]
        ox, oy = LEGEND_ORIGIN
        for i, color in enumerate(swatches):
            x = ox + i * LEGEND_STEP
            pixels[oy : oy + LEGEND_SWATCH, x : x + LEGEND_SWATCH] = np.array(
                color, dtype=np.uint8
            )
        image = Image.fromarray(pixels, mode="RGBA")

    buf = io.BytesIO()
    image.save(buf, format="PNG")
    return buf.getvalue()


def legend_swatch_origin(index: int) -> tuple[int, int]:
    """Top-left pixel of legend swatch ``index`` (0..5) in output coordinates."""
    ox, oy = LEGEND_ORIGIN
    return (ox + index * LEGEND_STEP, oy)
