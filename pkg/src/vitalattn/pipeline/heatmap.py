"""SVG heatmaps of attention maps, one panel per series."""

from __future__ import annotations

from typing import Mapping
from xml.sax.saxutils import escape

import numpy as np

CELL = 10
RAMP = ((0.0, "#440154"), (0.25, "#3b528b"), (0.5, "#21918c"), (0.75, "#5ec962"), (1.0, "#fde725"))


def _rgb(hex_color: str) -> tuple[int, int, int]:
    return tuple(int(hex_color[i : i + 2], 16) for i in (1, 3, 5))


_STOPS = [(pos, _rgb(c)) for pos, c in RAMP]


def ramp_color(value: float) -> str:
    """Colour for a value normalised to [0, 1]; dark is low, bright is high."""
    v = min(1.0, max(0.0, float(value)))
    for (p0, c0), (p1, c1) in zip(_STOPS[:-1], _STOPS[1:]):
        if v <= p1:
            f = 0.0 if p1 == p0 else (v - p0) / (p1 - p0)
            rgb = [round(a + (b - a) * f) for a, b in zip(c0, c1)]
            return "#{:02x}{:02x}{:02x}".format(*rgb)
    return RAMP[-1][1]


def render_heatmap_svg(panels: Mapping[str, np.ndarray], title: str = "attention map") -> str:
    """Stack ``(H, L)`` matrices vertically; rows are forecast steps, columns history steps.

    All panels share one colour scale normalised by the figure-wide maximum.
    """
    if not panels:
        raise ValueError("nothing to draw")
    mats = {k: np.asarray(v, dtype=np.float64) for k, v in panels.items()}
    vmax = max(float(m.max()) for m in mats.values())
    scale = 1.0 / vmax if vmax > 0 else 0.0
    width = max(m.shape[1] for m in mats.values()) * CELL
    margin, label_h, legend_h = 40, 18, 40

    parts = []
    y = label_h + 4
    for name, m in mats.items():
        parts.append(f'<text x="{margin}" y="{y + 12}" font-size="12">{escape(name)}</text>')
        y += label_h
        for h in range(m.shape[0]):
            for t in range(m.shape[1]):
                parts.append(
                    f'<rect x="{margin + t * CELL}" y="{y + h * CELL}" width="{CELL}" height="{CELL}" '
                    f'fill="{ramp_color(m[h, t] * scale)}"/>'
                )
        y += m.shape[0] * CELL + 8

    # legend: gradient bar, dark = low, bright = high
    y += 6
    grad = "".join(f'<stop offset="{p:g}" stop-color="{c}"/>' for p, c in RAMP)
    parts.append(f'<defs><linearGradient id="ramp">{grad}</linearGradient></defs>')
    parts.append(f'<rect x="{margin}" y="{y}" width="{min(width, 200)}" height="10" fill="url(#ramp)"/>')
    parts.append(f'<text x="{margin}" y="{y + 24}" font-size="10">0 (low attention)</text>')
    parts.append(
        f'<text x="{margin + min(width, 200)}" y="{y + 24}" font-size="10" text-anchor="end">'
        f"{vmax:.3g} (high attention)</text>"
    )
    total_h = y + legend_h
    total_w = width + 2 * margin
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{total_h}" '
        f'viewBox="0 0 {total_w} {total_h}">'
        f'<title>{escape(title)}</title>'
        f'<text x="{margin}" y="14" font-size="13">{escape(title)}</text>'
    )
    return head + "".join(parts) + "</svg>\n"
