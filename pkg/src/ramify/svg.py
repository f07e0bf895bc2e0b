"""Deterministic SVG rendering of irrigation and branch plans.

Line widths scale with transported flux raised to the cost exponent, so
trunks carrying bundled mass read thicker than single fibers. Output is
plain text with fixed six-decimal formatting and no timestamps; the same
plan renders to the identical byte sequence on every run.
"""

from __future__ import annotations

import numpy as np

from .plan_model import BranchPlan, PathPlan, segment_table

LINE_COLOR = "#1f4e79"
ATOM_COLOR = "#b22222"
ROOT_COLOR = "#111111"
BACKGROUND = "#ffffff"
WIDTH_MIN_FRACTION = 0.0025
WIDTH_SCALE_FRACTION = 0.012
ATOM_RADIUS_FRACTION = 0.008
ROOT_RADIUS_FRACTION = 0.011


def _fmt(value: float) -> str:
    out = format(float(value), ".6f")
    return "0.000000" if out == "-0.000000" else out


def _bounds(plan, targets):
    points = [plan.all_vertices(), np.zeros((1, 2))]
    if targets is not None:
        points.append(np.asarray(targets.positions, dtype=float))
    stacked = np.vstack(points)
    lo = stacked.min(axis=0)
    hi = stacked.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    pad = 0.08 * float(span.max())
    return lo - pad, hi + pad


def _stroke_width(flux: float, alpha: float, scale: float) -> float:
    return scale * (WIDTH_MIN_FRACTION + WIDTH_SCALE_FRACTION * flux ** alpha)


def render_svg(plan, alpha: float = 0.5, targets=None, pixel_width: int = 640) -> str:
    """Render a plan to an SVG document string.

    ``targets`` optionally draws the atoms of a target measure. ``alpha``
    sets the flux exponent used for stroke widths.
    """
    if not isinstance(plan, (PathPlan, BranchPlan)):
        raise TypeError("expected a PathPlan or BranchPlan")
    lo, hi = _bounds(plan, targets)
    span = hi - lo
    scale = float(max(span[0], span[1]))
    pixel_height = max(1, round(pixel_width * span[1] / span[0]))

    # Flip y so larger y renders upward.
    def pt(p):
        return _fmt(p[0]), _fmt(hi[1] - p[1] + lo[1])

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{pixel_width}" '
        f'height="{pixel_height}" viewBox="{_fmt(lo[0])} {_fmt(lo[1])} '
        f'{_fmt(span[0])} {_fmt(span[1])}">',
        f'<rect x="{_fmt(lo[0])}" y="{_fmt(lo[1])}" width="{_fmt(span[0])}" '
        f'height="{_fmt(span[1])}" fill="{BACKGROUND}"/>',
    ]
    table = segment_table(plan)
    for i in range(table.size):
        ax, ay = pt(table.a[i])
        bx, by = pt(table.b[i])
        width = _stroke_width(float(table.flux[i]), alpha, scale)
        lines.append(
            f'<line x1="{ax}" y1="{ay}" x2="{bx}" y2="{by}" stroke="{LINE_COLOR}" '
            f'stroke-width="{_fmt(width)}" stroke-linecap="round"/>')
    if targets is not None:
        radius = ATOM_RADIUS_FRACTION * scale
        for pos in np.asarray(targets.positions, dtype=float):
            cx, cy = pt(pos)
            lines.append(f'<circle cx="{cx}" cy="{cy}" r="{_fmt(radius)}" '
                         f'fill="{ATOM_COLOR}"/>')
    rx, ry = pt(np.zeros(2))
    lines.append(f'<circle cx="{rx}" cy="{ry}" r="{_fmt(ROOT_RADIUS_FRACTION * scale)}" '
                 f'fill="{ROOT_COLOR}"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def save_svg(plan, path, alpha: float = 0.5, targets=None, pixel_width: int = 640):
    """Write :func:`render_svg` output to a file."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(render_svg(plan, alpha=alpha, targets=targets, pixel_width=pixel_width))
