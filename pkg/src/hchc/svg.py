"""Deterministic SVG rendering of a circular layout."""

from pathlib import Path

import numpy as np

from .exceptions import HCHCError

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#393b79", "#637939", "#8c6d31", "#843c39", "#7b4173", "#3182bd",
)
MARGIN = 0.05


def to_canvas(points, radius, width_px):
    """Map layout coordinates to pixels: centred, y flipped, 5% margin."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    half = width_px / 2.0
    scale = (half - MARGIN * width_px) / radius
    return np.column_stack([half + scale * points[:, 0], half - scale * points[:, 1]])


def _f(v):
    return f"{v:.3f}"


def svg_document(layout, labels, width_px=900, palette=PALETTE):
    half = width_px / 2.0
    ring = half - MARGIN * width_px
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width_px}" height="{width_px}" '
        f'viewBox="0 0 {width_px} {width_px}">',
        f'<rect width="{width_px}" height="{width_px}" fill="white"/>',
        f'<circle class="outline" cx="{_f(half)}" cy="{_f(half)}" r="{_f(ring)}" '
        'fill="none" stroke="red" stroke-width="2"/>',
    ]
    samples = to_canvas(layout.sample_coords, layout.radius, width_px)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    flags = np.asarray(layout.outlier_flags, dtype=bool).reshape(-1)
    out.append('<g class="samples">')
    for (x, y), lab, outlier in zip(samples, labels, flags):
        colour = palette[int(lab) % len(palette)]
        if outlier:
            out.append(
                f'<circle class="outlier" cx="{_f(x)}" cy="{_f(y)}" r="4" '
                f'fill="none" stroke="{colour}" stroke-width="1.5"/>'
            )
        else:
            out.append(f'<circle class="sample" cx="{_f(x)}" cy="{_f(y)}" r="2.5" fill="{colour}"/>')
    out.append("</g>")
    anchors = to_canvas(layout.anchor_coords, layout.radius, width_px)
    out.append('<g class="anchors">')
    for cluster, (x, y) in zip(layout.cycle.order, anchors):
        # label sits just outside the circle along the anchor's ray
        dx, dy = x - half, y - half
        norm = max(np.hypot(dx, dy), 1e-12)
        tx, ty = x + 16 * dx / norm, y + 16 * dy / norm
        out.append(f'<circle class="anchor" cx="{_f(x)}" cy="{_f(y)}" r="6" fill="red"/>')
        out.append(
            f'<text x="{_f(tx)}" y="{_f(ty)}" font-family="sans-serif" font-size="14" '
            f'text-anchor="middle" dominant-baseline="middle">{int(cluster)}</text>'
        )
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_svg(layout, labels, out_path, width_px=900, palette=PALETTE):
    doc = svg_document(layout, labels, width_px, palette)
    try:
        Path(out_path).write_text(doc, encoding="utf-8")
    except OSError as exc:
        raise HCHCError(f"cannot write {out_path}: {exc}") from exc
    return Path(out_path)
