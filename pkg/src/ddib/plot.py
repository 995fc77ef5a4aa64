"""Dependency-free SVG scatter plots of tagged point clouds.

Each cloud gets one square panel with a fixed viewport ``[-extent, extent]^2``
(first two coordinates). A point's fill colour is a hue derived from its tag
relative to the largest tag over all panels, so the same tag has the same
colour in every panel and identities can be followed through a translation.
"""

from __future__ import annotations

import colorsys
from xml.sax.saxutils import escape

import numpy as np

from .errors import ParameterError

PANEL = 320
MARGIN = 24
RADIUS = 1.6


def tag_colors(tags, max_tag: int) -> list:
    """Hex fill colours, hue running from red (tag 0) to violet (``max_tag``)."""
    frac = np.asarray(tags, dtype=np.float64) / max(int(max_tag), 1)
    out = []
    for f in frac:
        r, g, b = colorsys.hsv_to_rgb(0.8 * float(f), 0.85, 0.9)
        out.append("#%02x%02x%02x" % (round(r * 255), round(g * 255), round(b * 255)))
    return out


def svg_scatter(clouds, titles=None, extent: float = 4.0) -> str:
    if not clouds:
        raise ParameterError("plot needs at least one point cloud")
    if extent <= 0:
        raise ParameterError(f"extent must be positive, got {extent}")
    titles = titles or [f"panel {i}" for i in range(len(clouds))]
    max_tag = max(int(c.tags.max()) for c in clouds)
    width = len(clouds) * (PANEL + MARGIN) + MARGIN
    height = PANEL + 2 * MARGIN
    scale = PANEL / (2.0 * extent)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>']
    for k, (cloud, title) in enumerate(zip(clouds, titles)):
        x0 = MARGIN + k * (PANEL + MARGIN)
        parts.append(f'<g transform="translate({x0},{MARGIN})">')
        parts.append(f'<rect width="{PANEL}" height="{PANEL}" fill="none" stroke="#888"/>')
        parts.append(f'<text x="{PANEL / 2:g}" y="-6" text-anchor="middle" font-family="sans-serif" '
                     f'font-size="13">{escape(str(title))}</text>')
        pts = cloud.points[:, :2] if cloud.dim >= 2 else np.c_[cloud.points, np.zeros(len(cloud))]
        px = (pts[:, 0] + extent) * scale
        py = (extent - pts[:, 1]) * scale
        inside = (px >= 0) & (px <= PANEL) & (py >= 0) & (py <= PANEL)
        for cx, cy, col in zip(px[inside], py[inside], np.array(tag_colors(cloud.tags, max_tag))[inside]):
            parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{RADIUS}" fill="{col}"/>')
        parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
