"""Hand-rolled SVG scatter plots.

The output holds exactly one <g> element per named layer plus a legend;
coordinates are formatted with fixed precision, so a given input always
produces identical bytes.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

LAYER_COLORS = {"data": "#9aa0a6", "base": "#d93025", "refined": "#1a73e8"}
_FALLBACK_COLOR = "#188038"

WIDTH = 480
HEIGHT = 480
MARGIN = 36
POINT_RADIUS = 2.0


def _extent(layers: list[tuple[str, np.ndarray]]) -> tuple[float, float, float, float]:
    pts = np.concatenate([p for _, p in layers], axis=0)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    pad = 0.05 * span
    return lo[0] - pad[0], hi[0] + pad[0], lo[1] - pad[1], hi[1] + pad[1]


def scatter_svg(path: str, layers: list[tuple[str, np.ndarray]]) -> None:
    """Write a scatter of the named 2-D point layers, in the given order."""
    if not layers:
        raise ConfigError("scatter needs at least one layer")
    checked = []
    for name, pts in layers:
        pts = np.asarray(pts, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ConfigError(f"layer {name!r} must be (n, 2), got {pts.shape}")
        checked.append((name, pts))
    x0, x1, y0, y1 = _extent(checked)
    sx = (WIDTH - 2 * MARGIN) / (x1 - x0)
    sy = (HEIGHT - 2 * MARGIN) / (y1 - y0)

    def to_px(p):
        px = MARGIN + (p[:, 0] - x0) * sx
        py = HEIGHT - MARGIN - (p[:, 1] - y0) * sy
        return px, py

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    for name, pts in checked:
        color = LAYER_COLORS.get(name, _FALLBACK_COLOR)
        px, py = to_px(pts)
        circles = "".join(
            f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{POINT_RADIUS}"/>'
            for x, y in zip(px, py)
        )
        parts.append(
            f'<g class="layer" id="layer-{name}" fill="{color}" '
            f'fill-opacity="0.6">{circles}</g>'
        )
    for i, (name, _) in enumerate(checked):
        color = LAYER_COLORS.get(name, _FALLBACK_COLOR)
        y = 18 + 16 * i
        parts.append(
            f'<circle cx="{MARGIN}" cy="{y - 4}" r="4" fill="{color}"/>'
            f'<text x="{MARGIN + 10}" y="{y}" font-family="sans-serif" '
            f'font-size="12" class="legend">{name}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
