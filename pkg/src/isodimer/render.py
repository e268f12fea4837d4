"""Deterministic SVG drawings of patches, quadri-tilings, heights and train-tracks."""

from __future__ import annotations

from xml.sax.saxutils import escape

from isodimer.geometry import RhombusPatch, add_diagonals
from isodimer.tilings import DimerConfig, matching_to_tiling
from isodimer.traintracks import train_tracks

SCALE = 40.0
MARGIN = 1.0
TILE_FILL = {"hypotenuse": "#e8a848", "leg": "#7fb2d8"}
TRACK_COLORS = ["#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#1f77b4"]


def _fmt(x: float) -> str:
    s = f"{x:.3f}"
    return "0.000" if s == "-0.000" else s


class _Canvas:
    def __init__(self, points):
        xs = [z.real for z in points] or [0.0]
        ys = [z.imag for z in points] or [0.0]
        self.x0 = min(xs) - MARGIN
        self.y1 = max(ys) + MARGIN
        self.width = (max(xs) - min(xs) + 2 * MARGIN) * SCALE
        self.height = (max(ys) - min(ys) + 2 * MARGIN) * SCALE
        self.items: list[str] = []

    def xy(self, z: complex) -> str:
        # y axis points up in the drawing
        return f"{_fmt((z.real - self.x0) * SCALE)},{_fmt((self.y1 - z.imag) * SCALE)}"

    def polygon(self, pts, cls, fill="none", stroke="#333333", width=1.0, opacity=None):
        extra = f' fill-opacity="{opacity}"' if opacity is not None else ""
        self.items.append(
            f'<polygon class="{cls}" points="{" ".join(self.xy(z) for z in pts)}" fill="{fill}" '
            f'stroke="{stroke}" stroke-width="{width}"{extra}/>'
        )

    def polyline(self, pts, cls, stroke, width, opacity):
        self.items.append(
            f'<polyline class="{cls}" points="{" ".join(self.xy(z) for z in pts)}" fill="none" '
            f'stroke="{stroke}" stroke-width="{width}" stroke-opacity="{opacity}" stroke-linecap="round"/>'
        )

    def text(self, z, label, cls):
        x, y = self.xy(z).split(",")
        self.items.append(
            f'<text class="{cls}" x="{x}" y="{y}" font-size="11" text-anchor="middle" '
            f'dominant-baseline="middle">{escape(label)}</text>'
        )

    def render(self) -> str:
        head = (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_fmt(self.width)}" '
            f'height="{_fmt(self.height)}" viewBox="0 0 {_fmt(self.width)} {_fmt(self.height)}">\n'
        )
        return head + "\n".join(self.items) + "\n</svg>\n"


def render_svg(
    patch: RhombusPatch,
    matching: DimerConfig | None = None,
    heights: dict[int, int] | None = None,
    tracks: bool = False,
    lattice: tuple[complex, complex] | None = None,
    copies: tuple[int, int] = (1, 1),
) -> str:
    """SVG 1.1 drawing. ``heights`` maps vertex ids of the triangulated patch to labels.

    With a matching the rhombi drawn are those of the matching's own patch,
    which moves may have changed.
    """
    if matching is not None:
        patch = matching.graph.tri.base
    offsets = [0j]
    if lattice is not None:
        t1, t2 = lattice
        offsets = [i * t1 + j * t2 for i in range(copies[0]) for j in range(copies[1])]
    pts = [z + o for z in patch.positions.values() for o in offsets]
    cv = _Canvas(pts)
    for ci, o in enumerate(offsets):
        if lattice is not None:
            cv.items.append(f'<g class="copy" id="copy-{ci}">')
        for r in range(len(patch.rhombi)):
            quad = [z + o for z in patch.rhombus_points(r)]
            cv.polygon(quad, "rhombus", fill="#f4f4f4" if ci else "#ffffff", width=1.5)
        if lattice is not None:
            cv.items.append("</g>")
    if matching is not None:
        tri = matching.graph.tri
        for tile in matching_to_tiling(matching):
            cv.polygon([tri.points[v] for v in tile.corners], "tile " + tile.kind, fill=TILE_FILL[tile.kind],
                       stroke="#222222", width=1.0, opacity="0.85")
        for r in range(len(patch.rhombi)):
            a, b, c, d = patch.rhombus_points(r)
            cv.polyline([a, c], "diagonal", "#888888", 0.5, "0.8")
            cv.polyline([b, d], "diagonal", "#888888", 0.5, "0.8")
    if tracks:
        for k, t in enumerate(train_tracks(patch)):
            mids = [sum(patch.rhombus_points(r)) / 4 for r in t.rhombi]
            if len(mids) == 1:
                r, cls = t.sides[0]
                p = patch.rhombus_points(r)
                mids = [0.5 * (p[cls] + p[cls + 1]), 0.5 * (p[cls + 2] + p[(cls + 3) % 4])]
            cv.polyline(mids, "track", TRACK_COLORS[k % len(TRACK_COLORS)], 14, "0.35")
    if heights is not None:
        points = matching.graph.tri.points if matching is not None else add_diagonals(patch).points
        for v in sorted(heights):
            cv.text(points[v], str(int(heights[v])), "height")
    return cv.render()
