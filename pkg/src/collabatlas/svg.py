"""Tiny deterministic SVG writer: line charts and polygon panels.

Numbers are printed with fixed precision so identical inputs give identical
bytes.
"""

from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


def _f(x: float) -> str:
    return f"{x:.2f}"


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + step * 1e-9:
        ticks.append(round(t, 10))
        t += step
    return ticks


class Series:
    def __init__(self, label: str, points: Sequence[tuple[float, float]], dashed: bool = False):
        self.label = label
        self.points = [(float(x), float(y)) for x, y in points]
        self.dashed = dashed


def line_chart(
    series: Sequence[Series],
    title: str,
    x_label: str = "year",
    y_label: str = "",
    width: int = 720,
    height: int = 420,
    note: str = "",
) -> str:
    left, right, top, bottom = 60, 170, 40, 50
    pw, ph = width - left - right, height - top - bottom
    xs = [x for s in series for x, _ in s.points]
    ys = [y for s in series for _, y in s.points if math.isfinite(y)]
    x0, x1 = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y0, y1 = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def px(x: float) -> float:
        return left + (x - x0) / (x1 - x0) * pw

    def py(y: float) -> float:
        return top + (1 - (y - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left}" y="20" font-size="14">{escape(title)}</text>',
        f'<line x1="{left}" y1="{_f(top + ph)}" x2="{_f(left + pw)}" y2="{_f(top + ph)}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{_f(top + ph)}" stroke="black"/>',
    ]
    for t in _nice_ticks(x0, x1, 6):
        out.append(f'<line x1="{_f(px(t))}" y1="{_f(top + ph)}" x2="{_f(px(t))}" '
                   f'y2="{_f(top + ph + 4)}" stroke="black"/>')
        out.append(f'<text x="{_f(px(t))}" y="{_f(top + ph + 16)}" text-anchor="middle">'
                   f'{t:g}</text>')
    for t in _nice_ticks(y0, y1, 5):
        out.append(f'<line x1="{left - 4}" y1="{_f(py(t))}" x2="{left}" y2="{_f(py(t))}" '
                   f'stroke="black"/>')
        out.append(f'<text x="{left - 6}" y="{_f(py(t) + 4)}" text-anchor="end">{t:g}</text>')
    out.append(f'<text x="{_f(left + pw / 2)}" y="{height - 10}" text-anchor="middle">'
               f'{escape(x_label)}</text>')
    out.append(f'<text x="14" y="{_f(top + ph / 2)}" text-anchor="middle" '
               f'transform="rotate(-90 14 {_f(top + ph / 2)})">{escape(y_label)}</text>')
    for i, s in enumerate(series):
        colour = PALETTE[i % len(PALETTE)]
        pts = [(x, y) for x, y in s.points if math.isfinite(y)]
        if pts:
            dash = ' stroke-dasharray="5,3"' if s.dashed else ""
            coords = " ".join(f"{_f(px(x))},{_f(py(y))}" for x, y in pts)
            out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5"{dash} '
                       f'points="{coords}"/>')
        ly = top + 14 * i
        out.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 30}" y2="{ly}" '
                   f'stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 34}" y="{ly + 4}">{escape(s.label)}</text>')
    if note:
        out.append(f'<text x="{left}" y="{top - 6}" fill="#555">{escape(note)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def panel_grid(
    panels: Sequence[tuple[str, Sequence[tuple[str, float, float, float]], Sequence[tuple[int, int]]]],
    title: str,
    columns: int = 4,
    cell: int = 200,
    extent: float = 1.0,
) -> str:
    """Small multiples of labelled points with connecting edges.

    Each panel is ``(caption, [(label, x, y, radius)], [(i, j) edges])`` in
    data units; ``extent`` is the half-width mapped onto one cell.
    """
    rows = max(1, math.ceil(len(panels) / columns))
    width, height = columns * cell, rows * cell + 30
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="8" y="18" font-size="14">{escape(title)}</text>',
    ]
    scale = (cell / 2 - 20) / extent
    for k, (caption, points, edges) in enumerate(panels):
        cx = (k % columns) * cell + cell / 2
        cy = 30 + (k // columns) * cell + cell / 2
        out.append(f'<text x="{_f(cx)}" y="{_f(cy + cell / 2 - 6)}" text-anchor="middle">'
                   f'{escape(caption)}</text>')
        for i, j in edges:
            _, xi, yi, _ = points[i]
            _, xj, yj, _ = points[j]
            out.append(f'<line x1="{_f(cx + xi * scale)}" y1="{_f(cy - yi * scale)}" '
                       f'x2="{_f(cx + xj * scale)}" y2="{_f(cy - yj * scale)}" stroke="#888"/>')
        for i, (label, x, y, r) in enumerate(points):
            colour = PALETTE[i % len(PALETTE)]
            out.append(f'<circle cx="{_f(cx + x * scale)}" cy="{_f(cy - y * scale)}" '
                       f'r="{_f(max(r * scale, 1.5))}" fill="{colour}" fill-opacity="0.5"/>')
            out.append(f'<text x="{_f(cx + x * scale)}" y="{_f(cy - y * scale - 3)}" '
                       f'text-anchor="middle">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
