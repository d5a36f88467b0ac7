"""Deterministic SVG line charts, one file per metric.

Hand-rolled SVG: fixed canvas, fixed palette, fixed number formatting,
no timestamps or random ids, so identical inputs produce byte-identical
files.
"""

from __future__ import annotations

import os
from collections import OrderedDict

WIDTH, HEIGHT = 640, 400
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 60, 160, 20, 50

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#17becf", "#7f7f7f")


def _fmt(x):
    return f"{x:.2f}"


def _fmt_tick(x):
    return f"{x:.4g}"


def _scale(points_by_line):
    xs = [u for pts in points_by_line.values() for u, _ in pts]
    ys = [v for pts in points_by_line.values() for _, v in pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x0 == x1:
        x0, x1 = x0 - 1, x1 + 1
    if y0 == y1:
        y0, y1 = y0 - 1, y1 + 1
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def to_xy(u, v):
        px = MARGIN_L + (u - x0) / (x1 - x0) * plot_w
        py = MARGIN_T + (1.0 - (v - y0) / (y1 - y0)) * plot_h
        return px, py

    return to_xy, (x0, x1, y0, y1)


def render_chart(metric, series_list):
    """SVG text for one metric: one line per method."""
    lines = OrderedDict()
    for s in sorted(series_list, key=lambda s: (s.method, s.run)):
        label = s.method if s.method not in lines else f"{s.method} ({s.run})"
        lines[label] = list(s.points)
    to_xy, (x0, x1, y0, y1) = _scale(lines)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    # axes
    ax_b = HEIGHT - MARGIN_B
    ax_r = WIDTH - MARGIN_R
    parts.append(f'<line x1="{MARGIN_L}" y1="{ax_b}" x2="{ax_r}" y2="{ax_b}" '
                 f'stroke="black"/>')
    parts.append(f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" '
                 f'y2="{ax_b}" stroke="black"/>')
    # axis labels and extreme ticks
    parts.append(f'<text x="{(MARGIN_L + ax_r) // 2}" y="{HEIGHT - 10}" '
                 f'text-anchor="middle" font-size="14">update</text>')
    parts.append(f'<text x="18" y="{(MARGIN_T + ax_b) // 2}" '
                 f'text-anchor="middle" font-size="14" '
                 f'transform="rotate(-90 18 {(MARGIN_T + ax_b) // 2})">'
                 f'{metric}</text>')
    parts.append(f'<text x="{MARGIN_L}" y="{ax_b + 18}" text-anchor="middle" '
                 f'font-size="11">{_fmt_tick(x0)}</text>')
    parts.append(f'<text x="{ax_r}" y="{ax_b + 18}" text-anchor="middle" '
                 f'font-size="11">{_fmt_tick(x1)}</text>')
    parts.append(f'<text x="{MARGIN_L - 6}" y="{ax_b + 4}" text-anchor="end" '
                 f'font-size="11">{_fmt_tick(y0)}</text>')
    parts.append(f'<text x="{MARGIN_L - 6}" y="{MARGIN_T + 4}" '
                 f'text-anchor="end" font-size="11">{_fmt_tick(y1)}</text>')

    for i, (label, pts) in enumerate(lines.items()):
        color = PALETTE[i % len(PALETTE)]
        if len(pts) == 1:
            px, py = to_xy(*pts[0])
            parts.append(f'<circle cx="{_fmt(px)}" cy="{_fmt(py)}" r="4" '
                         f'fill="{color}"/>')
        else:
            coords = " ".join(f"{_fmt(px)},{_fmt(py)}"
                              for px, py in (to_xy(u, v) for u, v in pts))
            parts.append(f'<polyline points="{coords}" fill="none" '
                         f'stroke="{color}" stroke-width="1.5"/>')
        ly = MARGIN_T + 16 + 18 * i
        parts.append(f'<line x1="{ax_r + 10}" y1="{ly - 4}" x2="{ax_r + 30}" '
                     f'y2="{ly - 4}" stroke="{color}" stroke-width="3"/>')
        parts.append(f'<text x="{ax_r + 36}" y="{ly}" font-size="12">'
                     f'{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_curves(series, out_dir):
    """One `{metric}.svg` per metric; returns the written paths."""
    if not series:
        raise ValueError("render_curves: no series to plot")
    by_metric = {}
    for s in series:
        by_metric.setdefault(s.metric, []).append(s)
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for metric in sorted(by_metric):
        path = os.path.join(out_dir, f"{metric}.svg")
        with open(path, "w", encoding="utf-8") as f:
            f.write(render_chart(metric, by_metric[metric]))
        written.append(path)
    return written
