"""Minimal SVG line plots, written without a plotting library."""
from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["line_plot"]

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _ticks(lo, hi, log):
    if log:
        a, b = int(np.floor(lo)), int(np.ceil(hi))
        return [(v, f"1e{v}") for v in range(a, b + 1)]
    vals = np.linspace(lo, hi, 5)
    return [(v, f"{v:.3g}") for v in vals]


def line_plot(path, series, *, title="", xlabel="", ylabel="", logx=False, logy=False, markers=False, width=640, height=420):
    """Write an SVG with one polyline per ``(x, y, label)`` in ``series``.

    Non-positive values are dropped on log axes.
    """
    prepared = []
    for x, y, label in series:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ok = np.isfinite(x) & np.isfinite(y)
        if logx:
            ok &= x > 0
        if logy:
            ok &= y > 0
        x, y = x[ok], y[ok]
        if logx:
            x = np.log10(x)
        if logy:
            y = np.log10(y)
        prepared.append((x, y, label))
    allx = np.concatenate([p[0] for p in prepared]) if prepared else np.zeros(1)
    ally = np.concatenate([p[1] for p in prepared]) if prepared else np.zeros(1)
    if allx.size == 0:
        allx = ally = np.zeros(1)
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    ml, mr, mt, mb = 70, 20, 40, 50
    W, H = width - ml - mr, height - mt - mb

    def X(v):
        return ml + (v - x0) / (x1 - x0) * W

    def Y(v):
        return mt + H - (v - y0) / (y1 - y0) * H

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">',
        f'<rect x="{ml}" y="{mt}" width="{W}" height="{H}" fill="none" stroke="#444"/>',
        f'<text x="{width / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<text x="{ml + W / 2}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="16" y="{mt + H / 2}" text-anchor="middle" transform="rotate(-90 16 {mt + H / 2})">{escape(ylabel)}</text>',
    ]
    for v, lab in _ticks(x0, x1, logx):
        if x0 - 1e-9 <= v <= x1 + 1e-9:
            out.append(f'<text x="{X(v):.1f}" y="{mt + H + 16}" text-anchor="middle">{lab}</text>')
    for v, lab in _ticks(y0, y1, logy):
        if y0 - 1e-9 <= v <= y1 + 1e-9:
            out.append(f'<text x="{ml - 6}" y="{Y(v) + 4:.1f}" text-anchor="end">{lab}</text>')
    for i, (x, y, label) in enumerate(prepared):
        c = _COLORS[i % len(_COLORS)]
        if len(x) > 2000:
            idx = np.linspace(0, len(x) - 1, 2000).astype(int)
            x, y = x[idx], y[idx]
        pts = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in zip(x, y))
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        if markers:
            out.extend(f'<circle cx="{X(a):.2f}" cy="{Y(b):.2f}" r="3" fill="{c}"/>' for a, b in zip(x, y))
        out.append(f'<text x="{ml + 8}" y="{mt + 16 + 15 * i}" fill="{c}">{escape(label)}</text>')
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n")
    return path
