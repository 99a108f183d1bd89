"""Standalone SVG line and bar charts (no plotting library needed)."""

from __future__ import annotations

import math
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f")

_W, _H = 640, 400
_L, _R, _T, _B = 60, 150, 40, 50


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-9 * step:
        out.append(round(v, 10))
        v += step
    return out


def _frame(title: str, xlabel: str, ylabel: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<text x="{(_L + _W - _R) / 2}" y="{_H - 10}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="15" y="{(_T + _H - _B) / 2}" text-anchor="middle" '
        f'transform="rotate(-90 15 {(_T + _H - _B) / 2})">{escape(ylabel)}</text>',
    ]


def _legend(names: Sequence[str]) -> list[str]:
    out = []
    for i, name in enumerate(names):
        y = _T + 16 * i
        color = PALETTE[i % len(PALETTE)]
        out.append(f'<rect x="{_W - _R + 10}" y="{y}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="{_W - _R + 26}" y="{y + 9}">{escape(name)}</text>')
    return out


def line_chart(series: Mapping[str, tuple[Sequence[float], Sequence[float]]], title: str = "",
               xlabel: str = "", ylabel: str = "") -> str:
    """One polyline per named (x, y) series; non-finite points are skipped."""
    pts = {n: [(float(a), float(b)) for a, b in zip(*xy) if math.isfinite(a) and math.isfinite(b)]
           for n, xy in series.items()}
    allp = [p for ps in pts.values() for p in ps] or [(0.0, 0.0)]
    x0, x1 = min(p[0] for p in allp), max(p[0] for p in allp)
    y0, y1 = min(p[1] for p in allp), max(p[1] for p in allp)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    pw, ph = _W - _L - _R, _H - _T - _B

    def sx(x):
        return _L + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return _T + ph - (y - y0) / (y1 - y0) * ph

    out = _frame(title, xlabel, ylabel)
    out.append(f'<rect x="{_L}" y="{_T}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{_L}" x2="{_L + pw}" y1="{sy(t):.1f}" y2="{sy(t):.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{_L - 4}" y="{sy(t) + 4:.1f}" text-anchor="end">{t:g}</text>')
    for t in _ticks(x0, x1):
        out.append(f'<text x="{sx(t):.1f}" y="{_T + ph + 15}" text-anchor="middle">{t:g}</text>')
    for i, (name, ps) in enumerate(pts.items()):
        if ps:
            path = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in ps)
            out.append(f'<polyline fill="none" stroke="{PALETTE[i % len(PALETTE)]}" '
                       f'stroke-width="1.5" points="{path}"/>')
    out += _legend(list(pts))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def bar_chart(categories: Sequence[str], series: Mapping[str, Sequence[float]], title: str = "",
              xlabel: str = "", ylabel: str = "") -> str:
    """Grouped bars: one group per category, one bar per named series (NaN leaves a gap)."""
    vals = [v for vs in series.values() for v in vs if math.isfinite(v)] or [0.0]
    y0, y1 = min(0.0, min(vals)), max(0.0, max(vals))
    if y1 == y0:
        y1 = y0 + 1
    pw, ph = _W - _L - _R, _H - _T - _B
    n_cat, n_ser = max(1, len(categories)), max(1, len(series))
    gw = pw / n_cat
    bw = 0.8 * gw / n_ser

    def sy(y):
        return _T + ph - (y - y0) / (y1 - y0) * ph

    out = _frame(title, xlabel, ylabel)
    out.append(f'<rect x="{_L}" y="{_T}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{_L}" x2="{_L + pw}" y1="{sy(t):.1f}" y2="{sy(t):.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{_L - 4}" y="{sy(t) + 4:.1f}" text-anchor="end">{t:g}</text>')
    for c, cat in enumerate(categories):
        cx = _L + gw * (c + 0.5)
        out.append(f'<text x="{cx:.1f}" y="{_T + ph + 15}" text-anchor="middle">{escape(cat)}</text>')
        for s, (name, vs) in enumerate(series.items()):
            v = vs[c] if c < len(vs) else float("nan")
            if not math.isfinite(v):
                continue
            x = _L + gw * c + 0.1 * gw + s * bw
            top, bottom = sorted((sy(v), sy(0.0)))
            out.append(f'<rect x="{x:.1f}" y="{top:.1f}" width="{bw:.1f}" '
                       f'height="{max(bottom - top, 0.5):.1f}" fill="{PALETTE[s % len(PALETTE)]}"/>')
    out += _legend(list(series))
    out.append("</svg>")
    return "\n".join(out) + "\n"
