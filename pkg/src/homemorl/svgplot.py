"""Minimal deterministic SVG plotting: polylines, scatter and box plots.

Output depends only on the inputs, so reruns produce identical files.
"""

from __future__ import annotations

from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=150, top=40, bottom=50)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939",
           "#8c6d31", "#843c39")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick(v: float) -> str:
    return f"{v:.4g}"


class _Canvas:
    def __init__(self, xlim, ylim, title: str, xlabel: str, ylabel: str):
        self.x0, self.x1 = _pad(*xlim)
        self.y0, self.y1 = _pad(*ylim)
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'font-family="sans-serif" font-size="11">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        ]
        self._axes(xlabel, ylabel)

    @property
    def pw(self):
        return WIDTH - MARGIN["left"] - MARGIN["right"]

    @property
    def ph(self):
        return HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(self, x):
        return MARGIN["left"] + (x - self.x0) / (self.x1 - self.x0) * self.pw

    def py(self, y):
        return MARGIN["top"] + (1 - (y - self.y0) / (self.y1 - self.y0)) * self.ph

    def _axes(self, xlabel, ylabel):
        l, t = MARGIN["left"], MARGIN["top"]
        self.parts.append(f'<rect x="{l}" y="{t}" width="{self.pw}" height="{self.ph}" '
                          f'fill="none" stroke="black"/>')
        for v in np.linspace(self.x0, self.x1, 5):
            x = _fmt(self.px(v))
            self.parts.append(f'<text x="{x}" y="{t + self.ph + 15}" text-anchor="middle">{_tick(v)}</text>')
        for v in np.linspace(self.y0, self.y1, 5):
            y = _fmt(self.py(v))
            self.parts.append(f'<text x="{l - 5}" y="{y}" text-anchor="end">{_tick(v)}</text>')
        self.parts.append(f'<text x="{l + self.pw / 2}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>')
        self.parts.append(f'<text x="15" y="{t + self.ph / 2}" text-anchor="middle" '
                          f'transform="rotate(-90 15 {t + self.ph / 2})">{escape(ylabel)}</text>')

    def legend(self, names: Sequence[str]):
        x = WIDTH - MARGIN["right"] + 10
        for i, name in enumerate(names):
            y = MARGIN["top"] + 15 * i + 5
            c = PALETTE[i % len(PALETTE)]
            self.parts.append(f'<rect x="{x}" y="{y - 8}" width="10" height="10" fill="{c}"/>')
            self.parts.append(f'<text x="{x + 14}" y="{y + 1}">{escape(name)}</text>')

    def svg(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _pad(lo: float, hi: float) -> tuple[float, float]:
    lo, hi = float(lo), float(hi)
    if not np.isfinite(lo) or not np.isfinite(hi):
        lo, hi = 0.0, 1.0
    if hi <= lo:
        return lo - 1.0, hi + 1.0
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _limits(arrays):
    vals = np.concatenate([np.asarray(a, dtype=float).ravel() for a in arrays]) if arrays else np.zeros(1)
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        return 0.0, 1.0
    return float(vals.min()), float(vals.max())


def line_plot(series: Mapping[str, tuple], title: str = "", xlabel: str = "", ylabel: str = "") -> str:
    """``series`` maps a label to ``(x, y)``. Non-finite y values break the line."""
    xs = [s[0] for s in series.values()]
    ys = [s[1] for s in series.values()]
    cv = _Canvas(_limits(xs), _limits(ys), title, xlabel, ylabel)
    for i, (x, y) in enumerate(series.values()):
        c = PALETTE[i % len(PALETTE)]
        run = []
        for a, b in zip(np.asarray(x, float), np.asarray(y, float)):
            if np.isfinite(b):
                run.append(f"{_fmt(cv.px(a))},{_fmt(cv.py(b))}")
                continue
            if len(run) > 1:
                cv.parts.append(f'<polyline fill="none" stroke="{c}" points="{" ".join(run)}"/>')
            run = []
        if len(run) > 1:
            cv.parts.append(f'<polyline fill="none" stroke="{c}" points="{" ".join(run)}"/>')
    cv.legend(list(series))
    return cv.svg()


def scatter_plot(groups: Mapping[str, np.ndarray], title: str = "", xlabel: str = "",
                 ylabel: str = "") -> str:
    """``groups`` maps a label to an ``(n, 2)`` point array."""
    pts = [np.asarray(p, float).reshape(-1, 2) for p in groups.values()]
    cv = _Canvas(_limits([p[:, 0] for p in pts]), _limits([p[:, 1] for p in pts]), title, xlabel, ylabel)
    for i, p in enumerate(pts):
        c = PALETTE[i % len(PALETTE)]
        for x, y in p:
            cv.parts.append(f'<circle cx="{_fmt(cv.px(x))}" cy="{_fmt(cv.py(y))}" r="3" fill="{c}"/>')
    cv.legend(list(groups))
    return cv.svg()


def box_stats(values) -> tuple[float, float, float, float, float]:
    """``(min, q1, median, q3, max)`` with linear-interpolated quartiles."""
    v = np.asarray(values, float)
    if v.size == 0:
        raise ValueError("box plot of an empty group")
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return float(v.min()), float(q1), float(med), float(q3), float(v.max())


def box_plot(groups: Mapping[str, Sequence[float]], title: str = "", ylabel: str = "") -> str:
    names = list(groups)
    stats = [box_stats(groups[n]) for n in names]
    cv = _Canvas((0.5, len(names) + 0.5), _limits([np.array(s) for s in stats]), title, "", ylabel)
    half = 0.3
    for i, (lo, q1, med, q3, hi) in enumerate(stats, start=1):
        c = PALETTE[(i - 1) % len(PALETTE)]
        xl, xr, xm = _fmt(cv.px(i - half)), _fmt(cv.px(i + half)), _fmt(cv.px(i))
        cv.parts.append(f'<line x1="{xm}" x2="{xm}" y1="{_fmt(cv.py(lo))}" y2="{_fmt(cv.py(hi))}" stroke="{c}"/>')
        top, bot = cv.py(q3), cv.py(q1)
        cv.parts.append(f'<rect x="{xl}" y="{_fmt(top)}" width="{_fmt(cv.px(i + half) - cv.px(i - half))}" '
                        f'height="{_fmt(max(bot - top, 0.5))}" fill="white" stroke="{c}"/>')
        cv.parts.append(f'<line x1="{xl}" x2="{xr}" y1="{_fmt(cv.py(med))}" y2="{_fmt(cv.py(med))}" '
                        f'stroke="{c}" stroke-width="2"/>')
    cv.legend(names)
    return cv.svg()


def save(path, svg: str) -> None:
    with open(path, "w") as fh:
        fh.write(svg)
