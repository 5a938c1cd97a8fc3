"""Minimal self-contained SVG figures: traces, ACF bars, scatter, interval ladders.

Only primitive elements (``line``, ``polyline``, ``circle``, ``rect``,
``text``) are written, and nothing time-dependent, so a figure is a pure
function of its data.
"""
from __future__ import annotations

from html import escape

import numpy as np

__all__ = ["Figure", "trace_plot", "acf_plot", "scatter_plot", "interval_ladder"]

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _f(v):
    return f"{v:.2f}"


class Figure:
    """A single panel with linear axes mapped into a fixed pixel box."""

    def __init__(self, xlim, ylim, width=640, height=400, title="", xlabel="", ylabel=""):
        self.w, self.h = width, height
        self.margin = (60, 20, 40, 50)  # left, right, top, bottom
        x0, x1 = map(float, xlim)
        y0, y1 = map(float, ylim)
        if x1 <= x0:
            x0, x1 = x0 - 0.5, x0 + 0.5
        if y1 <= y0:
            y0, y1 = y0 - 0.5, y0 + 0.5
        self.xlim, self.ylim = (x0, x1), (y0, y1)
        self.items = []
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.yticks = True

    def sx(self, x):
        left, right = self.margin[0], self.w - self.margin[1]
        return left + (np.asarray(x, dtype=float) - self.xlim[0]) / (self.xlim[1] - self.xlim[0]) * (right - left)

    def sy(self, y):
        top, bottom = self.margin[2], self.h - self.margin[3]
        return bottom - (np.asarray(y, dtype=float) - self.ylim[0]) / (self.ylim[1] - self.ylim[0]) * (bottom - top)

    def polyline(self, x, y, color=PALETTE[0], width=1.0):
        pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(self.sx(x), self.sy(y)))
        self.items.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"/>')

    def line(self, x0, y0, x1, y1, color="#000", width=1.0, dash=None):
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.items.append(
            f'<line x1="{_f(self.sx(x0))}" y1="{_f(self.sy(y0))}" x2="{_f(self.sx(x1))}" '
            f'y2="{_f(self.sy(y1))}" stroke="{color}" stroke-width="{width}"{extra}/>'
        )

    def points(self, x, y, color=PALETTE[0], r=1.5, opacity=0.5):
        for a, b in zip(self.sx(x), self.sy(y)):
            self.items.append(f'<circle cx="{_f(a)}" cy="{_f(b)}" r="{r}" fill="{color}" fill-opacity="{opacity}"/>')

    def bar(self, x, y, half_width, color=PALETTE[0]):
        x0, x1 = self.sx(x - half_width), self.sx(x + half_width)
        ya, yb = self.sy(0.0), self.sy(y)
        top, hgt = min(ya, yb), abs(ya - yb)
        self.items.append(
            f'<rect x="{_f(x0)}" y="{_f(top)}" width="{_f(x1 - x0)}" height="{_f(hgt)}" fill="{color}"/>'
        )

    def text(self, x, y, s, size=11, anchor="start"):
        self.items.append(
            f'<text x="{_f(self.sx(x))}" y="{_f(self.sy(y))}" font-size="{size}" '
            f'text-anchor="{anchor}" font-family="sans-serif">{escape(str(s))}</text>'
        )

    def _axes(self):
        left, right = self.margin[0], self.w - self.margin[1]
        top, bottom = self.margin[2], self.h - self.margin[3]
        out = [
            f'<rect x="{left}" y="{top}" width="{right - left}" height="{bottom - top}" fill="none" stroke="#444"/>'
        ]
        for t in np.linspace(*self.xlim, 5):
            px = _f(self.sx(t))
            out.append(f'<line x1="{px}" y1="{bottom}" x2="{px}" y2="{bottom + 4}" stroke="#444"/>')
            out.append(f'<text x="{px}" y="{bottom + 16}" font-size="10" text-anchor="middle" '
                       f'font-family="sans-serif">{t:.3g}</text>')
        for t in np.linspace(*self.ylim, 5) if self.yticks else ():
            py = _f(self.sy(t))
            out.append(f'<line x1="{left - 4}" y1="{py}" x2="{left}" y2="{py}" stroke="#444"/>')
            out.append(f'<text x="{left - 6}" y="{py}" font-size="10" text-anchor="end" '
                       f'font-family="sans-serif">{t:.3g}</text>')
        if self.title:
            out.append(f'<text x="{self.w / 2}" y="22" font-size="14" text-anchor="middle" '
                       f'font-family="sans-serif">{escape(self.title)}</text>')
        if self.xlabel:
            out.append(f'<text x="{(left + right) / 2}" y="{self.h - 10}" font-size="12" text-anchor="middle" '
                       f'font-family="sans-serif">{escape(self.xlabel)}</text>')
        if self.ylabel:
            cy = (top + bottom) / 2
            out.append(f'<text x="14" y="{cy}" font-size="12" text-anchor="middle" font-family="sans-serif" '
                       f'transform="rotate(-90 14 {cy})">{escape(self.ylabel)}</text>')
        return out

    def render(self) -> str:
        body = "\n".join(self._axes() + self.items)
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}" '
            f'viewBox="0 0 {self.w} {self.h}">\n<rect width="100%" height="100%" fill="white"/>\n{body}\n</svg>\n'
        )

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.render())


def _pad(lo, hi, frac=0.05):
    span = hi - lo
    return lo - frac * span, hi + frac * span


def trace_plot(series, title="", ylabel="value"):
    """``series`` is a list of 1-D arrays, one per chain."""
    n = max(len(s) for s in series)
    lo = min(float(np.min(s)) for s in series)
    hi = max(float(np.max(s)) for s in series)
    fig = Figure((0, n - 1), _pad(lo, hi), title=title, xlabel="iteration", ylabel=ylabel)
    for i, s in enumerate(series):
        fig.polyline(np.arange(len(s)), s, PALETTE[i % len(PALETTE)], 0.8)
    return fig


def acf_plot(acf, title=""):
    acf = np.asarray(acf, dtype=float)
    fig = Figure((-0.5, acf.size - 0.5), (min(-0.1, float(acf.min())), 1.05), title=title, xlabel="lag", ylabel="ACF")
    fig.line(-0.5, 0.0, acf.size - 0.5, 0.0, "#444")
    for k, v in enumerate(acf):
        fig.bar(k, v, 0.35)
    return fig


def scatter_plot(xy, title="", circle=None, marks=(), labels=("x", "y")):
    """2-D scatter; ``circle=(center, radius)`` draws a constraint boundary.

    ``marks`` is a sequence of ``(point, color)`` drawn as larger dots.
    """
    xy = np.asarray(xy, dtype=float)
    lo = xy.min(axis=0)
    hi = xy.max(axis=0)
    if circle is not None:
        c, r = np.asarray(circle[0], dtype=float), float(circle[1])
        lo, hi = np.minimum(lo, c - r), np.maximum(hi, c + r)
    for p, _ in marks:
        lo, hi = np.minimum(lo, p), np.maximum(hi, p)
    fig = Figure(_pad(lo[0], hi[0]), _pad(lo[1], hi[1]), width=480, height=480, title=title,
                 xlabel=labels[0], ylabel=labels[1])
    fig.points(xy[:, 0], xy[:, 1])
    if circle is not None:
        t = np.linspace(0, 2 * np.pi, 181)
        fig.polyline(c[0] + r * np.cos(t), c[1] + r * np.sin(t), "#000", 1.2)
    for p, color in marks:
        fig.points([p[0]], [p[1]], color, r=4, opacity=1.0)
    return fig


def interval_ladder(labels, lo, mid, hi, title="", xlabel="value"):
    """Horizontal credible intervals, one rung per label."""
    lo, mid, hi = (np.asarray(a, dtype=float) for a in (lo, mid, hi))
    n = len(labels)
    fig = Figure(_pad(float(lo.min()), float(hi.max())), (-0.5, n - 0.5), height=max(200, 28 * n + 90),
                 title=title, xlabel=xlabel)
    fig.margin = (110, 20, 40, 50)
    fig.yticks = False
    for k, lab in enumerate(labels):
        y = n - 1 - k
        fig.line(lo[k], y, hi[k], y, PALETTE[0], 2.0)
        fig.points([mid[k]], [y], PALETTE[1], r=3, opacity=1.0)
        fig.items.append(
            f'<text x="{fig.margin[0] - 8}" y="{_f(fig.sy(y) + 4)}" font-size="10" text-anchor="end" '
            f'font-family="sans-serif">{escape(str(lab))}</text>'
        )
    return fig
