"""A very small SVG writer: polylines, point clouds, boxplots, axes and labels."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

__all__ = ["Panel", "figure", "fmt"]

COLORS = {"data": "#000000", "fit": "#d62728", "mle": "#1f77b4", "tsallis": "#d62728", "grid": "#cccccc"}


def fmt(v):
    """Compact, deterministic number formatting for labels."""
    v = float(v)
    if v == 0:
        return "0"
    if abs(v) >= 1e5 or abs(v) < 1e-3:
        return f"{v:.3g}"
    if abs(v) >= 100:
        return f"{v:.0f}"
    return f"{v:.3g}"


def _ticks(lo, hi, count=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return [float(t) for t in np.arange(start, hi + 0.5 * step, step)]


class Panel:
    """One set of axes; collects primitives and renders them into a group."""

    def __init__(self, title="", xlabel="", ylabel="", width=360, height=260):
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.width, self.height = width, height
        self.items = []
        self.xlim = None
        self.ylim = None

    def line(self, x, y, color=COLORS["fit"], width=1.5, label=None):
        self.items.append(("line", np.asarray(x, float), np.asarray(y, float), color, width, label))
        return self

    def points(self, x, y, color=COLORS["data"], r=2.0, label=None):
        self.items.append(("points", np.asarray(x, float), np.asarray(y, float), color, r, label))
        return self

    def box(self, position, quartiles, whiskers, color, label):
        self.items.append(("box", float(position), tuple(quartiles), tuple(whiskers), color, label))
        return self

    def hline(self, y, color="#555555", label=None):
        self.items.append(("hline", float(y), color, label))
        return self

    def _limits(self):
        xs, ys = [], []
        for it in self.items:
            if it[0] in ("line", "points"):
                xs.append(it[1])
                ys.append(it[2])
            elif it[0] == "box":
                xs.append(np.array([it[1] - 0.5, it[1] + 0.5]))
                ys.append(np.array(list(it[2]) + list(it[3])))
            elif it[0] == "hline":
                ys.append(np.array([it[1]]))
        x = np.concatenate(xs) if xs else np.array([0.0, 1.0])
        y = np.concatenate(ys) if ys else np.array([0.0, 1.0])
        x, y = x[np.isfinite(x)], y[np.isfinite(y)]
        xlim = self.xlim or (float(x.min()), float(x.max()))
        ylim = self.ylim or (float(y.min()), float(y.max()))
        if ylim[1] == ylim[0]:
            ylim = (ylim[0] - 1.0, ylim[1] + 1.0)
        if xlim[1] == xlim[0]:
            xlim = (xlim[0] - 1.0, xlim[1] + 1.0)
        pad = 0.05 * (ylim[1] - ylim[0])
        return xlim, (ylim[0] - pad, ylim[1] + pad)

    def render(self, ox, oy):
        left, right, top, bottom = 58, 12, 28, 40
        pw = self.width - left - right
        ph = self.height - top - bottom
        (x0, x1), (y0, y1) = self._limits()

        def sx(v):
            return ox + left + (np.asarray(v) - x0) / (x1 - x0) * pw

        def sy(v):
            return oy + top + ph - (np.asarray(v) - y0) / (y1 - y0) * ph

        out = ['<g font-family="sans-serif" font-size="10">']
        out.append(
            f'<rect x="{ox + left:.2f}" y="{oy + top:.2f}" width="{pw:.2f}" height="{ph:.2f}" '
            f'fill="none" stroke="#000"/>'
        )
        for t in _ticks(x0, x1):
            if x0 <= t <= x1:
                X = float(sx(t))
                out.append(f'<line x1="{X:.2f}" y1="{oy + top + ph:.2f}" x2="{X:.2f}" y2="{oy + top + ph + 4:.2f}" stroke="#000"/>')
                out.append(f'<text x="{X:.2f}" y="{oy + top + ph + 15:.2f}" text-anchor="middle">{fmt(t)}</text>')
        for t in _ticks(y0, y1):
            if y0 <= t <= y1:
                Y = float(sy(t))
                out.append(f'<line x1="{ox + left - 4:.2f}" y1="{Y:.2f}" x2="{ox + left:.2f}" y2="{Y:.2f}" stroke="#000"/>')
                out.append(f'<text x="{ox + left - 6:.2f}" y="{Y + 3:.2f}" text-anchor="end">{fmt(t)}</text>')
        out.append(f'<text x="{ox + left + pw / 2:.2f}" y="{oy + 16:.2f}" text-anchor="middle" font-size="12">{escape(self.title)}</text>')
        out.append(f'<text x="{ox + left + pw / 2:.2f}" y="{oy + self.height - 6:.2f}" text-anchor="middle">{escape(self.xlabel)}</text>')
        out.append(
            f'<text x="{ox + 12:.2f}" y="{oy + top + ph / 2:.2f}" text-anchor="middle" '
            f'transform="rotate(-90 {ox + 12:.2f} {oy + top + ph / 2:.2f})">{escape(self.ylabel)}</text>'
        )
        legend = []
        for it in self.items:
            kind = it[0]
            if kind == "line":
                _, x, y, color, w, label = it
                ok = np.isfinite(x) & np.isfinite(y) & (x >= x0) & (x <= x1)
                pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(sx(x[ok]), sy(y[ok])))
                out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{w}"/>')
            elif kind == "points":
                _, x, y, color, r, label = it
                ok = np.isfinite(x) & np.isfinite(y) & (x >= x0) & (x <= x1)
                for a, b in zip(sx(x[ok]), sy(y[ok])):
                    out.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="{r}" fill="{color}"/>')
            elif kind == "box":
                _, pos, (q1, q2, q3), (lo, hi), color, label = it
                X, hw = float(sx(pos)), 0.18 * pw / max(1.0, (x1 - x0))
                out.append(f'<line x1="{X:.2f}" y1="{float(sy(lo)):.2f}" x2="{X:.2f}" y2="{float(sy(hi)):.2f}" stroke="{color}"/>')
                out.append(
                    f'<rect x="{X - hw:.2f}" y="{float(sy(q3)):.2f}" width="{2 * hw:.2f}" '
                    f'height="{float(sy(q1) - sy(q3)):.2f}" fill="#ffffff" stroke="{color}"/>'
                )
                out.append(f'<line x1="{X - hw:.2f}" y1="{float(sy(q2)):.2f}" x2="{X + hw:.2f}" y2="{float(sy(q2)):.2f}" stroke="{color}" stroke-width="2"/>')
                out.append(f'<text x="{X:.2f}" y="{oy + top + ph + 28:.2f}" text-anchor="middle">{escape(label)}</text>')
                label = None
            elif kind == "hline":
                _, yv, color, label = it
                Y = float(sy(yv))
                out.append(f'<line x1="{ox + left:.2f}" y1="{Y:.2f}" x2="{ox + left + pw:.2f}" y2="{Y:.2f}" stroke="{color}" stroke-dasharray="4 3"/>')
            if it[-1]:
                legend.append((it[-1], it[3] if kind in ("line", "points") else it[2]))
        for k, (label, color) in enumerate(legend):
            y = oy + top + 12 + 12 * k
            out.append(f'<text x="{ox + left + 8:.2f}" y="{y:.2f}" fill="{color}">{escape(label)}</text>')
        out.append("</g>")
        return "\n".join(out)


def figure(panels, title=""):
    """Lay panels out left to right and return the SVG document as a string."""
    width = sum(p.width for p in panels)
    height = max(p.height for p in panels) + (20 if title else 0)
    off = 20 if title else 0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    if title:
        parts.append(f'<text x="{width / 2:.2f}" y="15" text-anchor="middle" font-family="sans-serif" font-size="13">{escape(title)}</text>')
    x = 0
    for p in panels:
        parts.append(p.render(x, off))
        x += p.width
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
