"""Minimal SVG figures: line curves, bars, heatmaps and interval plots.

Output is plain text assembled from a fixed layout, so the same inputs always
give byte-identical files.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1b6ca8", "#d1495b", "#66a182", "#edae49", "#6c4f9c", "#444444")
W, H = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 40, 60


def _n(x):
    return f"{x:.2f}"


class _Canvas:
    def __init__(self, title, width=W, height=H):
        self.w, self.h = width, height
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
            f'<rect width="{width}" height="{height}" fill="white"/>',
            f'<text x="{width / 2}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        ]

    def add(self, s):
        self.parts.append(s)

    def text(self, x, y, s, anchor="middle", rotate=None, size=None):
        extra = f' transform="rotate({rotate} {_n(x)} {_n(y)})"' if rotate is not None else ""
        fs = f' font-size="{size}"' if size else ""
        self.add(f'<text x="{_n(x)}" y="{_n(y)}" text-anchor="{anchor}"{fs}{extra}>{escape(str(s))}</text>')

    def line(self, x1, y1, x2, y2, color="#000", width=1.0, dash=None):
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.add(f'<line x1="{_n(x1)}" y1="{_n(y1)}" x2="{_n(x2)}" y2="{_n(y2)}" '
                 f'stroke="{color}" stroke-width="{width}"{d}/>')

    def save(self, path):
        self.add("</svg>")
        with open(path, "w") as fh:
            fh.write("\n".join(self.parts) + "\n")


class _Axes:
    def __init__(self, cv, xlim, ylim, xlabel="", ylabel=""):
        self.cv = cv
        self.x0, self.x1 = LEFT, cv.w - RIGHT
        self.y0, self.y1 = cv.h - BOTTOM, TOP
        self.xlim, self.ylim = xlim, ylim
        cv.line(self.x0, self.y0, self.x1, self.y0)
        cv.line(self.x0, self.y0, self.x0, self.y1)
        cv.text((self.x0 + self.x1) / 2, cv.h - 18, xlabel)
        cv.text(18, (self.y0 + self.y1) / 2, ylabel, rotate=-90)

    def X(self, x):
        a, b = self.xlim
        return self.x0 + (x - a) / (b - a) * (self.x1 - self.x0)

    def Y(self, y):
        a, b = self.ylim
        return self.y0 - (y - a) / (b - a) * (self.y0 - self.y1)

    def yticks(self, n=5):
        for v in np.linspace(*self.ylim, n):
            y = self.Y(v)
            self.cv.line(self.x0 - 4, y, self.x0, y)
            self.cv.text(self.x0 - 7, y + 4, f"{v:.3g}", anchor="end")

    def xticks(self, n=5):
        for v in np.linspace(*self.xlim, n):
            x = self.X(v)
            self.cv.line(x, self.y0, x, self.y0 + 4)
            self.cv.text(x, self.y0 + 17, f"{v:.3g}")

    def legend(self, labels):
        for k, lab in enumerate(labels):
            y = self.y1 + 10 + 18 * k
            c = PALETTE[k % len(PALETTE)]
            self.cv.add(f'<rect x="{self.x1 + 15}" y="{y - 9}" width="12" height="12" fill="{c}"/>')
            self.cv.text(self.x1 + 32, y + 1, lab, anchor="start")


def line_plot(path, curves: dict, title="", xlabel="", ylabel="", ylim=(0.0, 1.0)):
    """One polyline per entry of ``curves`` (label -> y values at x = 1, 2, ...)."""
    cv = _Canvas(title)
    n = max(len(v) for v in curves.values())
    ax = _Axes(cv, (1, max(n, 2)), ylim, xlabel, ylabel)
    ax.xticks()
    ax.yticks()
    for k, (lab, ys) in enumerate(curves.items()):
        pts = " ".join(f"{_n(ax.X(i + 1))},{_n(ax.Y(y))}" for i, y in enumerate(ys))
        cv.add(f'<polyline points="{pts}" fill="none" stroke="{PALETTE[k % len(PALETTE)]}" stroke-width="2"/>')
    ax.legend(list(curves))
    cv.save(path)


def bar_plot(path, values: dict, title="", ylabel=""):
    """One bar per entry of ``values`` (label -> height)."""
    cv = _Canvas(title)
    top = max(1.0, max(values.values()) * 1.15)
    ax = _Axes(cv, (0, len(values)), (0, top), "", ylabel)
    ax.yticks()
    bw = 0.6
    for k, (lab, v) in enumerate(values.items()):
        x0, x1 = ax.X(k + 0.5 - bw / 2), ax.X(k + 0.5 + bw / 2)
        y = ax.Y(v)
        cv.add(f'<rect x="{_n(x0)}" y="{_n(y)}" width="{_n(x1 - x0)}" height="{_n(ax.y0 - y)}" '
               f'fill="{PALETTE[k % len(PALETTE)]}"/>')
        cv.text((x0 + x1) / 2, ax.y0 + 17, lab)
        cv.text((x0 + x1) / 2, y - 5, f"{v:.3g}")
    cv.save(path)


def heatmap(path, M, row_labels, col_labels, title="", vmin=0.0, vmax=1.0):
    """Cells shaded from white (``vmin``) to dark blue (``vmax``) with values printed."""
    M = np.asarray(M, dtype=float)
    nr, nc = M.shape
    cell_w, cell_h = 90, 22
    width = 140 + cell_w * nc + 20
    height = 60 + cell_h * nr + 20
    cv = _Canvas(title, width, height)
    for j, lab in enumerate(col_labels):
        cv.text(140 + cell_w * (j + 0.5), 50, lab)
    for i, lab in enumerate(row_labels):
        y = 60 + cell_h * i
        cv.text(132, y + 15, lab, anchor="end")
        for j in range(nc):
            t = 0.0 if vmax == vmin else float(np.clip((M[i, j] - vmin) / (vmax - vmin), 0, 1))
            r, g, b = (int(255 + (c - 255) * t) for c in (27, 108, 168))
            x = 140 + cell_w * j
            cv.add(f'<rect x="{x}" y="{y}" width="{cell_w}" height="{cell_h}" '
                   f'fill="rgb({r},{g},{b})" stroke="white"/>')
            col = "white" if t > 0.55 else "black"
            cv.add(f'<text x="{x + cell_w / 2}" y="{y + 15}" text-anchor="middle" fill="{col}">'
                   f"{M[i, j]:.2f}</text>")
    cv.save(path)


def interval_plot(path, groups: dict, labels, title="", xlabel="", ref=1.0, log_scale=True):
    """Horizontal point-and-interval rows.

    ``groups`` maps a series name to a list of ``(mean, lower, upper, selected)``
    per label; NaN entries are skipped.  Selected intervals are drawn solid,
    the rest dashed.
    """
    nl = len(labels)
    height = max(H, 80 + 26 * nl * max(1, len(groups)) // 2 + BOTTOM)
    cv = _Canvas(title, W + 60, height)
    vals = [v for g in groups.values() for row in g for v in row[:3] if np.isfinite(v)]
    f = np.log if log_scale else (lambda v: v)
    if vals:
        lo, hi = f(min(vals + [ref])), f(max(vals + [ref]))
    else:
        lo, hi = -1.0, 1.0
    pad = 0.05 * (hi - lo or 1.0)
    x0, x1 = 160, cv.w - RIGHT
    yb, yt = cv.h - BOTTOM, TOP + 10

    def X(v):
        return x0 + (f(v) - (lo - pad)) / (hi - lo + 2 * pad) * (x1 - x0)

    cv.line(x0, yb, x1, yb)
    cv.text((x0 + x1) / 2, cv.h - 18, xlabel)
    for t in np.linspace(lo - pad, hi + pad, 5):
        v = float(np.exp(t)) if log_scale else t
        cv.line(X(v), yb, X(v), yb + 4)
        cv.text(X(v), yb + 17, f"{v:.3g}")
    cv.line(X(ref), yb, X(ref), yt, color="#888", dash="4,3")
    ng = max(1, len(groups))
    step = (yb - yt) / max(nl, 1)
    for i, lab in enumerate(labels):
        yc = yt + step * (i + 0.5)
        cv.text(x0 - 8, yc + 4, lab, anchor="end")
        for g, (name, rows) in enumerate(groups.items()):
            m, l, u, sel = rows[i]
            if not np.isfinite(m):
                continue
            y = yc + (g - (ng - 1) / 2) * min(10.0, step / (ng + 1))
            c = PALETTE[g % len(PALETTE)]
            cv.line(X(l), y, X(u), y, color=c, width=2, dash=None if sel else "5,3")
            cv.add(f'<circle cx="{_n(X(m))}" cy="{_n(y)}" r="3.5" fill="{c}"/>')
    for k, name in enumerate(groups):
        y = yt + 18 * k
        cv.add(f'<rect x="{x1 + 15}" y="{y - 9}" width="12" height="12" fill="{PALETTE[k % len(PALETTE)]}"/>')
        cv.text(x1 + 32, y + 1, name, anchor="start")
    cv.save(path)
