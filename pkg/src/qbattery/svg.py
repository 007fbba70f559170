"""Tiny SVG writer for scatter plots and charging curves.

Output is a pure function of the inputs (no timestamps), so files are
byte-identical across runs.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 480
MARGIN = 60


def _f(x: float) -> str:
    return f"{x:.2f}"


class Plot:
    def __init__(self, xlim, ylim, title="", xlabel="", ylabel="", width=WIDTH, height=HEIGHT):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if self.x1 == self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 == self.y0:
            self.y1 = self.y0 + 1.0
        self.w, self.h = width, height
        self.items: list[str] = []
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel

    def px(self, x):
        return MARGIN + (x - self.x0) / (self.x1 - self.x0) * (self.w - 2 * MARGIN)

    def py(self, y):
        return self.h - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (self.h - 2 * MARGIN)

    def circle(self, x, y, r=2.0, color="black", opacity=1.0):
        self.items.append(
            f'<circle cx="{_f(self.px(x))}" cy="{_f(self.py(y))}" r="{r}" fill="{color}" fill-opacity="{opacity}"/>'
        )

    def line(self, xa, ya, xb, yb, color="black", width=1.0):
        self.items.append(
            f'<line x1="{_f(self.px(xa))}" y1="{_f(self.py(ya))}" x2="{_f(self.px(xb))}" '
            f'y2="{_f(self.py(yb))}" stroke="{color}" stroke-width="{width}"/>'
        )

    def polyline(self, xs, ys, color="black", width=1.5):
        pts = " ".join(f"{_f(self.px(x))},{_f(self.py(y))}" for x, y in zip(xs, ys))
        self.items.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"/>')

    def errorbar(self, x, y, err, color="black"):
        self.line(x, y - err, x, y + err, color)
        self.circle(x, y, 3.0, color)

    def text(self, x_px, y_px, s, size=12, anchor="middle"):
        self.items.append(
            f'<text x="{_f(x_px)}" y="{_f(y_px)}" font-size="{size}" text-anchor="{anchor}" '
            f'font-family="sans-serif">{escape(s)}</text>'
        )

    def _axes(self) -> list[str]:
        out = [
            f'<rect x="{MARGIN}" y="{MARGIN}" width="{self.w - 2 * MARGIN}" height="{self.h - 2 * MARGIN}" '
            'fill="none" stroke="black"/>'
        ]
        for v in np.linspace(self.x0, self.x1, 5):
            out.append(
                f'<text x="{_f(self.px(v))}" y="{self.h - MARGIN + 18}" font-size="11" '
                f'text-anchor="middle" font-family="sans-serif">{v:.3g}</text>'
            )
        for v in np.linspace(self.y0, self.y1, 5):
            out.append(
                f'<text x="{MARGIN - 6}" y="{_f(self.py(v) + 4)}" font-size="11" '
                f'text-anchor="end" font-family="sans-serif">{v:.3g}</text>'
            )
        return out

    def render(self) -> str:
        head = (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}" '
            f'viewBox="0 0 {self.w} {self.h}">'
        )
        body = [head, f'<rect width="{self.w}" height="{self.h}" fill="white"/>']
        body += self._axes()
        # clip data to the frame
        body.append(
            f'<clipPath id="frame"><rect x="{MARGIN}" y="{MARGIN}" width="{self.w - 2 * MARGIN}" '
            f'height="{self.h - 2 * MARGIN}"/></clipPath><g clip-path="url(#frame)">'
        )
        body += self.items
        body.append("</g>")
        if self.title:
            body.append(self._label(self.w / 2, MARGIN / 2, self.title, 14))
        if self.xlabel:
            body.append(self._label(self.w / 2, self.h - 15, self.xlabel))
        if self.ylabel:
            body.append(
                f'<text x="15" y="{_f(self.h / 2)}" font-size="12" text-anchor="middle" font-family="sans-serif" '
                f'transform="rotate(-90 15 {_f(self.h / 2)})">{escape(self.ylabel)}</text>'
            )
        body.append("</svg>")
        return "\n".join(body) + "\n"

    def _label(self, x, y, s, size=12):
        return (
            f'<text x="{_f(x)}" y="{_f(y)}" font-size="{size}" text-anchor="middle" '
            f'font-family="sans-serif">{escape(s)}</text>'
        )


def iq_scatter(shots0, shots1, disc=None, extra=None, title="IQ plane") -> str:
    """Calibration clouds (blue |0>, red |1>), centroids and the separating line."""
    clouds = [np.asarray(s, dtype=float).reshape(-1, 2) for s in (shots0, shots1) if s is not None]
    if extra is not None:
        clouds.append(np.asarray(extra, dtype=float).reshape(-1, 2))
    allpts = np.vstack(clouds)
    lo, hi = allpts.min(axis=0), allpts.max(axis=0)
    pad = 0.05 * (hi - lo + 1e-9)
    p = Plot((lo[0] - pad[0], hi[0] + pad[0]), (lo[1] - pad[1], hi[1] + pad[1]), title, "I (a.u.)", "Q (a.u.)")
    for pts, color in zip(clouds, ("#1f4fbf", "#c0392b", "#27ae60")):
        for x, y in pts:
            p.circle(x, y, 1.5, color, 0.5)
    if disc is not None:
        c0, c1, m = np.asarray(disc.c0), np.asarray(disc.c1), disc.midpoint
        axis = disc.axis
        perp = np.array([-axis[1], axis[0]]) / math.hypot(*axis)
        span = float(np.max(hi - lo)) * 2.0
        a, b = m - span * perp, m + span * perp
        p.line(a[0], a[1], b[0], b[1], "black", 1.5)
        p.line(c0[0], c0[1], c1[0], c1[1], "black", 0.8)
        p.circle(c0[0], c0[1], 6.0, "black")
        p.circle(c1[0], c1[1], 6.0, "black")
    return p.render()


def charging_plot(theta, mean, err, model_theta=None, model_y=None, ideal_y=None, title="Charging curve") -> str:
    theta = np.asarray(theta, dtype=float)
    xmax = float(theta.max()) if theta.size else 1.0
    p = Plot((0.0, max(xmax, 1e-9)), (0.0, 1.05), title, "theta (rad)", "E / Delta")
    if ideal_y is not None and model_theta is not None:
        p.polyline(model_theta, ideal_y, "#888888", 1.0)
    if model_theta is not None and model_y is not None:
        p.polyline(model_theta, model_y, "black", 1.5)
    for x, y, e in zip(theta, mean, err):
        p.errorbar(x, y, e, "#1f4fbf")
    return p.render()
