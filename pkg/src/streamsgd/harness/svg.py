"""Minimal standalone SVG line plots."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["Series", "AxesSpec", "render_svg", "emit_svg"]

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")


@dataclass
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray


@dataclass
class AxesSpec:
    xlog: bool = False
    ylog: bool = False
    title: str = ""
    xlabel: str = "t"
    ylabel: str = ""
    width: int = 640
    height: int = 420


def _transform(v: np.ndarray, log: bool, axis: str, label: str) -> np.ndarray:
    if log:
        if np.any(v <= 0):
            raise ValueError(f"series {label!r} has non-positive {axis} values; "
                             f"use a linear {axis} axis instead of a log axis")
        return np.log10(v)
    return v


def _ticks(lo: float, hi: float, log: bool) -> list:
    if log:
        return [(float(e), f"1e{e}") for e in range(math.ceil(lo), math.floor(hi) + 1)]
    step = 10 ** math.floor(math.log10((hi - lo) / 4)) if hi > lo else 1.0
    for m in (1, 2, 5, 10):
        if (hi - lo) / (step * m) <= 6:
            step *= m
            break
    start = math.ceil(lo / step) * step
    return [(v, f"{v:.4g}") for v in np.arange(start, hi + step * 1e-9, step)]


def render_svg(series: Sequence[Series], axes: AxesSpec = AxesSpec()) -> str:
    """SVG text with one polyline per series and a legend."""
    if not series or all(len(s.x) == 0 for s in series):
        raise ValueError("nothing to plot: no data points")
    pts = []
    for s in series:
        x, y = np.asarray(s.x, dtype=float), np.asarray(s.y, dtype=float)
        if x.shape != y.shape:
            raise ValueError(f"series {s.label!r}: x and y lengths differ")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError(f"series {s.label!r} has non-finite values")
        pts.append((_transform(x, axes.xlog, "x", s.label), _transform(y, axes.ylog, "y", s.label)))
    allx = np.concatenate([p[0] for p in pts])
    ally = np.concatenate([p[1] for p in pts])
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    W, H = axes.width, axes.height
    left, right, top, bottom = 70, 20, 30, 50
    pw, ph = W - left - right, H - top - bottom

    def px(v):
        return left + (v - x0) / (x1 - x0) * pw

    def py(v):
        return top + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    if axes.title:
        out.append(f'<text x="{W / 2:.1f}" y="18" text-anchor="middle" font-size="14">'
                   f'{escape(axes.title)}</text>')
    for v, lab in _ticks(x0, x1, axes.xlog):
        out.append(f'<text x="{px(v):.1f}" y="{top + ph + 16}" text-anchor="middle" '
                   f'font-size="10">{lab}</text>')
    for v, lab in _ticks(y0, y1, axes.ylog):
        out.append(f'<text x="{left - 4}" y="{py(v) + 3:.1f}" text-anchor="end" '
                   f'font-size="10">{lab}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{H - 10}" text-anchor="middle" '
               f'font-size="12">{escape(axes.xlabel)}</text>')
    out.append(f'<text x="14" y="{top + ph / 2:.1f}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 14 {top + ph / 2:.1f})">{escape(axes.ylabel)}</text>')
    for k, (s, (x, y)) in enumerate(zip(series, pts)):
        color = PALETTE[k % len(PALETTE)]
        coords = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                   f'points="{coords}"><title>{escape(s.label)}</title></polyline>')
        ly = top + 14 + 16 * k
        out.append(f'<line x1="{left + 10}" y1="{ly}" x2="{left + 30}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + 35}" y="{ly + 4}" font-size="11" class="legend">'
                   f'{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg(series: Sequence[Series], path, axes: AxesSpec = AxesSpec()):
    text = render_svg(series, axes)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return path
