"""Hand-written SVG plots of suboptimality against bits per worker.

Output is a pure function of the input data: fixed palette, fixed number
formatting, no timestamps.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from .harness import load_manifest
from .optimizers import read_metrics_csv

WIDTH, HEIGHT = 720, 440
LEFT, RIGHT, TOP, BOTTOM = 80, 220, 30, 60
MAX_POINTS = 2000
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
           "#bcbd22", "#17becf")
X_LABEL = "bits/n"
Y_LABEL = "f(x)−f(x*)"


@dataclass
class Curve:
    label: str
    source: str
    bits: np.ndarray
    values: np.ndarray

    def clean(self):
        """Points usable on a log axis, and how many rows were dropped."""
        ok = np.isfinite(self.bits) & np.isfinite(self.values) & (self.values > 0)
        return self.bits[ok], self.values[ok], int(ok.size - ok.sum())


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _thin(x, y):
    if x.size <= MAX_POINTS:
        return x, y
    idx = np.unique(np.append(np.linspace(0, x.size - 1, MAX_POINTS).astype(np.int64), x.size - 1))
    return x[idx], y[idx]


def _tick_label(v: float) -> str:
    if v == 0:
        return "0"
    e = int(math.floor(math.log10(abs(v))))
    m = v / 10.0**e
    return f"{m:.3g}e{e}"


def render_svg(curves: list[Curve], title: str = "") -> str:
    cleaned = [c.clean() for c in curves]
    xs = [x for x, _, _ in cleaned if x.size]
    ys = [y for _, y, _ in cleaned if y.size]
    x_max = max((float(x.max()) for x in xs), default=1.0) or 1.0
    if ys:
        lo = math.floor(math.log10(min(float(y.min()) for y in ys)))
        hi = math.ceil(math.log10(max(float(y.max()) for y in ys)))
    else:
        lo, hi = -1, 0
    if hi <= lo:
        hi = lo + 1
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(b):
        return LEFT + pw * (b / x_max)

    def py(v):
        # -log10(v) mapped linearly: the top edge is 10^hi
        return TOP + ph * (hi - math.log10(v)) / (hi - lo)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{LEFT + pw / 2:.2f}" y="18" text-anchor="middle">{escape(title)}</text>')
    out.append(f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for e in range(lo, hi + 1):
        y = py(10.0**e)
        out.append(f'<line x1="{LEFT - 4}" y1="{_fmt(y)}" x2="{LEFT + pw}" y2="{_fmt(y)}" stroke="#dddddd"/>')
        out.append(f'<text x="{LEFT - 8}" y="{_fmt(y + 4)}" text-anchor="end">1e{e}</text>')
    for i in range(5):
        b = x_max * i / 4
        x = px(b)
        out.append(f'<line x1="{_fmt(x)}" y1="{TOP + ph}" x2="{_fmt(x)}" y2="{TOP + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{_fmt(x)}" y="{TOP + ph + 18}" text-anchor="middle">{_tick_label(b)}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.2f}" y="{HEIGHT - 15}" text-anchor="middle">{X_LABEL}</text>')
    out.append(f'<text x="18" y="{TOP + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {TOP + ph / 2:.2f})">{escape(Y_LABEL)}</text>')
    for i, (curve, (x, y, _)) in enumerate(zip(curves, cleaned)):
        color = PALETTE[i % len(PALETTE)]
        x, y = _thin(x, y)
        if x.size:
            pts = " ".join(f"{_fmt(px(b))},{_fmt(py(v))}" for b, v in zip(x.tolist(), y.tolist()))
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = TOP + 14 + 16 * i
        lx = LEFT + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 20}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly}">{escape(curve.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def summarize(curves: list[Curve], column: str) -> dict:
    items = []
    for c in curves:
        x, y, dropped = c.clean()
        last = float(c.values[-1]) if c.values.size else math.nan
        items.append({
            "label": c.label,
            "source": c.source,
            "final_subopt": last if math.isfinite(last) else None,
            "best_subopt": float(y.min()) if y.size else None,
            "points": int(x.size),
            "dropped": dropped,
        })
    return {"column": column, "curves": items}


def curve_from_csv(path, label: str | None = None, column: str = "f_subopt_w") -> Curve:
    log = read_metrics_csv(path)
    values = getattr(log, column, None)
    if values is None:
        raise ValueError(f"{path}: column {column} is not available")
    name = label or os.path.splitext(os.path.basename(os.fspath(path)))[0]
    return Curve(name, os.fspath(path), log.bits_per_worker, np.asarray(values, dtype=np.float64))


def curves_from_manifest(path, column: str = "f_subopt_w") -> list[Curve]:
    manifest = load_manifest(path)
    base = os.path.dirname(os.fspath(path))
    out = []
    for cell in manifest["cells"]:
        if not cell.get("csv_path"):
            continue
        label = f"{cell['label']} s={cell['s']:g} seed={cell['seed']}"
        out.append(curve_from_csv(os.path.join(base, *cell["csv_path"].split("/")), label, column))
    return out


def load_curves(paths, column: str = "f_subopt_w") -> list[Curve]:
    curves = []
    for p in paths:
        if os.fspath(p).endswith(".json"):
            curves.extend(curves_from_manifest(p, column))
        else:
            curves.append(curve_from_csv(p, column=column))
    return curves
