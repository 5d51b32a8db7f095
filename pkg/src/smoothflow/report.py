"""Deterministic CSV tables and standalone SVG plots (no plotting dependency)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")
TRAJECTORY_COLUMNS = ("value_reg", "value_raw", "residual", "energy_E", "W", "t2_abs_residual", "t_speed")


def fmt(v):
    """Round-trip float formatting, stable across runs."""
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def trajectory_header(n):
    return (["t"] + [f"x_{i + 1}" for i in range(n)] + [f"v_{i + 1}" for i in range(n)]
            + list(TRAJECTORY_COLUMNS))


def trajectory_rows(diag):
    cols = [np.asarray(getattr(diag, c)) for c in TRAJECTORY_COLUMNS]
    for i in range(diag.t.size):
        yield [diag.t[i], *diag.x[i], *diag.v[i], *(c[i] for c in cols)]


def write_csv(path, header, rows):
    path = Path(path)
    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    try:
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def write_trajectory_csv(path, diag):
    return write_csv(path, trajectory_header(diag.x.shape[1]), trajectory_rows(diag))


# --------------------------------------------------------------------------- #
# SVG
# --------------------------------------------------------------------------- #


@dataclass
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray
    dashed: bool = False
    color: str | None = None
    width: float = 1.6


@dataclass
class PlotSpec:
    title: str
    xlabel: str
    ylabel: str
    series: list
    xlog: bool = False
    ylog: bool = False
    guides: list = field(default_factory=list)  # extra Series drawn in grey
    width: int = 720
    height: int = 480


def _nice_ticks(lo, hi, target=6):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / target
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return ticks


def _tick_label(v, log):
    if log:
        e = int(round(v))
        return f"1e{e}"
    s = f"{v:.6g}"
    return "0" if s in ("-0", "0") else s


def _clean(x, y, xlog, ylog):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y)
    if xlog:
        ok &= x > 0
    if ylog:
        ok &= y > 0
    tx = np.where(ok, np.log10(np.where(ok & (x > 0), x, 1.0)) if xlog else x, np.nan)
    ty = np.where(ok, np.log10(np.where(ok & (y > 0), y, 1.0)) if ylog else y, np.nan)
    return tx, ty


def svg_plot(spec):
    """Render a line plot as a standalone SVG 1.1 document string."""
    W, H = spec.width, spec.height
    left, right, top, bottom = 80, 170, 40, 60
    pw, ph = W - left - right, H - top - bottom
    all_series = [(s, False) for s in spec.series] + [(g, True) for g in spec.guides]
    data = [(s, g, *_clean(s.x, s.y, spec.xlog, spec.ylog)) for s, g in all_series]
    xs = np.concatenate([d[2][np.isfinite(d[2])] for d in data if not d[1]] or [np.array([0.0, 1.0])])
    ys = np.concatenate([d[3][np.isfinite(d[3])] for d in data if not d[1]] or [np.array([0.0, 1.0])])
    if xs.size == 0:
        xs = np.array([0.0, 1.0])
    if ys.size == 0:
        ys = np.array([0.0, 1.0])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 - x0 < 1e-12:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 - y0 < 1e-12:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.04 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def px(v):
        return left + (v - x0) / (x1 - x0) * pw

    def py(v):
        return top + ph - (v - y0) / (y1 - y0) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8" standalone="yes"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}px" height="{H}px" '
        f'viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="#ffffff"/>',
        f'<text x="{left + pw / 2:.2f}" y="24" font-family="sans-serif" font-size="15" '
        f'text-anchor="middle">{escape(spec.title)}</text>',
        f'<defs><clipPath id="plotarea"><rect x="{left}" y="{top}" width="{pw}" height="{ph}"/></clipPath></defs>',
    ]
    xt = [v for v in (_nice_ticks(x0, x1) if not spec.xlog else range(math.ceil(x0), math.floor(x1) + 1))]
    yt = [v for v in (_nice_ticks(y0, y1) if not spec.ylog else range(math.ceil(y0), math.floor(y1) + 1))]
    for v in xt:
        X = px(v)
        out.append(f'<line x1="{X:.2f}" y1="{top}" x2="{X:.2f}" y2="{top + ph}" stroke="#e6e6e6" stroke-width="1"/>')
        out.append(f'<text x="{X:.2f}" y="{top + ph + 18}" font-family="sans-serif" font-size="11" '
                   f'text-anchor="middle">{escape(_tick_label(v, spec.xlog))}</text>')
    for v in yt:
        Y = py(v)
        out.append(f'<line x1="{left}" y1="{Y:.2f}" x2="{left + pw}" y2="{Y:.2f}" stroke="#e6e6e6" stroke-width="1"/>')
        out.append(f'<text x="{left - 6}" y="{Y + 4:.2f}" font-family="sans-serif" font-size="11" '
                   f'text-anchor="end">{escape(_tick_label(v, spec.ylog))}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#000000" stroke-width="1"/>')
    out.append(f'<text x="{left + pw / 2:.2f}" y="{H - 16}" font-family="sans-serif" font-size="13" '
               f'text-anchor="middle">{escape(spec.xlabel)}</text>')
    out.append(f'<text x="18" y="{top + ph / 2:.2f}" font-family="sans-serif" font-size="13" text-anchor="middle" '
               f'transform="rotate(-90 18 {top + ph / 2:.2f})">{escape(spec.ylabel)}</text>')

    legend_y = top + 10
    k = 0
    for s, is_guide, tx, ty in data:
        color = "#888888" if is_guide else (s.color or PALETTE[k % len(PALETTE)])
        if not is_guide:
            k += 1
        dash = ' stroke-dasharray="6 4"' if (s.dashed or is_guide) else ""
        segs, cur = [], []
        for a, b in zip(tx, ty):
            if np.isfinite(a) and np.isfinite(b):
                cur.append(f"{px(a):.2f},{py(b):.2f}")
            elif cur:
                segs.append(cur)
                cur = []
        if cur:
            segs.append(cur)
        for seg in segs:
            if len(seg) == 1:
                x_, y_ = seg[0].split(",")
                out.append(f'<circle cx="{x_}" cy="{y_}" r="2.5" fill="{color}" clip-path="url(#plotarea)"/>')
            else:
                out.append(f'<polyline points="{" ".join(seg)}" fill="none" stroke="{color}" '
                           f'stroke-width="{s.width}"{dash} clip-path="url(#plotarea)"/>')
        LX = left + pw + 12
        out.append(f'<line x1="{LX}" y1="{legend_y}" x2="{LX + 24}" y2="{legend_y}" stroke="{color}" '
                   f'stroke-width="2"{dash}/>')
        out.append(f'<text x="{LX + 30}" y="{legend_y + 4}" font-family="sans-serif" font-size="11">'
                   f'{escape(s.label)}</text>')
        legend_y += 18
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, spec):
    path = Path(path)
    try:
        path.write_text(svg_plot(spec), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def slope_guide(t_lo, t_hi, y_at_lo, slope=-2.0, label="slope -2"):
    """Reference power-law line y = y_at_lo * (t / t_lo)^slope."""
    t = np.array([t_lo, t_hi], dtype=float)
    return Series(label, t, y_at_lo * (t / t_lo) ** slope, dashed=True)


def residual_plot(diags, labels, title):
    """log10 t vs log10 |zeta| for each trajectory, with a slope -2 guide."""
    series = [Series(lab, d.t, np.abs(d.residual)) for d, lab in zip(diags, labels)]
    d0 = diags[0]
    y_ref = max(float(np.max(np.abs(d.residual[d.t >= d.t[0]])) if d.t.size else 1.0) for d in diags)
    guide = slope_guide(float(d0.t[0]), float(d0.t[-1]), y_ref)
    return PlotSpec(title, "t", "|phi_mu(t)(x(t)) - inf phi|", series, xlog=True, ylog=True, guides=[guide])


def render_report(diags, labels, out_dir, stem, extra_plots=()):
    """CSV per trajectory plus a residual plot and any extra plots; returns written paths."""
    if not diags:
        raise ValueError("render_report needs at least one trajectory record")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for d, lab in zip(diags, labels):
        written.append(write_trajectory_csv(out_dir / f"{stem}_{lab}.csv", d))
    written.append(write_svg(out_dir / f"{stem}_residuals.svg", residual_plot(diags, labels, f"{stem}: residuals")))
    for name, spec in extra_plots:
        written.append(write_svg(out_dir / f"{stem}_{name}.svg", spec))
    return written
