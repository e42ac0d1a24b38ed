"""Figure series (CSV) and minimal self-contained SVG plots from result tables."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from statsmodels.stats.proportion import proportion_confint

from .experiment import ResultTable

CDF_KINDS = {"participation_cdf": "participants", "energy_cdf": "e_tx_J", "icsi_cdf": "e_tx_J"}
CURVE_KINDS = {"outage_vs_pmax": ("outage",), "energy_vs_latency": ("e_tx_J",),
               "energy_vs_n": ("e_tx_J",), "comp_vs_comm": ("e_tx_J", "e_comp_avg_J"),
               "fl_convergence": ("nmse_loss", "nmse_accuracy")}
X_LABELS = {"outage_vs_pmax": "P_max (dBm)", "energy_vs_latency": "T_eff (ms)",
            "energy_vs_n": "number of SNs", "comp_vs_comm": "|B| (bits)",
            "fl_convergence": "P_max (dBm)"}


@dataclass(frozen=True)
class Series:
    name: str
    x: np.ndarray
    y: np.ndarray
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None


def wilson_interval(successes: int, n: int, alpha: float = 0.05) -> tuple[float, float]:
    lo, hi = proportion_confint(successes, n, alpha=alpha, method="wilson")
    return float(lo), float(hi)


def ecdf(values) -> tuple[np.ndarray, np.ndarray]:
    """Sorted finite values and their empirical CDF; the last y is exactly 1."""
    v = np.sort(np.asarray(values, dtype=float)[np.isfinite(values)])
    return v, np.arange(1, v.size + 1) / v.size


def build_series(table: ResultTable, kind: str) -> list[Series]:
    rows = [r for r in table if r.experiment == kind]
    if not rows:
        raise ValueError(f"no rows for experiment {kind!r}")
    sub = ResultTable(rows)
    out: list[Series] = []
    if kind in CDF_KINDS:
        metric = CDF_KINDS[kind]
        for s in sub.schemes():
            for v in sub.sweep_values():
                x, y = ecdf(sub.values(metric, s, v))
                if x.size:
                    label = f"Lp={int(v)}" if kind == "icsi_cdf" else f"{s}@{v:g}"
                    out.append(Series(label, x, y))
        return out
    if kind not in CURVE_KINDS:
        raise ValueError(f"unknown experiment kind {kind!r}")
    xs = np.array(sub.sweep_values())
    for metric in CURVE_KINDS[kind]:
        for s in sub.schemes():
            vals = [sub.values(metric, s, v) for v in xs]
            vals = [v[np.isfinite(v)] for v in vals]
            y = np.array([v.mean() if v.size else math.nan for v in vals])
            name = s if len(CURVE_KINDS[kind]) == 1 else f"{s}:{metric}"
            if metric == "outage":
                ci = [wilson_interval(int(v.sum()), v.size) for v in vals]
                out.append(Series(name, xs, y, np.array([c[0] for c in ci]),
                                  np.array([c[1] for c in ci])))
            else:
                out.append(Series(name, xs, y))
    return out


def _fmt(v: float) -> str:
    return repr(float(v))


def write_series_csv(path: Path, series: list[Series]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series", "x", "y", "y_lo", "y_hi"])
        for s in series:
            for i in range(s.x.size):
                lo = "" if s.lo is None else _fmt(s.lo[i])
                hi = "" if s.hi is None else _fmt(s.hi[i])
                w.writerow([s.name, _fmt(s.x[i]), _fmt(s.y[i]), lo, hi])


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf",
            "#7f7f7f")


def render_svg(series: list[Series], title: str, xlabel: str, ylabel: str,
               log_x: bool = False, log_y: bool = False, step: bool = False) -> str:
    """Plain SVG text with fixed formatting, so output is byte-stable."""
    w, h, ml, mr, mt, mb = 640, 420, 70, 170, 30, 50
    tx = (lambda v: math.log10(v)) if log_x else float
    ty = (lambda v: math.log10(v)) if log_y else float

    def ok(x, y):
        return (math.isfinite(x) and math.isfinite(y) and (not log_x or x > 0)
                and (not log_y or y > 0))

    pts = [(tx(x), ty(y)) for s in series for x, y in zip(s.x, s.y) if ok(x, y)]
    if not pts:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    else:
        xs, ys = zip(*pts)
        x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def px(x):
        return ml + (tx(x) - x0) / (x1 - x0) * (w - ml - mr)

    def py(y):
        return h - mb - (ty(y) - y0) / (y1 - y0) * (h - mt - mb)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
           f'viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">',
           f'<rect x="{ml}" y="{mt}" width="{w - ml - mr}" height="{h - mt - mb}" '
           'fill="none" stroke="#000"/>',
           f'<text x="{w / 2:.1f}" y="18" text-anchor="middle" font-size="13">{title}</text>',
           f'<text x="{(ml + w - mr) / 2:.1f}" y="{h - 12}" text-anchor="middle">{xlabel}</text>',
           f'<text x="14" y="{(mt + h - mb) / 2:.1f}" text-anchor="middle" '
           f'transform="rotate(-90 14 {(mt + h - mb) / 2:.1f})">{ylabel}</text>']
    for frac in (0.0, 0.5, 1.0):
        xv = x0 + frac * (x1 - x0)
        yv = y0 + frac * (y1 - y0)
        xl = 10 ** xv if log_x else xv
        yl = 10 ** yv if log_y else yv
        xpos = ml + frac * (w - ml - mr)
        ypos = h - mb - frac * (h - mt - mb)
        out.append(f'<text x="{xpos:.1f}" y="{h - mb + 14}" text-anchor="middle">{xl:.3g}</text>')
        out.append(f'<text x="{ml - 4}" y="{ypos + 4:.1f}" text-anchor="end">{yl:.3g}</text>')
    for i, s in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        coords = []
        prev_y = None
        for x, y in zip(s.x, s.y):
            if not ok(x, y):
                continue
            if step and prev_y is not None:
                coords.append(f"{px(x):.2f},{py(prev_y):.2f}")
            coords.append(f"{px(x):.2f},{py(y):.2f}")
            prev_y = y
        if coords:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                       f'points="{" ".join(coords)}"/>')
        ly = mt + 14 + 16 * i
        out.append(f'<line x1="{w - mr + 10}" y1="{ly - 4}" x2="{w - mr + 30}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{w - mr + 34}" y="{ly}">{s.name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plotdata(table: ResultTable, kind: str, out_dir: str | Path,
                  svg: bool = True) -> list[Path]:
    """Write ``<kind>_plot.csv`` (and ``<kind>.svg``); rerunning rewrites identical bytes."""
    if len(table) == 0:
        raise ValueError("result table is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    series = build_series(table, kind)
    paths = [out_dir / f"{kind}_plot.csv"]
    write_series_csv(paths[0], series)
    if svg:
        if kind in CDF_KINDS:
            text = render_svg(series, kind, CDF_KINDS[kind], "CDF",
                              log_x=CDF_KINDS[kind] == "e_tx_J", step=True)
        else:
            metric = CURVE_KINDS[kind][0]
            log_y = metric in ("outage", "e_tx_J") or kind == "comp_vs_comm"
            text = render_svg(series, kind, X_LABELS[kind], "/".join(CURVE_KINDS[kind]),
                              log_x=kind in ("comp_vs_comm", "energy_vs_n"), log_y=log_y)
        paths.append(out_dir / f"{kind}.svg")
        paths[1].write_text(text)
    return paths
