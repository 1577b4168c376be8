"""Results CSV, per-sweep aggregates, and hand-rolled SVG line charts."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

from .experiment import RESULT_COLUMNS, TrialRecord

SWEEP_COLUMNS = ("dim", "n", "std", "eps_total")
AGGREGATE_COLUMNS = ("mechanism", "dim", "n", "std", "eps_total", "count", "failures",
                     "mean_error", "std_error", "median_error", "mean_acceptance")
SERIES_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_results(records: Sequence[TrialRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in records:
            w.writerow([_fmt(getattr(r, c)) for c in RESULT_COLUMNS])


def read_results(path) -> List[dict]:
    ints = {"rep", "seed", "dim", "n"}
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for raw in reader:
            row = {}
            for k, v in raw.items():
                if k in ("config_hash", "mechanism"):
                    row[k] = v
                elif k in ints:
                    row[k] = int(v)
                else:
                    row[k] = float(v) if v != "" else None
            rows.append(row)
    return rows


def as_rows(records) -> List[dict]:
    return [r if isinstance(r, dict) else {c: getattr(r, c) for c in RESULT_COLUMNS} for r in records]


def aggregate(records) -> List[dict]:
    """Mean, sample std (ddof=1; 0 for a single value) and median per group."""
    groups: Dict[tuple, list] = defaultdict(list)
    for r in as_rows(records):
        groups[(r["mechanism"],) + tuple(r[c] for c in SWEEP_COLUMNS)].append(r)
    out = []
    for key in sorted(groups, key=lambda k: (k[0],) + tuple(float(x) for x in k[1:])):
        rows = groups[key]
        errs = np.array([r["geodesic_error"] for r in rows], dtype=float)
        ok = errs[np.isfinite(errs)]
        accs = [r["acceptance_rate"] for r in rows if r["acceptance_rate"] is not None]
        out.append(dict(zip(("mechanism",) + SWEEP_COLUMNS, key),
                        count=len(ok), failures=len(errs) - len(ok),
                        mean_error=float(ok.mean()) if len(ok) else math.nan,
                        std_error=float(ok.std(ddof=1)) if len(ok) > 1 else 0.0,
                        median_error=float(np.median(ok)) if len(ok) else math.nan,
                        mean_acceptance=float(np.mean(accs)) if accs else None))
    return out


def write_aggregate(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGGREGATE_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in AGGREGATE_COLUMNS])


def swept_columns(rows) -> List[str]:
    return [c for c in SWEEP_COLUMNS if len({r[c] for r in rows}) > 1]


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    return list(np.linspace(lo, hi, n))


def line_chart_svg(series: Dict[str, list], x_label: str, y_label: str, title: str = "",
                   width: int = 640, height: int = 420) -> str:
    """SVG with one polyline per series and a shaded ±1 std band.

    ``series`` maps a name to a list of (x, mean, std) triples.
    """
    ml, mr, mt, mb = 70, 150, 40, 55
    pw, ph = width - ml - mr, height - mt - mb
    xs = [p[0] for pts in series.values() for p in pts]
    lows = [p[1] - p[2] for pts in series.values() for p in pts]
    highs = [p[1] + p[2] for pts in series.values() for p in pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(0.0, min(lows)), max(highs)
    if y1 <= y0:
        y1 = y0 + 1.0
    if x1 == x0:
        x1 = x0 + 1.0

    def sx(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return mt + ph - (y - y0) / (y1 - y0) * ph

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif" font-size="12">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
             f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>',
             f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>']
    for t in sorted(set(xs)):
        parts.append(f'<line x1="{sx(t):.1f}" y1="{mt + ph}" x2="{sx(t):.1f}" y2="{mt + ph + 5}" stroke="black"/>')
        parts.append(f'<text x="{sx(t):.1f}" y="{mt + ph + 18}" text-anchor="middle">{t:g}</text>')
    for t in _ticks(y0, y1):
        parts.append(f'<line x1="{ml - 5}" y1="{sy(t):.1f}" x2="{ml}" y2="{sy(t):.1f}" stroke="black"/>')
        parts.append(f'<text x="{ml - 8}" y="{sy(t) + 4:.1f}" text-anchor="end">{t:.3g}</text>')
    parts.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">{x_label}</text>')
    parts.append(f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{y_label}</text>')
    for i, (name, pts) in enumerate(series.items()):
        color = SERIES_COLORS[i % len(SERIES_COLORS)]
        pts = sorted(pts)
        upper = " ".join(f"{sx(x):.2f},{sy(m + s):.2f}" for x, m, s in pts)
        lower = " ".join(f"{sx(x):.2f},{sy(m - s):.2f}" for x, m, s in reversed(pts))
        parts.append(f'<polygon points="{upper} {lower}" fill="{color}" fill-opacity="0.18" stroke="none"/>')
        line = " ".join(f"{sx(x):.2f},{sy(m):.2f}" for x, m, _ in pts)
        parts.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = mt + 16 * i + 10
        parts.append(f'<line x1="{ml + pw + 12}" y1="{ly}" x2="{ml + pw + 32}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{ml + pw + 36}" y="{ly + 4}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


AXIS_LABELS = {"dim": "dimension", "n": "sample size N", "std": "data std", "eps_total": "total epsilon"}


def report(records, out_dir) -> List[Path]:
    """Write results.csv, aggregate.csv and one SVG per swept variable.

    A chart needs at least two distinct x values; other swept variables
    split the series.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = as_rows(records)
    if not rows:
        raise ValueError("no records to report")
    written = []
    if not isinstance(records[0], dict):
        write_results(records, out / "results.csv")
        written.append(out / "results.csv")
    agg = aggregate(rows)
    write_aggregate(agg, out / "aggregate.csv")
    written.append(out / "aggregate.csv")
    swept = swept_columns(agg)
    for x in swept:
        others = [c for c in swept if c != x]
        series = defaultdict(list)
        for r in agg:
            if not math.isfinite(r["mean_error"]):
                continue
            name = r["mechanism"] + "".join(f" {c}={r[c]:g}" for c in others)
            series[name].append((float(r[x]), r["mean_error"], r["std_error"]))
        if not series:
            continue
        svg = line_chart_svg(dict(series), AXIS_LABELS[x], "mean geodesic error",
                             title=f"error vs {AXIS_LABELS[x]}")
        path = out / f"error_vs_{x}.svg"
        path.write_text(svg)
        written.append(path)
    return written
