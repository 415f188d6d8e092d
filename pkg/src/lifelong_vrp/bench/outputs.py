"""curves.csv, metrics.json and curves.svg, written atomically."""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Optional

import numpy as np

from ..metrics import MetricsLedger, compute_metrics

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def _num(x: float) -> str:
    return format(float(x), ".17g")


def curves_csv(ledger: MetricsLedger) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", *ledger.task_names])
    for t, row in enumerate(ledger.gaps):
        writer.writerow([t, *(_num(g) for g in row)])
    return buf.getvalue()


def read_curves(path) -> MetricsLedger:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "epoch":
        raise ValueError(f"{path}: not a curves file")
    names = rows[0][1:]
    body = rows[1:]
    for t, row in enumerate(body):
        if int(row[0]) != t or len(row) != len(names) + 1:
            raise ValueError(f"{path}: malformed row {t + 2}")
    gaps = np.array([[float(v) for v in row[1:]] for row in body])
    return MetricsLedger.from_matrix(gaps, names)


def metrics_json(ledger: MetricsLedger, extra: Optional[dict] = None) -> str:
    payload = {"metrics": compute_metrics(ledger), "tasks": ledger.task_names}
    payload.update(extra or {})
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def participation_bands(K: int, T: int) -> list[tuple[float, float]]:
    """Epoch interval during which each principal task has nonzero mixture weight."""
    if K < 2:
        return [(0.0, float(T))]
    m = T / (K - 1)
    return [(max(0.0, (i - 1) * m), min(float(T), (i + 1) * m)) for i in range(K)]


def curves_svg(ledger: MetricsLedger, bands=None, width: int = 760, height: int = 420) -> str:
    T, K = ledger.T, ledger.K
    bands = bands if bands is not None else participation_bands(K, T)
    left, right, top, bottom = 70, 150, 30, 55
    pw, ph = width - left - right, height - top - bottom
    lo, hi = float(np.min(ledger.gaps)), float(np.max(ledger.gaps))
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad

    def x(t):
        return left + pw * (t / T if T else 0.0)

    def y(g):
        return top + ph * (1 - (g - lo) / (hi - lo))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    for i, (a, b) in enumerate(bands):
        color = PALETTE[i % len(PALETTE)]
        out.append(f'<rect class="band" x="{x(a):.2f}" y="{top}" width="{x(b) - x(a):.2f}" '
                   f'height="{ph}" fill="{color}" fill-opacity="0.08"/>')
    out.append(f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>')
    out.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>')
    for k in range(6):
        t = T * k / 5
        g = lo + (hi - lo) * k / 5
        out.append(f'<text x="{x(t):.2f}" y="{top + ph + 18}" text-anchor="middle">{t:g}</text>')
        out.append(f'<text x="{left - 6}" y="{y(g) + 4:.2f}" text-anchor="end">{g:.3g}</text>')
    out.append(f'<text x="{left + pw / 2:.2f}" y="{height - 12}" text-anchor="middle">epoch</text>')
    out.append(f'<text x="18" y="{top + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {top + ph / 2:.2f})">optimality gap (%)</text>')
    for i, name in enumerate(ledger.task_names):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{x(t):.2f},{y(g):.2f}" for t, g in enumerate(ledger.gaps[:, i]))
        out.append(f'<polyline class="curve" fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 16 * (i + 1)
        out.append(f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 32}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 38}" y="{ly + 4}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_atomic(files: dict, out_dir) -> list[Path]:
    """Write ``{name: text}`` into ``out_dir`` so that either every file lands or none does."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    staged, placed = [], []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out_dir)
            staged.append(tmp)
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
        for tmp, name in zip(staged, files):
            os.replace(tmp, out_dir / name)
            placed.append(out_dir / name)
    except BaseException:
        for p in staged:
            if os.path.exists(p):
                os.unlink(p)
        for p in placed:
            p.unlink(missing_ok=True)
        raise
    return placed
