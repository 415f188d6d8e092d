"""Per-epoch test gaps and the four lifelong-learning summary metrics."""
from __future__ import annotations

from typing import Sequence

import numpy as np

METRIC_NAMES = ("AP", "AFB", "AMFB", "ABPl")


class MetricsLedger:
    """Gap matrix indexed by epoch ``0..T`` and principal task ``1..K``."""

    def __init__(self, K: int, T: int, task_names: Sequence[str] = ()):
        if K < 1 or T < 0:
            raise ValueError("need K >= 1 and T >= 0")
        self.K = K
        self.T = T
        self.task_names = list(task_names) or [f"task{i}" for i in range(1, K + 1)]
        self.gaps = np.full((T + 1, K), np.nan)

    def record(self, t: int, i: int, mean_gap: float) -> "MetricsLedger":
        if not (0 <= t <= self.T and 1 <= i <= self.K):
            raise IndexError(f"cell ({t}, {i}) out of range")
        if not np.isnan(self.gaps[t, i - 1]):
            raise ValueError(f"cell ({t}, {i}) already recorded")
        if not np.isfinite(mean_gap):
            raise ValueError("gap must be finite")
        if t > 0 and np.isnan(self.gaps[t - 1]).any():
            raise ValueError(f"epoch {t - 1} is incomplete")
        self.gaps[t, i - 1] = float(mean_gap)
        return self

    def get(self, t: int, i: int) -> float:
        return float(self.gaps[t, i - 1])

    @property
    def complete(self) -> bool:
        return not np.isnan(self.gaps).any()

    @classmethod
    def from_matrix(cls, gaps, task_names: Sequence[str] = ()) -> "MetricsLedger":
        gaps = np.asarray(gaps, dtype=np.float64)
        if gaps.ndim == 1:
            gaps = gaps[:, None]
        ledger = cls(gaps.shape[1], gaps.shape[0] - 1, task_names)
        for t, row in enumerate(gaps):
            for i, g in enumerate(row, start=1):
                ledger.record(t, i, g)
        return ledger


def tie_break_best(curve: Sequence[float]) -> tuple[float, int]:
    """Smallest value and the earliest epoch reaching it."""
    arr = np.asarray(curve, dtype=np.float64)
    t = int(np.argmin(arr))  # argmin returns the first occurrence
    return float(arr[t]), t


def compute_metrics(ledger: MetricsLedger) -> dict:
    if not ledger.complete:
        raise ValueError("ledger is incomplete")
    ap = afb = amfb = abpl = 0.0
    for i in range(ledger.K):
        curve = ledger.gaps[:, i]
        best, t_best = tie_break_best(curve)
        final = curve[-1]
        ap += final
        afb += final - best
        amfb += curve[t_best:].max() - best
        abpl += best
    K = ledger.K
    return {"AP": ap / K, "AFB": afb / K, "AMFB": amfb / K, "ABPl": abpl / K}
