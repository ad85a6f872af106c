"""Unpaired two-sided Welch t-test and summary helpers."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import betainc


@dataclass(frozen=True)
class WelchResult:
    t: float
    p: float
    df: float
    degenerate: bool = False


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> WelchResult:
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.size < 2 or y.size < 2:
        raise ValueError("each sample needs at least two values")
    mx, my = x.mean(), y.mean()
    vx, vy = x.var(ddof=1) / x.size, y.var(ddof=1) / y.size
    se2 = vx + vy
    if se2 == 0.0:
        if mx == my:
            return WelchResult(0.0, 1.0, math.nan, True)
        return WelchResult(math.copysign(math.inf, mx - my), 0.0, math.nan, True)
    t = (mx - my) / math.sqrt(se2)
    df = se2 ** 2 / (vx ** 2 / (x.size - 1) + vy ** 2 / (y.size - 1))
    # two-sided tail of Student's t through the regularized incomplete beta
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return WelchResult(float(t), min(1.0, max(0.0, p)), float(df))


def mean_std(rows: Sequence[Sequence[float]]) -> tuple[np.ndarray, np.ndarray]:
    """Column mean and sample std (ddof=1; zero for a single row)."""
    m = np.asarray(rows, dtype=float)
    if m.ndim != 2 or m.shape[0] == 0:
        raise ValueError("need a non-empty 2-D array")
    std = m.std(axis=0, ddof=1) if m.shape[0] > 1 else np.zeros(m.shape[1])
    return m.mean(axis=0), std


def moving_average(values: Sequence[float], window: int) -> np.ndarray:
    """Trailing mean over up to ``window`` points (shorter at the start)."""
    if window < 1:
        raise ValueError("window must be positive")
    v = np.asarray(values, dtype=float)
    c = np.concatenate(([0.0], np.cumsum(v)))
    idx = np.arange(1, v.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)
