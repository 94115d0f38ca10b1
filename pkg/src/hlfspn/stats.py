"""Replication statistics and the Welch two-sample t-test."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats as _st

CONFIDENCE = 0.95


@dataclass(frozen=True)
class RunStats:
    mean: float
    sd: float
    half_width: float
    n: int

    @classmethod
    def of(cls, values: Sequence[float], confidence: float = CONFIDENCE) -> "RunStats":
        """Student-t interval over independent replication values."""
        x = np.asarray(values, dtype=float)
        n = len(x)
        if n == 0:
            return cls(math.nan, math.nan, math.nan, 0)
        mean = float(x.mean())
        if n == 1:
            return cls(mean, math.nan, math.inf, 1)
        sd = float(x.std(ddof=1))
        q = _st.t.ppf(0.5 + confidence / 2, n - 1)
        return cls(mean, sd, float(q * sd / math.sqrt(n)), n)

    @property
    def low(self) -> float:
        return self.mean - self.half_width

    @property
    def high(self) -> float:
        return self.mean + self.half_width

    def contains(self, value: float) -> bool:
        return self.low <= value <= self.high


def welch_from_moments(mean_a: float, sd_a: float, n_a: int,
                       mean_b: float, sd_b: float, n_b: int) -> tuple[float, float, float]:
    """Welch t statistic, Welch-Satterthwaite degrees of freedom and
    two-sided p-value from summary statistics."""
    if n_a < 2 or n_b < 2:
        raise ValueError("each sample needs at least two values")
    va, vb = sd_a ** 2 / n_a, sd_b ** 2 / n_b
    if va + vb <= 0:
        raise ValueError("degenerate variance: both samples are constant")
    t = (mean_a - mean_b) / math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va ** 2 / (n_a - 1) + vb ** 2 / (n_b - 1))
    p = float(2.0 * _st.t.sf(abs(t), df))
    return float(t), float(df), min(1.0, p)


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Two-sided Welch's unequal-variance t-test; returns ``(t, p)``.

    Raises ``ValueError`` when a sample has fewer than two values or both
    samples have zero variance.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each sample needs at least two values")
    sa, sb = a.std(ddof=1), b.std(ddof=1)
    if sa == 0 and sb == 0:
        raise ValueError("degenerate variance: both samples are constant")
    t, _, p = welch_from_moments(a.mean(), sa, len(a), b.mean(), sb, len(b))
    return t, p
