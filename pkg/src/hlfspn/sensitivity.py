"""Percentage-difference sensitivity over the factor variation ranges.

For each factor, the metric is evaluated at evenly spaced values across the
factor's range, with every other factor at its baseline.  The index is
``(max - min) / max`` of the metric across those evaluations, so it lies in
[0, 1] for a non-negative metric.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .hlf import BASELINE, FACTOR_RANGES, FACTORS, INTEGER_FIELDS, HlfParams, apply_factor
from .metrics import MetricsReport, evaluate

DEFAULT_POINTS = 8

Evaluator = Callable[[HlfParams], MetricsReport]


class SweepError(RuntimeError):
    pass


@dataclass(frozen=True)
class SweepPoint:
    value: float
    metric: float
    half_width: float | None = None


@dataclass(frozen=True)
class SensitivityIndex:
    factor: str
    metric: str
    index: float
    min: float
    max: float
    argmin: float
    argmax: float


def factor_values(factor: str, low: float, high: float, points: int) -> list[float]:
    if points < 2:
        raise ValueError("a sweep needs at least 2 points")
    values = np.linspace(low, high, points)
    if FACTORS[factor] in INTEGER_FIELDS:
        return [float(int(round(v))) for v in values]
    return [float(v) for v in values]


def sweep(factor: str, range: Sequence[float] | None = None, points: int = DEFAULT_POINTS,
          metric: str = "mrt", backend: str = "solver", base: HlfParams = BASELINE,
          evaluator: Evaluator | None = None, workers: int = 1) -> list[SweepPoint]:
    """Evaluate ``metric`` over evenly spaced values of one factor."""
    if factor not in FACTORS:
        raise KeyError(f"unknown factor {factor!r}")
    low, high = range if range is not None else FACTOR_RANGES[factor]
    values = factor_values(factor, low, high, points)
    evaluator = evaluator or (lambda p: evaluate(p, backend))

    def one(value: float) -> SweepPoint:
        try:
            report = evaluator(apply_factor(base, factor, value))
        except Exception as exc:
            raise SweepError(f"{factor} = {value:g}: {exc}") from exc
        key = report_key(metric)
        return SweepPoint(value, report.metric(metric), report.half_widths.get(key))

    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, values))
    return [one(v) for v in values]


def report_key(metric: str) -> str:
    return {"mrt": "mrt_ms", "tps": "tps_eq3", "throughput": "tps_eq3",
            "utilization": "util_endorse", "discard": "p_discard"}.get(metric, metric)


def index(points: Sequence[SweepPoint], factor: str = "", metric: str = "") -> SensitivityIndex:
    if not points:
        raise ValueError("empty sweep")
    values = [p.metric for p in points]
    lo = min(range_ := range(len(values)), key=lambda i: values[i])
    hi = max(range_, key=lambda i: values[i])
    vmin, vmax = values[lo], values[hi]
    idx = (vmax - vmin) / vmax if vmax > 0 else 0.0
    return SensitivityIndex(factor, metric, idx, vmin, vmax, points[lo].value, points[hi].value)


def rank_all(metric: str, backend: str = "solver", points: int = DEFAULT_POINTS,
             base: HlfParams = BASELINE, evaluator: Evaluator | None = None,
             factors: Sequence[str] | None = None) -> list[SensitivityIndex]:
    """Indices of every factor, highest first; ties ordered by factor name."""
    out = []
    for factor in factors or FACTORS:
        pts = sweep(factor, None, points, metric, backend, base, evaluator)
        out.append(index(pts, factor, metric))
    return ranked(out)


def ranked(indices: Sequence[SensitivityIndex]) -> list[SensitivityIndex]:
    # rounded so float noise between equal indices cannot beat the name order
    return sorted(indices, key=lambda s: (-round(s.index, 12), s.factor))
