"""Compare measured response times against simulated ones.

Measurements are a one-column CSV of per-transaction response times in
milliseconds.  An optional header row is skipped.  Lines starting with
``#`` are comments.  Comments of the form ``# key: value`` are kept as
metadata; ``arrival_rate`` is the rate the measurement was taken at.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .hlf import HlfParams, build
from .simulation import SimConfig, simulate, tag_transactions
from .stats import welch_t_test

ALPHA = 0.05
SAME = "not significantly different"
DIFFERENT = "significantly different"


class MeasurementError(ValueError):
    pass


@dataclass
class MeasurementSet:
    samples: np.ndarray
    label: str = ""
    arrival_rate: float | None = None
    source: str = ""
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.size == 0:
            raise MeasurementError("measurement set is empty")
        if (self.samples <= 0).any():
            raise MeasurementError("response times must be positive")


def ingest_csv(path) -> MeasurementSet:
    path = Path(path)
    samples: list[float] = []
    metadata: dict[str, str] = {}
    bad: list[int] = []
    seen_data = False
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition(":")
            if sep:
                metadata[key.strip()] = value.strip()
            continue
        cell = line.split(",")[0].strip()
        try:
            samples.append(float(cell))
        except ValueError:
            if seen_data:
                bad.append(lineno)
        seen_data = True
    if bad:
        shown = ", ".join(map(str, bad[:10]))
        raise MeasurementError(f"{path}: non-numeric value on line(s) {shown}")
    if not samples:
        raise MeasurementError(f"{path}: no samples")
    rate = metadata.get("arrival_rate")
    return MeasurementSet(
        np.array(samples),
        label=metadata.get("label", path.stem),
        arrival_rate=float(rate) if rate else None,
        source=metadata.get("source", str(path)),
        metadata=metadata,
    )


@dataclass(frozen=True)
class ValidationReport:
    experimental_mean: float
    experimental_sd: float
    experimental_n: int
    simulated_mean: float
    simulated_sd: float
    simulated_n: int
    t: float
    p: float
    alpha: float = ALPHA

    @property
    def verdict(self) -> str:
        return SAME if self.p >= self.alpha else DIFFERENT

    def row(self) -> dict:
        return {
            "exp_mean_ms": self.experimental_mean, "exp_sd_ms": self.experimental_sd,
            "exp_n": self.experimental_n, "sim_mean_ms": self.simulated_mean,
            "sim_sd_ms": self.simulated_sd, "sim_n": self.simulated_n,
            "t": self.t, "p": self.p, "verdict": self.verdict,
        }

    def text(self) -> str:
        return (
            f"experimental MRT {self.experimental_mean:.1f} ms "
            f"(sd {self.experimental_sd:.1f}, n={self.experimental_n})\n"
            f"simulated MRT    {self.simulated_mean:.1f} ms "
            f"(sd {self.simulated_sd:.1f}, n={self.simulated_n})\n"
            f"Welch t = {self.t:.4f}, p = {self.p:.4f} at alpha {self.alpha:g}: {self.verdict}\n"
        )


def compare(measured, simulated, alpha: float = ALPHA) -> ValidationReport:
    a = np.asarray(measured, dtype=float)
    b = np.asarray(simulated, dtype=float)
    t, p = welch_t_test(a, b)
    return ValidationReport(float(a.mean()), float(a.std(ddof=1)), len(a),
                            float(b.mean()), float(b.std(ddof=1)), len(b), t, p, alpha)


def simulated_samples(params: HlfParams, cfg: SimConfig, samples: str = "transactions",
                      workers: int | None = None) -> np.ndarray:
    """Simulated response times: every committed transaction, or one mean
    per replication when ``samples == "replications"``."""
    hlf = build(params)
    tags = tag_transactions(hlf.net, hlf["Arrival"], hlf["Commit"])
    res = simulate(hlf.net, cfg, tags, workers)
    if samples == "transactions":
        out = res.response_times
    elif samples == "replications":
        out = np.array([r.mean_response_ms for r in res.replications])
        out = out[~np.isnan(out)]
    else:
        raise ValueError(f"unknown sample kind {samples!r}")
    return out


def validate(measured: MeasurementSet, params: HlfParams, cfg: SimConfig,
             samples: str = "transactions", alpha: float = ALPHA,
             workers: int | None = None) -> ValidationReport:
    """Simulate at the measurement's arrival rate and t-test the two sets."""
    if measured.arrival_rate is not None and not math.isclose(measured.arrival_rate, params.arrival_rate):
        params = replace(params, arrival_rate=measured.arrival_rate)
    sim = simulated_samples(params, cfg, samples, workers)
    if len(sim) < 2:
        raise MeasurementError(f"simulation produced {len(sim)} response-time sample(s); need >= 2")
    return compare(measured.samples, sim, alpha)
