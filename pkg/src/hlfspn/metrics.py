"""Mean response time, throughput, utilization and discard probability.

All five metrics come from place expectations:

* MRT (Little's law): transactions in progress in P0, P1, P2 and block,
  divided by the arrival rate.
* Throughput: transactions waiting in P2 or in a block, divided by the
  mean commit time.  Being an estimate, it is reported as ``tps_eq3``.
  ``tps_counted`` is the committed-transaction rate, kept alongside it.
* Utilization: occupancy over capacity for the endorsement queue and the
  block queue.
* Discard probability: probability that the endorsement queue has no
  free slot.

Block tokens are weighted by the number of transactions they hold.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Mapping

from .hlf import HlfNet, HlfParams, build
from .reachability import (DEFAULT_MAX_ITER, DEFAULT_STATE_CAP, DEFAULT_TOL, SteadyState,
                           solve_net, token_distribution)
from .simulation import SimConfig, SimResult, simulate, tag_transactions
from .stats import RunStats

CSV_COLUMNS = ("mrt_ms", "tps_eq3", "tps_counted", "util_endorse", "util_block", "p_discard")


@dataclass(frozen=True)
class PlaceExpectation:
    place: str
    expectation: float


@dataclass(frozen=True)
class SolverOptions:
    state_cap: int = DEFAULT_STATE_CAP
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    method: str = "gauss-seidel"


@dataclass
class MetricsReport:
    mrt_ms: float
    throughput_tps: float
    tps_counted: float
    utilization: dict[str, float]
    discard_probability: float
    backend: str
    mrt_rate: str = "offered"
    expectations: dict[str, float] = field(default_factory=dict)
    half_widths: dict[str, float] = field(default_factory=dict)
    p_discard_counted: float | None = None

    def row(self) -> dict[str, float]:
        return {
            "mrt_ms": self.mrt_ms,
            "tps_eq3": self.throughput_tps,
            "tps_counted": self.tps_counted,
            "util_endorse": self.utilization["endorse"],
            "util_block": self.utilization["block"],
            "p_discard": self.discard_probability,
        }

    def metric(self, name: str) -> float:
        aliases = {"mrt": "mrt_ms", "tps": "tps_eq3", "throughput": "tps_eq3",
                   "utilization": "util_endorse", "discard": "p_discard"}
        try:
            return self.row()[aliases.get(name, name)]
        except KeyError:
            raise KeyError(f"unknown metric {name!r}; expected one of {CSV_COLUMNS}") from None


def expected_tokens(dist: Mapping[int, float]) -> float:
    """Sum of ``i * P(m = i)``."""
    return float(sum(i * p for i, p in dist.items()))


def mrt(expectations: Mapping[str, float], arrival_rate: float) -> float:
    """Mean response time in ms; ``arrival_rate`` in transactions per second."""
    if not arrival_rate > 0:
        raise ValueError("arrival rate must be positive")
    return sum(expectations.values()) / arrival_rate * 1000.0


def throughput(in_block_and_p2: float, commit_time_ms: float) -> float:
    """Transactions per second: expected transactions in P2 and block over
    the mean commit time."""
    if not commit_time_ms > 0:
        raise ValueError("commit time must be positive")
    return in_block_and_p2 / (commit_time_ms / 1000.0)


def utilization(expectation: float, capacity: float) -> float:
    if capacity < 1:
        raise ValueError("capacity must be >= 1")
    return expectation / capacity


def discard_probability(en_q: Mapping[int, float]) -> float:
    """Probability that no endorsement slot is free."""
    return float(en_q.get(0, 0.0))


def _assemble(hlf: HlfNet, E: Mapping[str, float], block_tx: float, committed_tps: float,
              p_discard: float, backend: str, effective: bool) -> MetricsReport:
    params = hlf.params
    in_progress = {hlf["P0"]: E[hlf["P0"]], hlf["P1"]: E[hlf["P1"]],
                   hlf["P2"]: E[hlf["P2"]], hlf["block"]: block_tx}
    rate = params.arrival_rate * (1.0 - p_discard) if effective else params.arrival_rate
    Q = params.endorse_queue_size
    return MetricsReport(
        mrt_ms=mrt(in_progress, rate) if rate > 0 else math.inf,
        throughput_tps=throughput(E[hlf["P2"]] + block_tx, params.commit_time_ms),
        tps_counted=committed_tps,
        utilization={
            "endorse": utilization(Q - E[hlf["en_q"]], Q),
            "block": utilization(E[hlf["P2"]], params.block_size),
        },
        discard_probability=p_discard,
        backend=backend,
        mrt_rate="effective" if effective else "offered",
        expectations={**{p: E[p] for p in (hlf["en_q"], hlf["P0"], hlf["P1"], hlf["P2"],
                                           hlf["block"])},
                      "block_tx": block_tx},
    )


def block_transactions(ss: SteadyState, hlf: HlfNet) -> tuple[float, float]:
    """Expected transactions held in the block place, and the rate (per ms)
    at which transactions enter it.

    The mean block size is the ratio of transaction flow to block flow out
    of P2; the expected number of block tokens times the mean block size
    gives the transactions in ``block``.
    """
    p2 = hlf["P2"]
    net = hlf.net
    tx_flow = sum(ss.firing_rate(t, lambda m, t=t: net.consumed(m, t, p2)) for t in hlf.block_forming)
    block_flow = sum(ss.firing_rate(t) for t in hlf.block_forming)
    blocks = expected_tokens(token_distribution(ss, hlf["block"]))
    if block_flow == 0:
        return 0.0, 0.0
    return blocks * tx_flow / block_flow, tx_flow


def from_steady_state(ss: SteadyState, hlf: HlfNet, effective: bool = False) -> MetricsReport:
    E = {p.id: expected_tokens(token_distribution(ss, p.id)) for p in hlf.net.places}
    block_tx, tx_flow = block_transactions(ss, hlf)
    p_discard = discard_probability(token_distribution(ss, hlf["en_q"]))
    return _assemble(hlf, E, block_tx, tx_flow * 1000.0, p_discard, "solver", effective)


def from_simulation(res: SimResult, hlf: HlfNet, effective: bool = False) -> MetricsReport:
    """Metrics from a simulation run, with 95% half-widths over replications."""
    en_q = hlf["en_q"]

    def per_rep(r) -> MetricsReport:
        E = dict(r.place_means)
        block_tx = r.carried_means[hlf["block"]]
        committed = len(r.response_times) / r.observed_ms * 1000.0
        return _assemble(hlf, E, block_tx, committed, r.zero_fraction[en_q], "simulation", effective)

    reports = [per_rep(r) for r in res.replications]
    rows = [rep.row() for rep in reports]
    summary = {k: RunStats.of([row[k] for row in rows]) for k in CSV_COLUMNS}
    exp_keys = reports[0].expectations.keys()
    expectations = {k: RunStats.of([rep.expectations[k] for rep in reports]).mean for k in exp_keys}
    return MetricsReport(
        mrt_ms=summary["mrt_ms"].mean,
        throughput_tps=summary["tps_eq3"].mean,
        tps_counted=summary["tps_counted"].mean,
        utilization={"endorse": summary["util_endorse"].mean, "block": summary["util_block"].mean},
        discard_probability=summary["p_discard"].mean,
        backend="simulation",
        mrt_rate="effective" if effective else "offered",
        expectations=expectations,
        half_widths={k: s.half_width for k, s in summary.items()},
        p_discard_counted=res.discarded / res.offered if res.offered else 0.0,
    )


def solve_hlf(params: HlfParams, options: SolverOptions = SolverOptions()) -> SteadyState:
    hlf = build(params)
    return solve_net(hlf.net, options.state_cap, options.tol, options.max_iter, options.method)


@functools.lru_cache(maxsize=1024)
def _solver_report(params: HlfParams, options: SolverOptions, effective: bool) -> MetricsReport:
    return from_steady_state(solve_hlf(params, options), build(params), effective)


def evaluate(params: HlfParams, backend: str = "solver", *, effective: bool = False,
             solver: SolverOptions = SolverOptions(), sim: SimConfig = SimConfig(),
             workers: int | None = None) -> MetricsReport:
    """Metrics of the HLF net for ``params`` on either backend.

    Solver results are memoized per parameter set; callers must not mutate
    the returned report.
    """
    if backend == "solver":
        return _solver_report(params, solver, effective)
    if backend == "simulation":
        hlf = build(params)
        tags = tag_transactions(hlf.net, hlf["Arrival"], hlf["Commit"])
        return from_simulation(simulate(hlf.net, sim, tags, workers), hlf, effective)
    raise ValueError(f"unknown backend {backend!r}")
