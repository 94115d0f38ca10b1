"""Discrete-event simulation of a GSPN with transaction tagging.

Every timed transition has an exponential delay, so the race between
enabled transitions is simulated by drawing the time to the next firing
from the total rate and picking the winner proportionally to its rate.
That is distributionally the same as sampling one clock per enabled
transition and resampling on each enabling.

Transactions are followed through *carrier* places.  A token in a carrier
place holds the entry times of the transactions it represents: one for a
plain transaction, many for a block.  Single-server transitions take
carrier tokens first-in first-out; infinite-server transitions take a
uniformly random token, since every server races independently.
"""

from __future__ import annotations

import collections
import concurrent.futures
import math
import os
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .net import INF, Net
from .stats import RunStats

WORKERS_ENV = "HLFSPN_WORKERS"


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    horizon_ms: float = 1e6
    warmup_ms: float | None = None  # defaults to 10% of the horizon
    replications: int = 20
    base_seed: int = 20240601
    check_capacity: bool = False

    def __post_init__(self):
        if not self.horizon_ms > 0:
            raise ValueError("horizon_ms must be positive")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not 0 <= self.warmup < self.horizon_ms:
            raise ValueError("warmup_ms must be in [0, horizon_ms)")

    @property
    def warmup(self) -> float:
        return 0.1 * self.horizon_ms if self.warmup_ms is None else self.warmup_ms


@dataclass(frozen=True)
class TagRule:
    """Where transactions enter and leave, and which places carry them."""

    entry: str
    exit: str
    carriers: frozenset[str]


def tag_transactions(net: Net, entry: str, exit: str,
                     carriers: Iterable[str] | None = None) -> TagRule:
    """Build a tagging rule.

    Without explicit ``carriers`` they are found by following token flow
    from the entry transition: every place fed by a transition that
    consumes a carrier token is a carrier, except places the entry
    transition itself consumes from (resource places such as free-slot
    pools).
    """
    for tid in (entry, exit):
        if tid not in net.transition_index:
            raise KeyError(f"unknown transition {tid!r}")
    if carriers is not None:
        found = frozenset(carriers)
        for pid in found:
            net.place(pid)
        return TagRule(entry, exit, found)
    resources = {a.source for a in net.arcs if a.target == entry and a.kind != "output"}
    outputs = collections.defaultdict(set)
    inputs = collections.defaultdict(set)
    for a in net.arcs:
        if a.kind == "output":
            outputs[a.source].add(a.target)
        elif a.kind in ("input", "flush"):
            inputs[a.source].add(a.target)
    found: set[str] = set()
    frontier = [p for p in outputs[entry] if p not in resources]
    while frontier:
        p = frontier.pop()
        if p in found:
            continue
        found.add(p)
        for t in inputs[p]:
            if t == exit:
                continue
            frontier.extend(q for q in outputs[t] if q not in resources and q not in found)
    return TagRule(entry, exit, frozenset(found))


@dataclass
class Replication:
    """Raw statistics of one replication, measured after the warmup."""

    index: int
    observed_ms: float
    place_means: dict[str, float]
    carried_means: dict[str, float]  # transactions (not tokens) per carrier place
    firings: dict[str, int]
    response_times: np.ndarray
    offered: int
    discarded: int
    zero_fraction: dict[str, float]  # fraction of time each place held no token
    deadlock: str | None = None

    @property
    def mean_response_ms(self) -> float:
        return float(self.response_times.mean()) if len(self.response_times) else math.nan

    def rate_per_s(self, transition: str) -> float:
        return self.firings[transition] / self.observed_ms * 1000.0


@dataclass
class SimResult:
    config: SimConfig
    tags: TagRule | None
    replications: list[Replication]
    place_means: dict[str, RunStats] = field(default_factory=dict)
    carried_means: dict[str, RunStats] = field(default_factory=dict)
    firing_rates: dict[str, RunStats] = field(default_factory=dict)  # per second
    mean_response: RunStats | None = None

    @property
    def response_times(self) -> np.ndarray:
        parts = [r.response_times for r in self.replications]
        return np.concatenate(parts) if parts else np.empty(0)

    @property
    def offered(self) -> int:
        return sum(r.offered for r in self.replications)

    @property
    def discarded(self) -> int:
        return sum(r.discarded for r in self.replications)

    @property
    def deadlocks(self) -> list[str]:
        return [r.deadlock for r in self.replications if r.deadlock]

    def stat(self, fn) -> RunStats:
        """RunStats of any per-replication quantity ``fn(replication)``."""
        return RunStats.of([fn(r) for r in self.replications])

    def write_response_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("rt_ms\n")
            for v in self.response_times:
                fh.write(f"{v:.6f}\n")


def _replicate(net: Net, cfg: SimConfig, tags: TagRule | None, r: int) -> Replication:
    seq = np.random.SeedSequence([cfg.base_seed, r])
    rnd = random.Random(int(seq.generate_state(1, dtype=np.uint64)[0]))
    np_rng = np.random.default_rng(seq.spawn(1)[0])
    uniform = rnd.random

    compiled = net.compiled
    places = [p.id for p in net.places]
    n_places = len(places)
    caps = net.capacities
    m = list(net.initial_marking)
    horizon, warmup = cfg.horizon_ms, cfg.warmup

    tidx = net.transition_index
    entry = tidx[tags.entry] if tags else -1
    exit_ = tidx[tags.exit] if tags else -1
    carrier = [tags is not None and p in tags.carriers for p in places]
    queues = [collections.deque() for _ in places]
    carried = [0] * n_places
    for i, p in enumerate(places):
        if carrier[i] and m[i]:
            raise SimulationError(f"carrier place {p!r} must start empty")

    area = [0.0] * n_places
    carried_area = [0.0] * n_places
    zero_time = [0.0] * n_places
    firings = [0] * len(compiled)
    samples: list[float] = []
    entry_blocked = 0.0
    entry_rate = compiled[entry].rate if tags else 0.0
    deadlock = None
    t = 0.0

    while True:
        enabled = net.enabled_indices(m)
        if not enabled:
            deadlock = f"deadlock at t={t:.6g} ms"
            dt = horizon - t
            fire = -1
        elif compiled[enabled[0]].immediate:
            dt = 0.0
            if len(enabled) == 1:
                fire = enabled[0]
            else:
                weights = [compiled[i].weight for i in enabled]
                fire = _pick(enabled, weights, uniform() * sum(weights))
        else:
            rates = [compiled[i].rate * net.enabling_degree(m, i) for i in enabled]
            total = sum(rates)
            dt = -math.log(1.0 - uniform()) / total
            fire = _pick(enabled, rates, uniform() * total)

        if dt > 0.0:
            end = t + dt
            if end > horizon:
                end = horizon
            lo = t if t > warmup else warmup
            span = end - lo
            if span > 0.0:
                for i in range(n_places):
                    k = m[i]
                    if k:
                        area[i] += k * span
                        if carrier[i]:
                            carried_area[i] += carried[i] * span
                    else:
                        zero_time[i] += span
                if tags and entry not in enabled:
                    entry_blocked += span
            if end >= horizon:
                break
            t = end
        if fire < 0:
            break

        c = compiled[fire]
        counting = t >= warmup
        if counting:
            firings[fire] += 1
        consumed: list = []
        if tags:
            for p in c.flush:
                if carrier[p]:
                    consumed.extend(queues[p])
                    queues[p].clear()
                    carried[p] = 0
            for p, k in c.inputs:
                if carrier[p]:
                    q = queues[p]
                    for _ in range(k):
                        if c.infinite_server and len(q) > 1:
                            q.rotate(-int(uniform() * len(q)))
                        payload = q.popleft()
                        carried[p] -= len(payload)
                        consumed.append(payload)
        for p in c.flush:
            m[p] = 0
        for p, k in c.inputs:
            m[p] -= k
        for p, k in c.outputs:
            m[p] += k
        if tags:
            if fire == exit_:
                if counting:
                    for payload in consumed:
                        samples.extend(t - t0 for t0 in payload)
            else:
                targets = [(p, k) for p, k in c.outputs if carrier[p]]
                produced = sum(k for _, k in targets)
                if fire == entry:
                    new = [[t] for _ in range(produced)]
                elif produced == len(consumed):
                    new = consumed
                elif produced == 1:
                    new = [[t0 for payload in consumed for t0 in payload]]
                elif produced == 0:
                    new = []
                else:
                    raise SimulationError(
                        f"cannot split {len(consumed)} tagged tokens over {produced} outputs "
                        f"of {net.transitions[fire].id!r}"
                    )
                it = iter(new)
                for p, k in targets:
                    for _ in range(k):
                        payload = next(it)
                        queues[p].append(payload)
                        carried[p] += len(payload)
        if cfg.check_capacity:
            for i in range(n_places):
                if m[i] < 0 or m[i] > caps[i]:
                    raise SimulationError(f"capacity violated in {places[i]!r}: {m[i]} tokens")

    observed = horizon - warmup
    offered = discarded = 0
    if tags:
        discarded = int(np_rng.poisson(entry_rate * entry_blocked))
        offered = firings[entry] + discarded
    return Replication(
        index=r,
        observed_ms=observed,
        place_means={p: area[i] / observed for i, p in enumerate(places)},
        carried_means={p: carried_area[i] / observed for i, p in enumerate(places) if carrier[i]},
        firings={tr.id: firings[i] for i, tr in enumerate(net.transitions)},
        response_times=np.asarray(samples),
        offered=offered,
        discarded=discarded,
        zero_fraction={p: zero_time[i] / observed for i, p in enumerate(places)},
        deadlock=deadlock,
    )


def _pick(items: Sequence[int], weights: Sequence[float], u: float) -> int:
    acc = 0.0
    for item, w in zip(items, weights):
        acc += w
        if u < acc:
            return item
    return items[-1]


def _workers(requested: int | None, jobs: int) -> int:
    env = os.environ.get(WORKERS_ENV)
    n = requested if requested is not None else (os.cpu_count() or 1)
    if env:
        n = min(n, max(1, int(env)))
    return max(1, min(n, jobs))


def simulate(net: Net, cfg: SimConfig = SimConfig(), tags: TagRule | None = None,
             workers: int | None = None) -> SimResult:
    """Run ``cfg.replications`` independent replications.

    Replication ``r`` draws from a random stream seeded by
    ``(cfg.base_seed, r)``, so results do not depend on ``workers``.
    """
    n = _workers(workers, cfg.replications)
    if n == 1:
        reps = [_replicate(net, cfg, tags, r) for r in range(cfg.replications)]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=n) as pool:
            futures = [pool.submit(_replicate, net, cfg, tags, r) for r in range(cfg.replications)]
            reps = [f.result() for f in futures]
    result = SimResult(cfg, tags, reps)
    for p in net.places:
        result.place_means[p.id] = result.stat(lambda r: r.place_means[p.id])
    if tags:
        for p in sorted(tags.carriers):
            result.carried_means[p] = result.stat(lambda r: r.carried_means[p])
        result.mean_response = RunStats.of(
            [r.mean_response_ms for r in reps if len(r.response_times)])
    for tr in net.transitions:
        result.firing_rates[tr.id] = result.stat(lambda r: r.rate_per_s(tr.id))
    return result
