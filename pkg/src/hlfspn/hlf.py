"""The Hyperledger Fabric transaction-flow net.

Transactions arrive while the endorsement queue has a free slot, are
endorsed (which frees the slot), ordered into the block-forming place,
cut into a block either when the block is full or when the batch timeout
fires, and finally committed.

Arrival, Endorse, Order and BatchTimeout are single-server. Commit is
infinite-server. Every block in the ``block`` place is written out
independently.

``P1`` and ``block`` are unbounded in the pipeline as drawn.  The exact
solver needs a finite state space, so both get a large truncation capacity
(``p1_capacity``, ``block_capacity``).  The defaults keep the truncated
probability mass negligible over the whole factor range.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

from .guards import And, Atom
from .net import INF, Arc, Net, Place, describe, immediate, timed

# Factor name -> HlfParams field, in the order of the factor table.
FACTORS: dict[str, str] = {
    "Arrival Rate": "arrival_rate",
    "Block Timeout": "block_timeout_ms",
    "Committing Time": "commit_time_ms",
    "Ordering Time": "order_time_ms",
    "Endorsing Time": "endorse_time_ms",
    "Block Size": "block_size",
    "Endorsing Queue Size": "endorse_queue_size",
}

# Variation ranges of each factor around the baseline.
FACTOR_RANGES: dict[str, tuple[float, float]] = {
    "Arrival Rate": (7.0, 18.0),
    "Block Timeout": (1000.0, 3000.0),
    "Committing Time": (575.0, 1725.0),
    "Ordering Time": (7.5, 22.5),
    "Endorsing Time": (80.0, 240.0),
    "Block Size": (5, 45),
    "Endorsing Queue Size": (5, 15),
}

INTEGER_FIELDS = {"block_size", "endorse_queue_size"}

ROLES = ("en_q", "P0", "P1", "P2", "block",
         "Arrival", "Endorse", "Order", "FullBlock", "BatchTimeout", "Commit")


@dataclass(frozen=True)
class HlfParams:
    arrival_rate: float = 10.0  # transactions per second
    block_timeout_ms: float = 2000.0
    commit_time_ms: float = 1150.0
    order_time_ms: float = 15.0
    endorse_time_ms: float = 160.0
    block_size: int = 10
    endorse_queue_size: int = 10
    # truncation of structurally unbounded places; None leaves them unbounded
    p1_capacity: int | None = 12
    block_capacity: int | None = 15

    def __post_init__(self):
        for name in FACTORS.values():
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive number, got {value!r}")
        for name in INTEGER_FIELDS:
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        for name in ("p1_capacity", "block_capacity"):
            value = getattr(self, name)
            if value is not None and (int(value) != value or value < 1):
                raise ValueError(f"{name} must be a positive integer or None")

    @property
    def arrival_mean_ms(self) -> float:
        return 1000.0 / self.arrival_rate

    def factors(self) -> dict[str, float]:
        return {name: getattr(self, attr) for name, attr in FACTORS.items()}

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "HlfParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown hlf field(s): {', '.join(sorted(unknown))}")
        return cls(**data)


BASELINE = HlfParams()


def apply_factor(params: HlfParams, factor: str, value: float) -> HlfParams:
    """Copy of ``params`` with one factor (by its table name) replaced."""
    try:
        attr = FACTORS[factor]
    except KeyError:
        raise KeyError(f"unknown factor {factor!r}; expected one of {list(FACTORS)}") from None
    if attr in INTEGER_FIELDS:
        value = int(round(value))
    return replace(params, **{attr: value})


@dataclass(frozen=True)
class HlfNet:
    net: Net
    params: HlfParams
    roles: dict  # role name -> place or transition id

    def __getitem__(self, role: str) -> str:
        return self.roles[role]

    @property
    def in_progress_places(self) -> tuple[str, ...]:
        return tuple(self.roles[r] for r in ("P0", "P1", "P2", "block"))

    @property
    def block_forming(self) -> tuple[str, ...]:
        """Transitions that cut a block out of P2."""
        return self.roles["FullBlock"], self.roles["BatchTimeout"]

    def describe(self) -> str:
        notes = {}
        if self.params.block_size == 1:
            notes["BatchTimeout"] = "every block is cut by FullBlock"
        return describe(self.net, notes)


def build(params: HlfParams = BASELINE) -> HlfNet:
    B = params.block_size
    Q = params.endorse_queue_size
    cap = lambda c: INF if c is None else c  # noqa: E731
    places = (
        Place("en_q", capacity=Q, initial=Q),
        Place("P0"),
        Place("P1", capacity=cap(params.p1_capacity)),
        Place("P2", capacity=B),
        Place("block", capacity=cap(params.block_capacity)),
    )
    transitions = (
        timed("Arrival", params.arrival_mean_ms),
        timed("Endorse", params.endorse_time_ms),
        timed("Order", params.order_time_ms),
        immediate("FullBlock", priority=1, guard=Atom("P2", "=", B)),
        timed("BatchTimeout", params.block_timeout_ms,
              guard=And(Atom("P2", ">=", 1), Atom("P2", "<", B))),
        timed("Commit", params.commit_time_ms, server="infinite"),
    )
    arcs = (
        Arc("en_q", "Arrival"),
        Arc("Arrival", "P0", "output"),
        Arc("P0", "Endorse"),
        Arc("Endorse", "P1", "output"),
        Arc("Endorse", "en_q", "output"),
        Arc("P1", "Order"),
        Arc("Order", "P2", "output"),
        Arc("P2", "FullBlock", "input", B),
        Arc("FullBlock", "block", "output"),
        Arc("P2", "BatchTimeout", "flush"),
        Arc("BatchTimeout", "block", "output"),
        Arc("block", "Commit"),
    )
    net = Net(places, transitions, arcs)
    return HlfNet(net, params, {r: r for r in ROLES})
