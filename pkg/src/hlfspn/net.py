"""Generalized stochastic Petri net structure and firing rules.

A :class:`Net` is immutable.  Markings are plain tuples of token counts in
the order of ``net.places``; :meth:`Net.marking` and :meth:`Net.as_dict`
convert from and to place-id mappings.

Enabling rule for a transition ``t`` at marking ``m``:

* every input place holds at least the arc multiplicity,
* every inhibitor place holds fewer tokens than the arc multiplicity,
* every flush source holds at least one token,
* no finite-capacity output place would overflow,
* the guard (if any) holds.

If any immediate transition is enabled, only the enabled immediates of
maximal priority are reported; timed transitions are then disabled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Mapping, Sequence

from .guards import Atom, And, Guard, GuardError, Not, Or, format_guard, parse_guard

INF = math.inf

Marking = tuple[int, ...]

ARC_KINDS = ("input", "output", "inhibitor", "flush")


class NotEnabledError(ValueError):
    """Raised when firing a transition that is not enabled."""


@dataclass(frozen=True)
class Place:
    id: str
    capacity: float = INF
    initial: int = 0


@dataclass(frozen=True)
class Transition:
    id: str
    kind: str = "timed"
    mean_ms: float | None = None
    priority: int = 1
    weight: float = 1.0
    guard: Guard | None = None
    server: str = "single"

    @property
    def immediate(self) -> bool:
        return self.kind == "immediate"

    @property
    def rate(self) -> float:
        """Firing rate per millisecond of one server."""
        return 1.0 / self.mean_ms


@dataclass(frozen=True)
class Arc:
    source: str
    target: str
    kind: str = "input"
    multiplicity: int = 1


def _compile_guard(guard: Guard, index: Mapping[str, int]) -> Callable[[Sequence[int]], bool]:
    if isinstance(guard, Atom):
        if guard.place not in index:
            name = guard.place

            def unknown(m):
                raise GuardError(f"guard refers to unknown place {name!r}")

            return unknown
        i, value = index[guard.place], guard.value
        return {
            "<": lambda m: m[i] < value,
            "<=": lambda m: m[i] <= value,
            "=": lambda m: m[i] == value,
            "==": lambda m: m[i] == value,
            ">=": lambda m: m[i] >= value,
            ">": lambda m: m[i] > value,
        }[guard.op]
    if isinstance(guard, Not):
        inner = _compile_guard(guard.operand, index)
        return lambda m: not inner(m)
    left = _compile_guard(guard.left, index)
    right = _compile_guard(guard.right, index)
    if isinstance(guard, And):
        return lambda m: left(m) and right(m)
    assert isinstance(guard, Or)
    return lambda m: left(m) or right(m)


@dataclass
class _Compiled:
    """Index-based view of one transition, used on hot paths."""

    inputs: list[tuple[int, int]]
    inhibitors: list[tuple[int, int]]
    outputs: list[tuple[int, int]]
    flush: list[int]
    guard: Callable[[Sequence[int]], bool] | None
    immediate: bool
    priority: int
    weight: float
    rate: float
    infinite_server: bool
    # net change per place, excluding flushed amounts
    delta: dict[int, int] = field(default_factory=dict)


@dataclass(frozen=True)
class Net:
    places: tuple[Place, ...] = ()
    transitions: tuple[Transition, ...] = ()
    arcs: tuple[Arc, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "places", tuple(self.places))
        object.__setattr__(self, "transitions", tuple(self.transitions))
        object.__setattr__(self, "arcs", tuple(self.arcs))

    # cached compiled guards are closures; rebuild them after unpickling
    def __getstate__(self):
        return {"places": self.places, "transitions": self.transitions, "arcs": self.arcs}

    def __setstate__(self, state):
        for key, value in state.items():
            object.__setattr__(self, key, value)

    @cached_property
    def place_index(self) -> dict[str, int]:
        index: dict[str, int] = {}
        for i, p in enumerate(self.places):
            index.setdefault(p.id, i)
        return index

    @cached_property
    def transition_index(self) -> dict[str, int]:
        index: dict[str, int] = {}
        for i, t in enumerate(self.transitions):
            index.setdefault(t.id, i)
        return index

    @cached_property
    def capacities(self) -> tuple[float, ...]:
        return tuple(p.capacity for p in self.places)

    @property
    def initial_marking(self) -> Marking:
        return tuple(p.initial for p in self.places)

    def place(self, id: str) -> Place:
        try:
            return self.places[self.place_index[id]]
        except KeyError:
            raise KeyError(f"unknown place {id!r}") from None

    def transition(self, id: str) -> Transition:
        try:
            return self.transitions[self.transition_index[id]]
        except KeyError:
            raise KeyError(f"unknown transition {id!r}") from None

    def marking(self, tokens: Mapping[str, int] | None = None) -> Marking:
        """Initial marking with the given places overridden."""
        m = list(self.initial_marking)
        for pid, n in (tokens or {}).items():
            m[self.place_index[pid]] = int(n)
        return tuple(m)

    def as_dict(self, marking: Sequence[int]) -> dict[str, int]:
        return {p.id: int(n) for p, n in zip(self.places, marking)}

    def tokens(self, marking: Sequence[int], place: str) -> int:
        return marking[self.place_index[place]]

    def arcs_of(self, transition: str) -> list[Arc]:
        return [a for a in self.arcs if transition in (a.source, a.target)]

    @cached_property
    def compiled(self) -> list[_Compiled]:
        pidx = self.place_index
        tidx = self.transition_index
        out = []
        for t in self.transitions:
            out.append(_Compiled(
                inputs=[], inhibitors=[], outputs=[], flush=[],
                guard=_compile_guard(t.guard, pidx) if t.guard is not None else None,
                immediate=t.immediate, priority=t.priority, weight=t.weight,
                rate=0.0 if t.immediate else t.rate,
                infinite_server=t.server == "infinite",
            ))
        for a in self.arcs:
            if a.kind == "output":
                if a.source in tidx and a.target in pidx:
                    out[tidx[a.source]].outputs.append((pidx[a.target], a.multiplicity))
            elif a.source in pidx and a.target in tidx:
                c = out[tidx[a.target]]
                p = pidx[a.source]
                if a.kind == "input":
                    c.inputs.append((p, a.multiplicity))
                elif a.kind == "inhibitor":
                    c.inhibitors.append((p, a.multiplicity))
                elif a.kind == "flush":
                    c.flush.append(p)
        for c in out:
            for p, k in c.inputs:
                c.delta[p] = c.delta.get(p, 0) - k
            for p, k in c.outputs:
                c.delta[p] = c.delta.get(p, 0) + k
        return out

    # -- enabling and firing ---------------------------------------------

    def _has_concession(self, c: _Compiled, m: Sequence[int]) -> bool:
        for p, k in c.inputs:
            if m[p] < k:
                return False
        for p, k in c.inhibitors:
            if m[p] >= k:
                return False
        for p in c.flush:
            if m[p] < 1:
                return False
        if c.outputs:
            caps = self.capacities
            for p, k in c.outputs:
                cap = caps[p]
                if cap != INF:
                    after = m[p] + c.delta.get(p, 0)
                    if p in c.flush:
                        after = k
                    if after > cap:
                        return False
        return c.guard is None or c.guard(m)

    def enabled_indices(self, m: Sequence[int]) -> list[int]:
        """Indices of enabled transitions after immediate preemption."""
        timed: list[int] = []
        best = -1
        immediates: list[int] = []
        for i, c in enumerate(self.compiled):
            if not self._has_concession(c, m):
                continue
            if c.immediate:
                if c.priority > best:
                    best = c.priority
                    immediates = [i]
                elif c.priority == best:
                    immediates.append(i)
            else:
                timed.append(i)
        return immediates if immediates else timed

    def fire_index(self, m: Sequence[int], i: int) -> Marking:
        c = self.compiled[i]
        new = list(m)
        for p in c.flush:
            new[p] = 0
        for p, k in c.inputs:
            new[p] -= k
        for p, k in c.outputs:
            new[p] += k
        return tuple(new)

    def enabling_degree(self, m: Sequence[int], i: int) -> int:
        """Number of concurrent servers active for an enabled timed transition."""
        c = self.compiled[i]
        if not c.infinite_server or c.flush or not c.inputs:
            return 1
        return min(m[p] // k for p, k in c.inputs)

    def consumed(self, m: Sequence[int], transition: str, place: str) -> int:
        """Tokens removed from ``place`` when ``transition`` fires at ``m``."""
        c = self.compiled[self.transition_index[transition]]
        p = self.place_index[place]
        if p in c.flush:
            return m[p]
        return sum(k for q, k in c.inputs if q == p)


def enabled_transitions(net: Net, marking: Sequence[int] | Mapping[str, int]) -> set[str]:
    m = _as_tuple(net, marking)
    return {net.transitions[i].id for i in net.enabled_indices(m)}


def fire(net: Net, marking: Sequence[int] | Mapping[str, int], transition: str) -> Marking:
    m = _as_tuple(net, marking)
    try:
        i = net.transition_index[transition]
    except KeyError:
        raise NotEnabledError(f"unknown transition {transition!r}") from None
    if i not in net.enabled_indices(m):
        raise NotEnabledError(f"transition {transition!r} is not enabled at {net.as_dict(m)}")
    return net.fire_index(m, i)


def _as_tuple(net: Net, marking) -> Marking:
    if isinstance(marking, Mapping):
        return tuple(int(marking.get(p.id, 0)) for p in net.places)
    return tuple(marking)


def validate_net(net: Net) -> list[str]:
    """Structural diagnostics; an empty list means the net is well formed."""
    problems: list[str] = []
    seen: set[str] = set()
    for p in net.places:
        if p.id in seen:
            problems.append(f"duplicate place id {p.id!r}")
        seen.add(p.id)
        if p.initial < 0:
            problems.append(f"place {p.id!r} has negative initial tokens")
        if p.capacity != INF and (p.capacity < 1 or p.capacity != int(p.capacity)):
            problems.append(f"place {p.id!r} capacity must be a positive integer")
        elif p.initial > p.capacity:
            problems.append(f"place {p.id!r} initial tokens {p.initial} exceed capacity {p.capacity:g}")
    tseen: set[str] = set()
    for t in net.transitions:
        if t.id in tseen:
            problems.append(f"duplicate transition id {t.id!r}")
        if t.id in seen:
            problems.append(f"id {t.id!r} used for both a place and a transition")
        tseen.add(t.id)
        if t.kind not in ("timed", "immediate"):
            problems.append(f"transition {t.id!r} has unknown kind {t.kind!r}")
        elif t.kind == "timed" and not (t.mean_ms is not None and t.mean_ms > 0):
            problems.append(f"timed transition {t.id!r} needs a positive mean delay")
        elif t.kind == "immediate" and (t.priority < 0 or t.weight <= 0):
            problems.append(f"immediate transition {t.id!r} needs priority >= 0 and weight > 0")
        if t.server not in ("single", "infinite"):
            problems.append(f"transition {t.id!r} has unknown server semantics {t.server!r}")
        if t.guard is not None:
            from .guards import places_of

            for name in sorted(places_of(t.guard) - seen):
                problems.append(f"guard of {t.id!r} refers to unknown place {name!r}")
    flushes: set[tuple[str, str]] = set()
    for a in net.arcs:
        label = f"{a.kind} arc {a.source}->{a.target}"
        if a.kind not in ARC_KINDS:
            problems.append(f"{label}: unknown arc kind")
            continue
        if a.kind == "output":
            ok = a.source in tseen and a.target in seen
        else:
            ok = a.source in seen and a.target in tseen
        if not ok:
            problems.append(f"{label}: endpoints missing or wrongly typed")
        if a.kind != "flush" and a.multiplicity < 1:
            problems.append(f"{label}: multiplicity must be positive")
        if a.kind == "flush":
            if (a.source, a.target) in flushes:
                problems.append(f"{label}: more than one flush arc for this place")
            flushes.add((a.source, a.target))
    return problems


def describe(net: Net, notes: Mapping[str, str] | None = None) -> str:
    """Stable, diff-friendly text dump of a net."""
    from .guards import satisfiable

    notes = notes or {}
    caps = {p.id: p.capacity for p in net.places}
    lines = ["places:"]
    for p in net.places:
        cap = "inf" if p.capacity == INF else str(int(p.capacity))
        lines.append(f"  {p.id}: capacity={cap} initial={p.initial}")
    lines.append("transitions:")
    for t in net.transitions:
        if t.immediate:
            head = f"  {t.id}: immediate priority={t.priority} weight={t.weight:g}"
        else:
            head = f"  {t.id}: timed mean_ms={t.mean_ms:g} server={t.server}"
        lines.append(head)
        if t.guard is not None:
            text = f"    guard: {format_guard(t.guard)}"
            if not satisfiable(t.guard, caps):
                text += "  [guard unsatisfiable]"
            lines.append(text)
        if t.id in notes:
            lines.append(f"    note: {notes[t.id]}")
    lines.append("arcs:")
    for a in net.arcs:
        mult = "all" if a.kind == "flush" else str(a.multiplicity)
        lines.append(f"  {a.kind:<9} {a.source} -> {a.target} x{mult}")
    return "\n".join(lines) + "\n"


def timed(id: str, mean_ms: float, guard: Guard | str | None = None,
          server: str = "single") -> Transition:
    if isinstance(guard, str):
        guard = parse_guard(guard)
    return Transition(id, "timed", mean_ms=float(mean_ms), guard=guard, server=server)


def immediate(id: str, priority: int = 1, weight: float = 1.0,
              guard: Guard | str | None = None) -> Transition:
    if isinstance(guard, str):
        guard = parse_guard(guard)
    return Transition(id, "immediate", priority=priority, weight=weight, guard=guard)


def make_net(places: Iterable[Place], transitions: Iterable[Transition], arcs: Iterable[Arc]) -> Net:
    return Net(tuple(places), tuple(transitions), tuple(arcs))
