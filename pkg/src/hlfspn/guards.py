"""Marking predicates for transition guards.

Guards are small boolean trees over atoms ``m(place) <op> constant``.  The
textual form accepted by :func:`parse_guard` is the one written by
:func:`format_guard`, e.g. ``m(P2) >= 1 && m(P2) < 10``.
"""

from __future__ import annotations

import itertools
import operator
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Union

_OPS: dict[str, Callable[[int, int], bool]] = {
    "<": operator.lt,
    "<=": operator.le,
    "=": operator.eq,
    "==": operator.eq,
    ">=": operator.ge,
    ">": operator.gt,
}


class GuardError(ValueError):
    pass


@dataclass(frozen=True)
class Atom:
    place: str
    op: str
    value: int

    def __post_init__(self):
        if self.op not in _OPS:
            raise GuardError(f"unknown comparison {self.op!r}")

    def evaluate(self, tokens: Mapping[str, int]) -> bool:
        try:
            m = tokens[self.place]
        except KeyError:
            raise GuardError(f"guard refers to unknown place {self.place!r}") from None
        return _OPS[self.op](m, self.value)


@dataclass(frozen=True)
class And:
    left: "Guard"
    right: "Guard"

    def evaluate(self, tokens: Mapping[str, int]) -> bool:
        return self.left.evaluate(tokens) and self.right.evaluate(tokens)


@dataclass(frozen=True)
class Or:
    left: "Guard"
    right: "Guard"

    def evaluate(self, tokens: Mapping[str, int]) -> bool:
        return self.left.evaluate(tokens) or self.right.evaluate(tokens)


@dataclass(frozen=True)
class Not:
    operand: "Guard"

    def evaluate(self, tokens: Mapping[str, int]) -> bool:
        return not self.operand.evaluate(tokens)


Guard = Union[Atom, And, Or, Not]


def places_of(guard: Guard) -> set[str]:
    if isinstance(guard, Atom):
        return {guard.place}
    if isinstance(guard, Not):
        return places_of(guard.operand)
    return places_of(guard.left) | places_of(guard.right)


def _atoms(guard: Guard):
    if isinstance(guard, Atom):
        yield guard
    elif isinstance(guard, Not):
        yield from _atoms(guard.operand)
    else:
        yield from _atoms(guard.left)
        yield from _atoms(guard.right)


def format_guard(guard: Guard) -> str:
    if isinstance(guard, Atom):
        op = "=" if guard.op == "==" else guard.op
        return f"m({guard.place}) {op} {guard.value}"
    if isinstance(guard, Not):
        return f"!({format_guard(guard.operand)})"
    sym = "&&" if isinstance(guard, And) else "||"
    parts = []
    for side in (guard.left, guard.right):
        text = format_guard(side)
        # && binds tighter than ||
        if isinstance(guard, And) and isinstance(side, Or):
            text = f"({text})"
        parts.append(text)
    return f"{parts[0]} {sym} {parts[1]}"


def satisfiable(guard: Guard, capacities: Mapping[str, float]) -> bool:
    """Whether some marking within ``capacities`` makes the guard true.

    Atoms compare against constants, so for an unbounded place every value
    above the largest constant behaves the same; the search range is cut
    there.
    """
    names = sorted(places_of(guard))
    ranges = []
    for name in names:
        limit = max(a.value for a in _atoms(guard) if a.place == name) + 1
        cap = capacities.get(name, float("inf"))
        top = int(min(cap, max(limit, 0)))
        ranges.append(range(0, top + 1))
    for combo in itertools.product(*ranges):
        if guard.evaluate(dict(zip(names, combo))):
            return True
    return False


_TOKEN = re.compile(
    r"\s*(?:(?P<num>-?\d+)|(?P<m>m\(\s*(?P<place>[A-Za-z_][\w.]*)\s*\))"
    r"|(?P<op><=|>=|==|=|<|>)|(?P<and>&&|\band\b)|(?P<or>\|\||\bor\b)"
    r"|(?P<not>!|\bnot\b)|(?P<lp>\()|(?P<rp>\)))"
)


def _tokenize(text: str) -> list[tuple[str, str]]:
    out = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if not match or match.end() == pos:
            raise GuardError(f"cannot parse guard {text!r} at column {pos}")
        kind = match.lastgroup
        if kind == "place":
            kind = "m"
        value = match.group("place") if kind == "m" else match.group(kind)
        out.append((kind, value))
        pos = match.end()
    return out


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> str | None:
        return self.tokens[self.i][0] if self.i < len(self.tokens) else None

    def take(self, kind: str) -> str:
        if self.peek() != kind:
            raise GuardError(f"expected {kind} in guard {self.text!r}")
        value = self.tokens[self.i][1]
        self.i += 1
        return value

    def parse(self) -> Guard:
        node = self.disjunction()
        if self.peek() is not None:
            raise GuardError(f"trailing input in guard {self.text!r}")
        return node

    def disjunction(self) -> Guard:
        node = self.conjunction()
        while self.peek() == "or":
            self.take("or")
            node = Or(node, self.conjunction())
        return node

    def conjunction(self) -> Guard:
        node = self.unary()
        while self.peek() == "and":
            self.take("and")
            node = And(node, self.unary())
        return node

    def unary(self) -> Guard:
        if self.peek() == "not":
            self.take("not")
            return Not(self.unary())
        if self.peek() == "lp":
            self.take("lp")
            node = self.disjunction()
            self.take("rp")
            return node
        place = self.take("m")
        op = self.take("op")
        return Atom(place, op, int(self.take("num")))


def parse_guard(text: str) -> Guard:
    return _Parser(text).parse()
