"""Reachability graph, vanishing-marking elimination and steady-state solution.

Rates are per millisecond throughout, matching the mean delays stored on
timed transitions.
"""

from __future__ import annotations

import collections
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .net import Marking, Net

log = logging.getLogger(__name__)

DEFAULT_STATE_CAP = 5_000_000
DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 100_000


class StateSpaceError(RuntimeError):
    """The reachability set is unbounded or larger than the state cap."""


class VanishingLoopError(RuntimeError):
    pass


class SolverError(RuntimeError):
    pass


@dataclass
class ReachabilityGraph:
    """States and labelled edges of a GSPN's reachability graph.

    ``markings[i]`` is state ``i``; ``vanishing[i]`` tells whether it enables
    an immediate transition.  Edge ``k`` goes from ``src[k]`` to ``dst[k]``
    by firing transition index ``trans[k]`` and carries a rate (timed source
    state) or a branching probability (vanishing source state) in
    ``value[k]``.

    After :func:`eliminate_vanishing` every state is tangible, timed edges
    are folded through the removed vanishing chains, and ``removed`` keeps
    what is needed to recover immediate-transition firing rates.
    """

    net: Net
    markings: list[Marking]
    vanishing: np.ndarray
    src: np.ndarray
    trans: np.ndarray
    value: np.ndarray
    dst: np.ndarray
    initial: int = 0
    removed: "_RemovedVanishing | None" = None

    @property
    def n_states(self) -> int:
        return len(self.markings)

    @property
    def tangible(self) -> list[Marking]:
        return [m for m, v in zip(self.markings, self.vanishing) if not v]

    @property
    def vanishing_markings(self) -> list[Marking]:
        return [m for m, v in zip(self.markings, self.vanishing) if v]

    @property
    def n_edges(self) -> int:
        return len(self.src)

    def outflow(self) -> np.ndarray:
        """Total outgoing rate of every state (zero for vanishing states)."""
        rates = np.where(self.vanishing[self.src], 0.0, self.value)
        return np.bincount(self.src, weights=rates, minlength=self.n_states)

    def dump(self, path) -> None:
        """Write the edge list as ``src<TAB>transition<TAB>value<TAB>dst``."""
        names = [t.id for t in self.net.transitions]
        with open(path, "w") as fh:
            fh.write("# state\ttransition\trate_or_prob\tstate\n")
            for s, t, v, d in zip(self.src, self.trans, self.value, self.dst):
                fh.write(f"{s}\t{names[t]}\t{v:.12g}\t{d}\n")


@dataclass
class _RemovedVanishing:
    markings: list[Marking]
    into: sp.csr_matrix  # tangible -> vanishing rates
    branching: sp.csr_matrix  # vanishing -> vanishing probabilities
    src: np.ndarray  # immediate edges out of vanishing states
    trans: np.ndarray
    prob: np.ndarray


def explore(net: Net, state_cap: int = DEFAULT_STATE_CAP) -> ReachabilityGraph:
    """Breadth-first reachability exploration from the initial marking."""
    compiled = net.compiled
    start = net.initial_marking
    index = {start: 0}
    markings = [start]
    vanishing = []
    src, trans, value, dst = [], [], [], []
    queue = collections.deque([start])
    while queue:
        m = queue.popleft()
        s = index[m]
        enabled = net.enabled_indices(m)
        is_vanishing = bool(enabled) and compiled[enabled[0]].immediate
        vanishing.append(is_vanishing)
        if is_vanishing:
            total = sum(compiled[i].weight for i in enabled)
        for i in enabled:
            nxt = net.fire_index(m, i)
            j = index.get(nxt)
            if j is None:
                if len(markings) >= state_cap:
                    raise StateSpaceError(
                        f"state space unbounded or too large: more than {state_cap} markings "
                        f"(witness {net.as_dict(nxt)})"
                    )
                j = len(markings)
                index[nxt] = j
                markings.append(nxt)
                queue.append(nxt)
            src.append(s)
            trans.append(i)
            dst.append(j)
            if is_vanishing:
                value.append(compiled[i].weight / total)
            else:
                value.append(compiled[i].rate * net.enabling_degree(m, i))
    log.debug("explored %d markings, %d edges", len(markings), len(src))
    return ReachabilityGraph(
        net, markings, np.array(vanishing, dtype=bool),
        np.array(src, dtype=np.int64), np.array(trans, dtype=np.int64),
        np.array(value, dtype=float), np.array(dst, dtype=np.int64),
    )


def _check_vanishing_loops(branching: sp.csr_matrix, markings: Sequence[Marking], net: Net) -> None:
    n = branching.shape[0]
    if n == 0:
        return
    ncomp, labels = connected_components(branching, directed=True, connection="strong")
    sizes = np.bincount(labels, minlength=ncomp)
    loops = set(np.flatnonzero(sizes > 1))
    diag = branching.diagonal()
    loops |= {labels[i] for i in np.flatnonzero(diag > 0)}
    if loops:
        members = np.flatnonzero(np.isin(labels, list(loops)))[:5]
        shown = ", ".join(str(net.as_dict(markings[i])) for i in members)
        raise VanishingLoopError(f"loop of vanishing markings: {shown}")


def eliminate_vanishing(g: ReachabilityGraph) -> ReachabilityGraph:
    """Fold vanishing markings into tangible-to-tangible rates."""
    if g.removed is not None or not g.vanishing.any():
        return g
    is_v = g.vanishing
    t_states = np.flatnonzero(~is_v)
    v_states = np.flatnonzero(is_v)
    t_pos = np.full(g.n_states, -1)
    t_pos[t_states] = np.arange(len(t_states))
    v_pos = np.full(g.n_states, -1)
    v_pos[v_states] = np.arange(len(v_states))
    nT, nV = len(t_states), len(v_states)
    v_markings = [g.markings[i] for i in v_states]

    from_v = is_v[g.src]
    to_v = is_v[g.dst]

    def block(mask, rows, cols, shape):
        return sp.csr_matrix((g.value[mask], (rows[g.src[mask]], cols[g.dst[mask]])), shape=shape)

    branching = block(from_v & to_v, v_pos, v_pos, (nV, nV))
    exits = block(from_v & ~to_v, v_pos, t_pos, (nV, nT))
    _check_vanishing_loops(branching, v_markings, g.net)

    # absorption probabilities into tangible states; branching is nilpotent
    absorb = exits.copy()
    term = exits
    for _ in range(nV):
        term = (branching @ term).tocsr()
        term.eliminate_zeros()
        if term.nnz == 0:
            break
        absorb = absorb + term
    absorb = absorb.tocsr()

    direct = ~from_v & ~to_v
    src = [t_pos[g.src[direct]]]
    trans = [g.trans[direct]]
    value = [g.value[direct]]
    dst = [t_pos[g.dst[direct]]]
    detour = np.flatnonzero(~from_v & to_v)
    for k in detour:
        row = v_pos[g.dst[k]]
        lo, hi = absorb.indptr[row], absorb.indptr[row + 1]
        n = hi - lo
        src.append(np.full(n, t_pos[g.src[k]]))
        trans.append(np.full(n, g.trans[k]))
        value.append(g.value[k] * absorb.data[lo:hi])
        dst.append(absorb.indices[lo:hi])

    into = sp.csr_matrix(
        (g.value[~from_v & to_v], (t_pos[g.src[~from_v & to_v]], v_pos[g.dst[~from_v & to_v]])),
        shape=(nT, nV),
    )
    imm = from_v
    removed = _RemovedVanishing(
        v_markings, into, branching,
        v_pos[g.src[imm]], g.trans[imm], g.value[imm],
    )
    initial = g.initial
    if is_v[initial]:
        # start from any tangible successor; only affects reachability of
        # transient states, never the stationary distribution of the recurrent class
        initial = int(absorb.indices[absorb.indptr[v_pos[initial]]:absorb.indptr[v_pos[initial] + 1]][0])
    else:
        initial = int(t_pos[initial])
    return ReachabilityGraph(
        g.net, [g.markings[i] for i in t_states], np.zeros(nT, dtype=bool),
        np.concatenate(src).astype(np.int64), np.concatenate(trans).astype(np.int64),
        np.concatenate(value), np.concatenate(dst).astype(np.int64),
        initial=initial, removed=removed,
    )


@dataclass
class SteadyState:
    graph: ReachabilityGraph
    probability: np.ndarray
    residual: float = 0.0
    iterations: int = 0
    _flux_cache: dict = field(default_factory=dict, repr=False)

    @property
    def net(self) -> Net:
        return self.graph.net

    def items(self):
        return zip(self.graph.markings, self.probability)

    def tokens(self, place: str) -> np.ndarray:
        try:
            i = self.net.place_index[place]
        except KeyError:
            raise KeyError(f"unknown place {place!r}") from None
        return np.fromiter((m[i] for m in self.graph.markings), dtype=np.int64,
                           count=self.graph.n_states)

    def _vanishing_inflow(self) -> np.ndarray:
        if "inflow" not in self._flux_cache:
            rem = self.graph.removed
            seed = rem.into.T @ self.probability
            n = rem.branching.shape[0]
            if rem.branching.nnz:
                lhs = (sp.identity(n, format="csc") - rem.branching.T).tocsc()
                inflow = spla.spsolve(lhs, seed)
            else:
                inflow = seed
            self._flux_cache["inflow"] = np.asarray(inflow)
        return self._flux_cache["inflow"]

    def firing_rate(self, transition: str,
                    weight: Callable[[Marking], float] | None = None) -> float:
        """Mean firings per millisecond, optionally weighted by a function of
        the marking in which the transition fires."""
        t = self.net.transition_index[transition]
        g = self.graph
        if self.net.transitions[t].immediate:
            rem = g.removed
            if rem is None:
                return 0.0
            mask = rem.trans == t
            inflow = self._vanishing_inflow()[rem.src[mask]]
            w = rem.prob[mask]
            if weight is not None:
                w = w * np.array([weight(rem.markings[v]) for v in rem.src[mask]])
            return float(np.dot(inflow, w))
        mask = g.trans == t
        w = g.value[mask] * self.probability[g.src[mask]]
        if weight is not None:
            w = w * np.array([weight(g.markings[s]) for s in g.src[mask]])
        return float(w.sum())


def _generator(g: ReachabilityGraph) -> sp.csr_matrix:
    off = g.src != g.dst
    n = g.n_states
    rates = sp.csr_matrix((g.value[off], (g.src[off], g.dst[off])), shape=(n, n))
    out = np.asarray(rates.sum(axis=1)).ravel()
    return (rates - sp.diags(out)).tocsr()


def _recurrent_class(Q: sp.csr_matrix, g: ReachabilityGraph) -> np.ndarray:
    ncomp, labels = connected_components(Q, directed=True, connection="strong")
    if ncomp == 1:
        return np.arange(Q.shape[0])
    coo = Q.tocoo()
    leaving = labels[coo.row] != labels[coo.col]
    open_classes = set(labels[coo.row[leaving]])
    closed = [c for c in range(ncomp) if c not in open_classes]
    if len(closed) > 1:
        reps = [g.net.as_dict(g.markings[int(np.flatnonzero(labels == c)[0])]) for c in closed[:5]]
        raise SolverError(f"reducible chain with {len(closed)} recurrent classes, e.g. {reps}")
    return np.flatnonzero(labels == closed[0])


def _residual(pi: np.ndarray, Q: sp.csr_matrix) -> float:
    """max |pi Q| relative to the fastest exit rate, so the tolerance does
    not depend on the time unit."""
    if not len(pi):
        return 0.0
    scale = float(-Q.diagonal().min()) or 1.0
    return float(np.abs(Q.T @ pi).max()) / scale


@numba.njit(cache=True)
def _gauss_seidel_sweeps(indptr, indices, data, diag, x, sweeps):
    n = len(x)
    for _ in range(sweeps):
        for i in range(n):
            acc = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                if j != i:
                    acc += data[k] * x[j]
            x[i] = acc / diag[i]
        x /= x.sum()
    return x


def _solve_gauss_seidel(Q, tol, max_iter, check_every=25):
    # row i of Q^T pi = 0 solved for pi_i, in place
    QT = Q.T.tocsr()
    diag = -QT.diagonal()
    x = np.full(Q.shape[0], 1.0 / Q.shape[0])
    done = 0
    while done < max_iter:
        step = min(check_every, max_iter - done)
        x = _gauss_seidel_sweeps(QT.indptr, QT.indices, QT.data, diag, x, step)
        done += step
        if _residual(x, Q) <= tol:
            break
    return x, done


def _pinned_system(Q):
    """Fix pi_0 = 1 and drop its balance equation; keeps the matrix sparse."""
    A = Q[1:, 1:].T.tocsc()
    b = -np.asarray(Q[0, 1:].todense()).ravel()
    return A, b


def _solve_gmres(Q, tol, max_iter):
    A, b = _pinned_system(Q)
    ilu = spla.spilu(A, drop_tol=1e-4, fill_factor=10)
    M = spla.LinearOperator(A.shape, ilu.solve)
    iterations = 0

    def count(_):
        nonlocal iterations
        iterations += 1

    x, _ = spla.gmres(A, b, M=M, rtol=1e-12, atol=0.0, restart=30, maxiter=max_iter,
                      callback=count, callback_type="pr_norm")
    return np.r_[1.0, x], iterations


def _solve_power(Q, tol, max_iter):
    """Successive substitution on the uniformized chain."""
    n = Q.shape[0]
    lam = float(-Q.diagonal().min()) * 1.05 or 1.0
    P = (sp.identity(n, format="csr") + Q / lam).T.tocsr()
    pi = np.full(n, 1.0 / n)
    for k in range(1, max_iter + 1):
        nxt = P @ pi
        nxt /= nxt.sum()
        if k % 10 == 0 and _residual(nxt, Q) <= tol:
            return nxt, k
        pi = nxt
    return pi, max_iter


def solve_steady_state(g: ReachabilityGraph, tol: float = DEFAULT_TOL,
                       max_iter: int = DEFAULT_MAX_ITER, method: str = "gauss-seidel") -> SteadyState:
    """Stationary distribution of a tangible-only graph.

    ``method`` is one of ``"gauss-seidel"`` (default), ``"power"``
    (successive substitution on the uniformized chain), ``"gmres"``
    (ILU-preconditioned) or ``"direct"`` (sparse LU).  Convergence means
    ``max |pi Q| <= tol * max exit rate``; ``max_iter`` counts sweeps or
    iterations.  Transient states get probability zero.
    """
    if g.vanishing.any():
        raise SolverError("graph still contains vanishing markings; call eliminate_vanishing first")
    Q = _generator(g)
    keep = _recurrent_class(Q, g)
    Qr = Q[keep][:, keep].tocsr()
    n = Qr.shape[0]
    if n == 1:
        x, iterations = np.ones(1), 0
    elif method == "power":
        x, iterations = _solve_power(Qr, tol, max_iter)
    elif method == "direct":
        A, b = _pinned_system(Qr)
        x, iterations = np.r_[1.0, spla.spsolve(A, b)], 0
    elif method == "gauss-seidel":
        x, iterations = _solve_gauss_seidel(Qr, tol, max_iter)
    elif method == "gmres":
        x, iterations = _solve_gmres(Qr, tol, max_iter)
    else:
        raise ValueError(f"unknown method {method!r}")
    x = np.where(np.abs(x) < 1e-14, 0.0, x)
    if x.min() < -1e-9:
        raise SolverError(f"solver produced negative probabilities (min {x.min():.3g})")
    x = np.clip(x, 0.0, None)
    x /= x.sum()
    residual = _residual(x, Qr)
    if residual > tol:
        raise SolverError(f"no convergence after {max_iter} iterations: residual {residual:.3g} > {tol:g}")
    pi = np.zeros(g.n_states)
    pi[keep] = x
    return SteadyState(g, pi, residual, iterations)


def token_distribution(ss: SteadyState, place: str) -> dict[int, float]:
    counts = ss.tokens(place)
    probs = np.bincount(counts, weights=ss.probability)
    return {i: float(p) for i, p in enumerate(probs) if p > 0}


def solve_net(net: Net, state_cap: int = DEFAULT_STATE_CAP, tol: float = DEFAULT_TOL,
              max_iter: int = DEFAULT_MAX_ITER, method: str = "gauss-seidel") -> SteadyState:
    """explore -> eliminate_vanishing -> solve_steady_state."""
    g = eliminate_vanishing(explore(net, state_cap))
    return solve_steady_state(g, tol, max_iter, method)
