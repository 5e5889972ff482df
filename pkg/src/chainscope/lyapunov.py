"""Equivariant Lyapunov potentials: construction, prescribed extension and classification.

A potential is a node function f with ``f(u) >= f(v) + alpha.h_e`` on every edge
u -> v; its lift ``F(node, l) = f(node) + alpha.l`` is then non-increasing along
lifted edges. It is strong when every edge off the tight recurrent chains is
strict and distinct chains take values that differ modulo alpha(Z^d).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from . import _relax
from .boxgraph import TransitionGraph
from .cohomology import CohomologyClass, as_class
from .quasilyap import (AlphaRecSet, alpha_recurrent, edge_weights, float_tolerance,
                        is_quasi_lyapunov, rational_approx)
from .recurrence import PreconditionError, chain_decompose

THETA = Fraction(1, 3)
PRE, STRONG, INVALID = "pre", "strong", "invalid"


class NotQuasiLyapunovError(PreconditionError):
    def __init__(self, alpha, cycle):
        super().__init__(f"class {alpha} is not quasi-Lyapunov; positive cycle {cycle}")
        self.cycle = cycle


class InfeasiblePrescription(PreconditionError):
    def __init__(self, message: str, path: list[int]):
        super().__init__(f"{message}; witness path {path}")
        self.path = path


@dataclass(frozen=True)
class PrescribedValues:
    """Chain index (position in ``AlphaRecSet.chains``) -> value at the chain's smallest node."""

    assignment: Mapping[int, Fraction | int | float]


@dataclass(frozen=True, eq=False)
class EquivariantPotential:
    alpha: CohomologyClass
    values: list
    kind: str
    chains: list[list[int]] = field(default_factory=list)

    @property
    def chain_values(self) -> list:
        return [self.values[c[0]] for c in self.chains]

    def lift(self, node: int, ell: Sequence[int]):
        return self.values[node] + self.alpha.pair(ell)

    def to_json(self) -> dict:
        fmt = str if self.alpha.exact else float
        return {"alpha": self.alpha.to_json(), "kind": self.kind,
                "values": {str(i): fmt(v) for i, v in enumerate(self.values)},
                "chain_values": {str(i): fmt(v) for i, v in enumerate(self.chain_values)}}


@dataclass(frozen=True)
class PotentialCheck:
    kind: str
    witnesses: dict
    min_gap: Fraction | float | None = None


# -- shared helpers -------------------------------------------------------------------


def _exact_weights(graph: TransitionGraph, alpha: CohomologyClass) -> np.ndarray:
    wt = edge_weights(graph, alpha)
    if alpha.exact:
        return np.array([Fraction(int(x), wt.scale) for x in wt.w], dtype=object)
    return wt.w.astype(float)


def _tolerance(alpha: CohomologyClass, graph: TransitionGraph):
    return 0 if alpha.exact else 10 * float_tolerance(alpha) * (graph.num_nodes + 1)


def _lattice_gap(alpha: CohomologyClass, x):
    """Distance from x to the value group alpha(Z^d) (small lattice vectors in float mode)."""
    if alpha.exact:
        a, scale = alpha.integer_form()
        g = 0
        for v in a:
            g = math.gcd(g, abs(int(v)))
        if g == 0:
            return abs(x)
        step = Fraction(g, scale)
        r = Fraction(x) % step
        return min(r, step - r)
    vals = alpha.as_float()
    grids = np.stack(np.meshgrid(*[np.arange(-3, 4)] * len(vals), indexing="ij"), -1).reshape(-1, len(vals))
    return float(np.abs(float(x) - grids @ vals).min())


def chain_gap(alpha: CohomologyClass, values: Sequence) -> tuple:
    """(min gap, colliding pair or None) over chain values, modulo alpha(Z^d)."""
    best, pair = None, None
    for i in range(len(values)):
        for j in range(i + 1, len(values)):
            gap = _lattice_gap(alpha, values[i] - values[j])
            if best is None or gap < best:
                best, pair = gap, (i, j)
    return best, pair


def _chain_order(graph: TransitionGraph, rec: AlphaRecSet) -> list[int]:
    """Chain indices in a linear extension of the Conley order (upstream first)."""
    dec = chain_decompose(graph)
    return sorted(range(len(rec.chains)), key=lambda k: (int(dec.scc_id[rec.chains[k][0]]), rec.chains[k][0]))


def _separate(graph: TransitionGraph, alpha: CohomologyClass, f: np.ndarray, w: np.ndarray,
              rec: AlphaRecSet) -> np.ndarray:
    """Make every edge off the chains strict, then split chain values by geometric offsets."""
    exact = alpha.exact
    tol = _tolerance(alpha, graph)
    src, dst = graph.src, graph.dst
    on_chain = np.zeros(graph.num_edges, dtype=bool)
    on_chain[list(rec.edges)] = True
    slack = f[src] - f[dst] - w
    tight = (slack == 0) if exact else (slack <= tol)

    # strict descent across the condensation of the tight subgraph
    tg = TransitionGraph(graph.num_nodes, src[tight], dst[tight], graph.disp[tight], graph.T)
    level = tg.scc_levels[tg.scc]
    loose = slack[~tight]
    m0 = min(loose) if loose.size else None
    top = int(level.max(initial=0))
    if top > 0:
        delta = (m0 / (2 * (top + 1)) if m0 is not None else Fraction(1)) if exact else \
            (float(m0) / (2 * (top + 1)) if m0 is not None else 1.0)
        f = f + delta * (level.astype(object) if exact else level.astype(float))

    slack = f[src] - f[dst] - w
    off = slack[~on_chain]
    m1 = min(off) if off.size else (Fraction(1) if exact else 1.0)
    order = _chain_order(graph, rec)
    if len(order) < 2:
        return f
    for attempt in range(64):
        a0 = m1 / (2 * (attempt + 2))
        g = f.copy()
        offset = a0
        for k in order:
            g[rec.chains[k]] = g[rec.chains[k]] + offset
            offset = offset * (THETA if exact else float(THETA))
        gap, _ = chain_gap(alpha, [g[c[0]] for c in rec.chains])
        if gap > (0 if exact else tol):
            return g
    raise RuntimeError("could not separate chain values")


# -- operations -----------------------------------------------------------------------


def lyapunov_potential(graph: TransitionGraph, alpha) -> EquivariantPotential:
    """Strong alpha-equivariant potential for a quasi-Lyapunov class."""
    alpha = as_class(alpha)
    cert = is_quasi_lyapunov(graph, alpha)
    if not cert.is_ql:
        raise NotQuasiLyapunovError(alpha, cert.cycle)
    rec = alpha_recurrent(graph, alpha, cert)
    w = _exact_weights(graph, alpha)
    f = np.array(cert.values(), dtype=object if alpha.exact else float)
    f = _separate(graph, alpha, f, w, rec)
    return EquivariantPotential(alpha, list(f), STRONG, rec.chains)


def verify_potential(graph: TransitionGraph, alpha, candidate) -> PotentialCheck:
    """Strongest class satisfied by ``candidate`` with a witness for each failed property."""
    alpha = as_class(alpha)
    if isinstance(candidate, Mapping):
        vals = [candidate[i] for i in range(graph.num_nodes)]
    else:
        vals = list(candidate)
    if len(vals) != graph.num_nodes:
        return PotentialCheck(INVALID, {"size": f"expected {graph.num_nodes} values, got {len(vals)}"})
    exact = alpha.exact and all(isinstance(v, (int, Fraction)) for v in vals)
    if not exact:
        alpha = CohomologyClass.of(alpha.as_float(), exact=False) if alpha.exact else alpha
        vals = [float(v) for v in vals]
    f = np.array(vals, dtype=object if exact else float)
    w = _exact_weights(graph, alpha)
    tol = _tolerance(alpha, graph)
    slack = f[graph.src] - f[graph.dst] - w
    bad = np.flatnonzero(slack < -tol) if not exact else [e for e, s in enumerate(slack) if s < 0]
    if len(bad):
        e = int(bad[0])
        return PotentialCheck(INVALID, {"violated_edge": e, "edge": graph.edge(e), "slack": slack[e]})
    try:
        rec = alpha_recurrent(graph, alpha)
    except PreconditionError as err:
        return PotentialCheck(INVALID, {"not_ql": str(err)})
    witnesses: dict = {}
    on_chain = np.zeros(graph.num_edges, dtype=bool)
    on_chain[list(rec.edges)] = True
    for e in np.flatnonzero(on_chain):
        if (slack[e] != 0) if exact else (abs(slack[e]) > tol):
            witnesses["non_constant_chain_edge"] = int(e)
            break
    strict_tol = 0 if exact else tol
    for e in np.flatnonzero(~on_chain):
        if slack[e] <= strict_tol:
            witnesses["non_strict_edge"] = int(e)
            break
    gap, pair = chain_gap(alpha, [f[c[0]] for c in rec.chains])
    if pair is not None and gap <= strict_tol:
        witnesses["chain_collision"] = pair
    return PotentialCheck(STRONG if not witnesses else PRE, witnesses, gap)


def _equality_path(graph, f, w, fixed, start, tol) -> list[int]:
    """Breadth-first path of equality edges from ``start`` to a fixed node."""
    if fixed[start]:
        return []
    parent = {start: None}
    queue = deque([start])
    adj = graph.out_adjacency
    while queue:
        u = queue.popleft()
        for e in adj[u]:
            v = int(graph.dst[e])
            if v in parent:
                continue
            diff = f[u] - f[v] - w[e]
            if (diff == 0) if tol == 0 else (abs(diff) <= tol):
                parent[v] = (u, e)
                if fixed[v]:
                    path = []
                    while parent[v] is not None:
                        v, e2 = parent[v]
                        path.append(e2)
                    return path[::-1]
                queue.append(v)
    return []


def prescribed_pre_lyapunov(graph: TransitionGraph, alpha, prescription: PrescribedValues) -> EquivariantPotential:
    """Extend prescribed chain values to an edgewise-valid potential.

    Chain nodes follow their representative through tight equalities; other
    nodes take the longest-walk value toward the prescribed ones, with a low
    floor for walks that never reach them. A violation at a prescribed node
    is reported with the edge path that forces it.
    """
    alpha = as_class(alpha)
    cert = is_quasi_lyapunov(graph, alpha)
    if not cert.is_ql:
        raise NotQuasiLyapunovError(alpha, cert.cycle)
    rec = alpha_recurrent(graph, alpha, cert)
    exact = alpha.exact
    for k in prescription.assignment:
        if not 0 <= k < len(rec.chains):
            raise PreconditionError(f"unknown chain index {k}")
    base = cert.values()
    fixed_val: dict[int, Fraction | float] = {}
    for k, val in prescription.assignment.items():
        chain = rec.chains[k]
        val = Fraction(val) if exact else float(val)
        for v in chain:
            fixed_val[v] = val + base[v] - base[chain[0]]
    w = _exact_weights(graph, alpha)
    n, m = graph.num_nodes, graph.num_edges
    fixed = np.zeros(n, dtype=bool)
    fixed[list(fixed_val)] = True

    # common integer unit for weights and prescribed values (exact mode)
    if exact:
        den = 1
        for x in list(w) + list(fixed_val.values()):
            den = math.lcm(den, Fraction(x).denominator)
        to_unit = lambda x: int(Fraction(x) * den)  # noqa: E731
    else:
        den = 1
        to_unit = float
    W = [to_unit(x) for x in w]
    P = {v: to_unit(x) for v, x in fixed_val.items()}
    wmax = max((abs(x) for x in W), default=0)
    low = min(P.values(), default=0) - (n + 1) * wmax - 1
    shift = -low  # keeps every walk value nonnegative for the clamped relaxation

    keep = ~fixed[graph.src]
    free_nodes = np.flatnonzero(~fixed)
    fixed_nodes = np.flatnonzero(fixed)
    sink = n
    src = np.concatenate([graph.src[keep], free_nodes, fixed_nodes])
    dst = np.concatenate([graph.dst[keep], np.full(len(free_nodes) + len(fixed_nodes), sink)])
    weights = [W[e] for e in np.flatnonzero(keep)] + [low + shift] * len(free_nodes) \
        + [P[int(v)] + shift for v in fixed_nodes]
    aux = TransitionGraph(n + 1, src.astype(np.int64), dst.astype(np.int64),
                          np.zeros((len(src), 1), dtype=np.int64), graph.T)
    if exact:
        warr = np.array(weights, dtype=object)
        if max((abs(x) for x in weights), default=0) * (n + 2) < 2**62:
            warr = warr.astype(np.int64)
    else:
        warr = np.array(weights, dtype=float)
    tol = 0 if exact else float_tolerance(alpha)
    g, cyc = _relax.relax(aux, warr, tol)
    if cyc is not None:  # cannot happen for a QL class; guard anyway
        raise NotQuasiLyapunovError(alpha, cyc)
    vals = [g[v] - shift for v in range(n)]

    check_tol = 0 if exact else _tolerance(alpha, graph)
    for e in range(m):
        u, v = int(graph.src[e]), int(graph.dst[e])
        if fixed[u] and vals[u] < vals[v] + W[e] - check_tol:
            tail = _equality_path(graph, vals, W, fixed, v, check_tol)
            raise InfeasiblePrescription(f"prescribed value at node {u} is too small", [e] + tail)
    out = [Fraction(x, den) if exact else float(x) for x in vals]
    return EquivariantPotential(alpha, out, PRE, rec.chains)


def real_alpha_potential(graph: TransitionGraph, alpha, tol: float = 1e-6) -> EquivariantPotential:
    """Strong potential for a floating class from strong potentials of rational neighbours."""
    alpha = as_class(alpha)
    if alpha.exact:
        return lyapunov_potential(graph, alpha)
    cert = is_quasi_lyapunov(graph, alpha)
    if not cert.is_ql:
        raise NotQuasiLyapunovError(alpha, cert.cycle)
    approx = rational_approx(graph, alpha, tol=tol)
    f = np.zeros(graph.num_nodes)
    for lam, beta in zip(approx.lambdas, approx.betas):
        f += lam * np.array([float(v) for v in lyapunov_potential(graph, beta).values])
    rec = alpha_recurrent(graph, alpha, cert)
    check = verify_potential(graph, alpha, f)
    if check.kind != STRONG:
        f = _separate(graph, alpha, f, _exact_weights(graph, alpha), rec)
    return EquivariantPotential(alpha, [float(v) for v in f], STRONG, rec.chains)
