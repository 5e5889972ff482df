"""Cycle homology classes, walk reduction, the direction set D_{eps,T} and the circulation cone.

Exact mode (the default) keeps every ratio as a Fraction: displacements are
integers and the common edge duration T is read as an exact binary rational.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from . import _relax, _simplex
from .boxgraph import TransitionGraph
from .cohomology import CohomologyClass, as_class, rationalize

BISECT_TOL = 1e-9
EXACT_LP_EDGE_LIMIT = 400


class AcyclicGraphError(ValueError):
    """The operation needs at least one cycle."""


class WalkError(ValueError):
    """Malformed walk (not contiguous, not closed, or empty)."""


@dataclass(frozen=True)
class CycleClass:
    h: tuple[int, ...]
    edges: int
    T: float

    @property
    def length(self) -> Fraction:
        return self.edges * Fraction(self.T)

    @property
    def direction(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(v) / self.length for v in self.h)


@dataclass(frozen=True)
class MaxRatio:
    value: Fraction | float
    cycle: list[int]
    cls: CycleClass


@dataclass(frozen=True)
class DirectionCone:
    rays: list[tuple[Fraction, ...]]
    witnesses: list[list[int]]
    epsilon: float
    T: float
    probes: int = 0

    def as_array(self) -> np.ndarray:
        return np.array([[float(v) for v in r] for r in self.rays])

    def to_json(self) -> dict:
        return {"rays": [[float(v) for v in r] for r in self.rays],
                "rays_exact": [[str(v) for v in r] for r in self.rays],
                "witnesses": [list(map(int, w)) for w in self.witnesses],
                "epsilon": self.epsilon, "T": self.T}

    def support(self, u: Sequence) -> Fraction | float:
        return max(sum(Fraction(a) * b for a, b in zip(u, r)) for r in self.rays)

    def diameter(self) -> float:
        pts = self.as_array()
        if len(pts) < 2:
            return 0.0
        diff = pts[:, None, :] - pts[None, :, :]
        return float(np.sqrt((diff**2).sum(-1)).max())


# -- walks ------------------------------------------------------------------


def _check_walk(graph: TransitionGraph, walk: Sequence[int], closed: bool) -> list[int]:
    walk = [int(e) for e in walk]
    if not walk:
        raise WalkError("empty walk")
    if min(walk) < 0 or max(walk) >= graph.num_edges:
        raise WalkError("edge id out of range")
    for a, b in zip(walk, walk[1:]):
        if graph.dst[a] != graph.src[b]:
            raise WalkError(f"edges {a} and {b} are not contiguous")
    if closed and graph.dst[walk[-1]] != graph.src[walk[0]]:
        raise WalkError("walk is not closed")
    return walk


def cycle_class(graph: TransitionGraph, walk: Sequence[int]) -> CycleClass:
    walk = _check_walk(graph, walk, closed=True)
    h = graph.walk_displacement(walk)
    return CycleClass(tuple(int(v) for v in h), len(walk), graph.T)


def _erase_loops(graph: TransitionGraph, walk: list[int]) -> tuple[list[int], list[list[int]]]:
    path: list[int] = []
    pos = {int(graph.src[walk[0]]): 0}
    cycles = []
    for e in walk:
        path.append(e)
        v = int(graph.dst[e])
        if v in pos:
            k = pos[v]
            loop = path[k:]
            del path[k:]
            for x in loop[:-1]:
                pos.pop(int(graph.dst[x]), None)
            cycles.append(loop)
        else:
            pos[v] = len(path)
    return path, cycles


def eulerian_reduce(graph: TransitionGraph, walk: Sequence[int]) -> list[list[int]]:
    """Split a closed walk into simple cycles with the same total class and length."""
    walk = _check_walk(graph, walk, closed=True)
    rest, cycles = _erase_loops(graph, walk)
    assert not rest
    cycles.sort(key=lambda c: (len(c), c))
    return cycles


def open_walk_reduce(graph: TransitionGraph, walk: Sequence[int]) -> tuple[list[int], list[list[int]]]:
    """(simple path with the walk's endpoints, simple cycles) conserving class and length."""
    walk = _check_walk(graph, walk, closed=False)
    return _erase_loops(graph, walk)


def is_simple_cycle(graph: TransitionGraph, cycle: Sequence[int]) -> bool:
    nodes = [int(graph.src[e]) for e in cycle]
    return len(set(nodes)) == len(nodes) and graph.dst[cycle[-1]] == graph.src[cycle[0]]


# -- maximum ratio cycles ------------------------------------------------------


def _scaled_weights(graph: TransitionGraph, u: CohomologyClass) -> tuple[np.ndarray, int]:
    a, scale = u.integer_form()
    if max((abs(int(v)) for v in a), default=0) < 2**31:
        return graph.disp @ np.array([int(v) for v in a], dtype=np.int64), scale
    return graph.disp.astype(object) @ a, scale


def _require_cycle(graph: TransitionGraph) -> None:
    if not graph.intra.any():
        raise AcyclicGraphError("graph has no cycle")


def max_ratio_cycle(graph: TransitionGraph, u, exact: bool | None = None) -> MaxRatio:
    """max over cycles of u.h / length, with a simple witness cycle.

    Exact mode runs the Lawler/Newton iteration: starting below every ratio,
    each positive cycle of ``W - rho`` strictly raises rho to its own ratio,
    and the process stops at the first rho with no positive cycle.
    Float mode bisects to ``BISECT_TOL`` and keeps the last witness.
    """
    _require_cycle(graph)
    u = as_class(u)
    if exact is None:
        exact = u.exact
    if exact and not u.exact:
        u = CohomologyClass.of([rationalize(v) for v in u.values], exact=True)
    if exact:
        W, scale = _scaled_weights(graph, u)
        p, q = int(W.min()) - 1, 1
        cycle = None
        while True:
            found = _relax.find_positive_cycle(graph, q * W - p)
            if found is None:
                break
            cycle = found
            r = Fraction(int(sum(W[e] for e in cycle)), len(cycle))
            p, q = r.numerator, r.denominator
        cycle = _relax.rotate_cycle(cycle)
        value = Fraction(p, q) / (scale * Fraction(graph.T))
        return MaxRatio(value, cycle, cycle_class(graph, cycle))

    w = graph.disp @ u.as_float()
    lo, hi = float(w.min()), float(w.max())
    best = _relax.find_positive_cycle(graph, w - (lo - 1.0), tol=0.0)
    best_val = float(sum(w[e] for e in best)) / len(best)
    lo = max(lo, best_val)
    while hi - lo > BISECT_TOL:
        mid = 0.5 * (lo + hi)
        cyc = _relax.find_positive_cycle(graph, w - mid, tol=1e-12)
        if cyc is None:
            hi = mid
        else:
            val = float(sum(w[e] for e in cyc)) / len(cyc)
            if val > best_val:
                best, best_val = cyc, val
            lo = max(mid, val)
    best = _relax.rotate_cycle(best)
    return MaxRatio(best_val / graph.T, best, cycle_class(graph, best))


# -- direction set ---------------------------------------------------------------


def _primitive(v: Sequence[Fraction]) -> tuple[int, ...] | None:
    den = 1
    for x in v:
        den = math.lcm(den, Fraction(x).denominator)
    ints = [int(Fraction(x) * den) for x in v]
    g = 0
    for x in ints:
        g = math.gcd(g, abs(x))
    if g == 0:
        return None
    return tuple(x // g for x in ints)


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _hull2(points: list[tuple]) -> list[tuple]:
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def hull_vertices(points: list[tuple]) -> list[tuple]:
    """Vertices of conv(points); exact for d <= 2, via qhull above."""
    pts = sorted(set(points))
    if not pts:
        return []
    d = len(pts[0])
    if d == 1:
        return sorted({min(pts), max(pts)})
    if d == 2:
        return _hull2(pts)
    from scipy.spatial import ConvexHull, QhullError

    arr = np.array([[float(x) for x in p] for p in pts])
    try:
        hull = ConvexHull(arr)
        return [pts[i] for i in sorted(hull.vertices)]
    except (QhullError, ValueError):
        return pts


def _probe_normals(verts: list[tuple], d: int) -> list[tuple[int, ...]]:
    """Outward facet normals of the current hull, plus normals of its affine hull."""
    out: list[tuple[int, ...]] = []
    base = verts[0]
    diffs = [[Fraction(a) - Fraction(b) for a, b in zip(v, base)] for v in verts[1:]]
    from .cohomology import nullspace, rank

    if rank(diffs) < d:
        for nvec in nullspace(diffs, d):
            p = _primitive(nvec)
            if p:
                out += [p, tuple(-x for x in p)]
        # extend within the affine hull along its own directions
        for dv in diffs:
            p = _primitive(dv)
            if p:
                out += [p, tuple(-x for x in p)]
        return out
    if d == 1:
        return [(1,), (-1,)]
    if d == 2:
        m = len(verts)
        for i in range(m):
            a, b = verts[i], verts[(i + 1) % m]
            nvec = (b[1] - a[1], -(b[0] - a[0]))  # outward for counter-clockwise order
            p = _primitive(nvec)
            if p:
                out.append(p)
        return out
    from scipy.spatial import ConvexHull

    hull = ConvexHull(np.array([[float(x) for x in v] for v in verts]))
    for eq in hull.equations:
        p = _primitive([rationalize(x, 10**4) for x in eq[:-1]])
        if p:
            out.append(p)
    return out


def _random_probes(d: int, count: int, rng: np.random.Generator) -> list[tuple[int, ...]]:
    out = []
    for _ in range(count):
        v = rng.normal(size=d)
        v = np.rint(1000 * v / np.linalg.norm(v)).astype(int)
        p = _primitive([Fraction(int(x)) for x in v])
        if p:
            out.append(p)
    return out


def direction_cone(graph: TransitionGraph, random_probes: int = 64, seed: int = 0,
                   max_rounds: int = 64) -> DirectionCone:
    """Vertices of conv{ h(c)/len(c) : c simple cycle } by support-function probing.

    Each probe u asks for the max-ratio cycle along u; its direction joins the
    hull when it beats the current support value. Facet normals are re-probed
    until no probe improves the hull.
    """
    _require_cycle(graph)
    d = graph.dimension
    rng = np.random.default_rng(seed)
    witness: dict[tuple, list[int]] = {}
    probed: set[tuple[int, ...]] = set()
    count = 0

    def probe(u: tuple[int, ...]) -> bool:
        nonlocal count
        probed.add(u)
        count += 1
        res = max_ratio_cycle(graph, CohomologyClass.of(u, exact=True))
        direction = res.cls.direction
        current = max((sum(a * b for a, b in zip(u, p)) for p in witness), default=None)
        if current is None or res.value > current:
            witness.setdefault(direction, res.cycle)
            return True
        return False

    std = []
    for i in range(d):
        e = [0] * d
        e[i] = 1
        std += [tuple(e), tuple(-x for x in e)]
    for u in std + _random_probes(d, random_probes, rng):
        if u not in probed:
            probe(u)
    for _ in range(max_rounds):
        verts = hull_vertices(list(witness))
        improved = False
        for u in _probe_normals(verts, d):
            if u not in probed and probe(u):
                improved = True
        if not improved:
            break
    verts = hull_vertices(list(witness))
    return DirectionCone(verts, [witness[v] for v in verts], graph.epsilon, graph.T, count)


# -- circulations -----------------------------------------------------------------


@dataclass(frozen=True)
class Circulation:
    flow: dict[int, Fraction | float] = field(default_factory=dict)

    def check(self, graph: TransitionGraph, tol: float = 0.0) -> bool:
        bal: dict[int, float] = {}
        total = 0
        T = Fraction(graph.T) if all(isinstance(x, Fraction) for x in self.flow.values()) else graph.T
        for e, x in self.flow.items():
            if x < -tol:
                return False
            bal[int(graph.src[e])] = bal.get(int(graph.src[e]), 0) - x
            bal[int(graph.dst[e])] = bal.get(int(graph.dst[e]), 0) + x
            total += x * T
        return all(abs(v) <= tol for v in bal.values()) and abs(total - 1) <= tol


def _circulation_lp(graph: TransitionGraph, c: np.ndarray, edge_ids: np.ndarray):
    nodes = np.unique(np.concatenate([graph.src[edge_ids], graph.dst[edge_ids]]))
    row = {int(v): i for i, v in enumerate(nodes)}
    A = [[0] * len(edge_ids) for _ in range(len(nodes) + 1)]
    for j, e in enumerate(edge_ids):
        A[row[int(graph.src[e])]][j] -= 1
        A[row[int(graph.dst[e])]][j] += 1
        A[-1][j] = Fraction(graph.T)
    b = [0] * len(nodes) + [1]
    return A, b


def sullivan_cone_support(graph: TransitionGraph, u, exact: bool | None = None,
                          return_circulation: bool = False):
    """max over normalised circulations f of u . sum_e f_e h_e.

    Circulations are supported on cycles, so only intra-component edges enter
    the LP. Small LPs are solved exactly; larger ones by HiGHS, whose dual
    (potentials and rate) is then re-checked in rationals and reported as an
    upper bound.
    """
    _require_cycle(graph)
    u = as_class(u)
    edge_ids = np.flatnonzero(graph.intra)
    if exact is None:
        exact = u.exact and len(edge_ids) <= EXACT_LP_EDGE_LIMIT
    if exact:
        if not u.exact:
            u = CohomologyClass.of([rationalize(v) for v in u.values], exact=True)
        c = [sum((Fraction(a) * int(x) for a, x in zip(u.values, graph.disp[e])), Fraction(0))
             for e in edge_ids]
        A, b = _circulation_lp(graph, np.asarray(c), edge_ids)
        value, x = _simplex.solve(c, A, b)
        circ = Circulation({int(e): xv for e, xv in zip(edge_ids, x) if xv})
        return (value, circ) if return_circulation else value

    c = graph.disp[edge_ids] @ u.as_float()
    A, b = _circulation_lp(graph, c, edge_ids)
    A = np.array(A, dtype=float)
    res = linprog(-c, A_eq=A, b_eq=np.array(b, dtype=float), bounds=(0, None), method="highs")
    if res.status != 0:
        raise AcyclicGraphError(f"circulation LP failed: {res.message}")
    value = float(-res.fun)
    if return_circulation:
        circ = Circulation({int(e): float(xv) for e, xv in zip(edge_ids, res.x) if xv > 1e-15})
        return value, circ
    return value


def certified_upper_bound(graph: TransitionGraph, u, value: float) -> Fraction:
    """Exact upper bound on the circulation support near a floating optimum.

    Rationalises a candidate rate and shifts it by the largest positive cycle
    excess found by exact relaxation, so the returned rate admits no positive
    cycle of ``u.h - rate*T``.
    """
    uu = as_class(u)
    if not uu.exact:
        uu = CohomologyClass.of([rationalize(v) for v in uu.values], exact=True)
    W, scale = _scaled_weights(graph, uu)
    rate = rationalize(value * scale * graph.T, 10**9)
    while True:
        p, q = rate.numerator, rate.denominator
        cyc = _relax.find_positive_cycle(graph, q * W - p)
        if cyc is None:
            return rate / (scale * Fraction(graph.T))
        rate = Fraction(int(sum(W[e] for e in cyc)), len(cyc))


# -- appendix check ----------------------------------------------------------------


def hull_distance(cone: DirectionCone, point: Sequence[float]) -> float:
    """Sup-norm distance from a point to conv(rays)."""
    R = cone.as_array()
    x = np.asarray(point, dtype=float)
    k, d = R.shape
    # variables: lambda (k), s ; minimise s
    cvec = np.zeros(k + 1)
    cvec[-1] = 1.0
    A_ub, b_ub = [], []
    for i in range(d):
        row = np.zeros(k + 1)
        row[:k] = R[:, i]
        row[-1] = -1.0
        A_ub.append(row.copy())
        b_ub.append(x[i])
        row[:k] = -R[:, i]
        A_ub.append(row)
        b_ub.append(-x[i])
    A_eq = np.zeros((1, k + 1))
    A_eq[0, :k] = 1.0
    res = linprog(cvec, A_ub=np.array(A_ub), b_ub=np.array(b_ub), A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, None)] * (k + 1), method="highs")
    return float(res.fun)


def fried_direction(fld, graph: TransitionGraph, start: Sequence[float], length: float) -> dict:
    """Direction of a long orbit closed by a short curve.

    Prefers the last return of the orbit to the start box after half the
    length; otherwise closes with the lattice vector nearest to the end point.
    """
    from .flowsys import trajectory

    step = graph.step or graph.T / 64.0
    traj = trajectory(fld, start, length, step)
    times = np.linspace(0.0, length, len(traj))
    start_box = graph.grid.locate(start) if graph.grid else None
    closed_in_box = False
    stop = len(traj) - 1
    if graph.grid is not None:
        half = len(traj) // 2
        boxes = [graph.grid.locate(p) for p in traj[half:]]
        hits = [i for i, b in enumerate(boxes) if b == start_box]
        if hits:
            stop = half + hits[-1]
            closed_in_box = True
    h = np.rint(traj[stop] - traj[0]).astype(int)
    T_len = times[stop] if times[stop] > 0 else length
    return {"class": h.tolist(), "length": float(T_len), "direction": (h / T_len).tolist(),
            "closed_in_box": closed_in_box}


def cone_equivalence_check(graph: TransitionGraph, trials: int = 32, seed: int = 0, fld=None,
                           orbits: int = 8, orbit_length: float = 100.0, cone: DirectionCone | None = None,
                           tol: float = 1e-6) -> dict:
    """Compare circulation-LP support and max cycle ratio on random rational directions.

    With ``fld`` given, long orbits are also sampled and their closed-up
    directions tested against the hull inflated by 2 eps.
    """
    rng = np.random.default_rng(seed)
    probes = _random_probes(graph.dimension, trials, rng)
    violations = []
    max_gap = 0.0
    for u in probes:
        uc = CohomologyClass.of(u, exact=True)
        lp = sullivan_cone_support(graph, uc)
        cyc = max_ratio_cycle(graph, uc).value
        gap = abs(float(Fraction(lp) - cyc)) if isinstance(lp, Fraction) else abs(lp - float(cyc))
        max_gap = max(max_gap, gap)
        if gap > tol:
            violations.append({"u": list(u), "lp": float(lp), "cycle": float(cyc), "gap": gap})
    report = {"trials": len(probes), "violations": violations, "max_gap": max_gap}
    if fld is not None:
        cone = direction_cone(graph, seed=seed) if cone is None else cone
        slack = 2 * graph.epsilon
        samples = []
        for _ in range(orbits):
            x0 = rng.random(graph.dimension)
            fr = fried_direction(fld, graph, x0, orbit_length)
            fr["distance"] = hull_distance(cone, fr["direction"])
            fr["inside"] = fr["distance"] <= slack
            samples.append(fr)
        report["fried"] = samples
        report["fried_slack"] = slack
        report["fried_outside"] = sum(not s["inside"] for s in samples)
    return report
