"""Quasi-Lyapunov tests with replayable certificates, alpha-recurrent sets and open faces.

Rational classes are scaled to integer weights ``disp @ a`` (alpha = a / L), so
every verdict-bearing comparison is exact; potentials are stored in units of
1/L. Floating classes use the tolerance 1e-9 * (1 + |alpha|).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import _relax
from .boxgraph import TransitionGraph
from .cohomology import CohomologyClass, as_class, nullspace, rationalize
from .homcone import AcyclicGraphError, DirectionCone, direction_cone, max_ratio_cycle
from .recurrence import PreconditionError

QL, NOT_QL = "QL", "NotQL"


def float_tolerance(alpha: CohomologyClass) -> float:
    return 1e-9 * (1.0 + alpha.norm())


@dataclass(frozen=True)
class Weights:
    """Edge weights alpha . h_e, as integers times 1/scale in exact mode."""

    w: np.ndarray
    scale: int
    tol: float
    exact: bool

    def value(self, x):
        return Fraction(int(x), self.scale) if self.exact else float(x)


def edge_weights(graph: TransitionGraph, alpha) -> Weights:
    alpha = as_class(alpha)
    if alpha.dimension != graph.dimension:
        raise ValueError(f"class has dimension {alpha.dimension}, graph has {graph.dimension}")
    if alpha.exact:
        a, scale = alpha.integer_form()
        if max((abs(int(v)) for v in a), default=0) < 2**31:
            w = graph.disp @ np.array([int(v) for v in a], dtype=np.int64)
        else:
            w = graph.disp.astype(object) @ a
        return Weights(_relax.weights_dtype(w, graph), scale, 0, True)
    return Weights(graph.disp @ alpha.as_float(), 1, float_tolerance(alpha), False)


@dataclass(frozen=True, eq=False)
class QLCertificate:
    verdict: str
    alpha: CohomologyClass
    epsilon: float
    potential: np.ndarray | None = None  # raw units (1/scale in exact mode)
    cycle: list[int] | None = None
    scale: int = 1

    @property
    def is_ql(self) -> bool:
        return self.verdict == QL

    def values(self) -> list:
        """Potential as Fractions (exact) or floats."""
        if self.potential is None:
            return []
        if self.alpha.exact:
            return [Fraction(int(v), self.scale) for v in self.potential]
        return [float(v) for v in self.potential]

    def cycle_value(self, graph: TransitionGraph):
        return sum((self.alpha.pair(graph.disp[e]) for e in self.cycle),
                   Fraction(0) if self.alpha.exact else 0.0)

    def validate(self, graph: TransitionGraph) -> bool:
        """Replay the certificate from scratch (exact in rational mode)."""
        if (self.potential is None) == (self.cycle is None):
            return False
        if self.is_ql:
            f = self.values()
            tol = 0 if self.alpha.exact else 10 * float_tolerance(self.alpha) * (graph.num_nodes + 1)
            for s, t, h in zip(graph.src.tolist(), graph.dst.tolist(), graph.disp.tolist()):
                if f[s] < f[t] + self.alpha.pair(h) - tol:
                    return False
            return True
        cyc = self.cycle
        if not cyc:
            return False
        for a, b in zip(cyc, cyc[1:] + cyc[:1]):
            if graph.dst[a] != graph.src[b]:
                return False
        tol = 0 if self.alpha.exact else float_tolerance(self.alpha)
        return self.cycle_value(graph) > tol

    def to_json(self) -> dict:
        doc = {"verdict": self.verdict, "alpha": self.alpha.to_json(), "epsilon": self.epsilon}
        if self.is_ql:
            doc["potential"] = {str(i): (str(v) if self.alpha.exact else v) for i, v in enumerate(self.values())}
        else:
            doc["cycle"] = list(map(int, self.cycle))
        return doc


def is_quasi_lyapunov(graph: TransitionGraph, alpha) -> QLCertificate:
    alpha = as_class(alpha)
    wt = edge_weights(graph, alpha)
    f, cyc = _relax.relax(graph, wt.w, wt.tol)
    if cyc is not None:
        return QLCertificate(NOT_QL, alpha, graph.epsilon, cycle=_relax.rotate_cycle(cyc), scale=wt.scale)
    return QLCertificate(QL, alpha, graph.epsilon, potential=f, scale=wt.scale)


# -- alpha-recurrent set ----------------------------------------------------------


@dataclass(frozen=True)
class AlphaRecSet:
    nodes: frozenset
    chains: list[list[int]]
    edges: frozenset  # tight edges lying on tight cycles

    def __len__(self) -> int:
        return len(self.nodes)

    def is_empty(self) -> bool:
        return not self.nodes


def _tight_mask(graph: TransitionGraph, cert: QLCertificate, wt: Weights) -> np.ndarray:
    f = cert.potential
    slack = f[graph.src] - f[graph.dst] - wt.w
    if wt.exact:
        return slack == 0
    return np.abs(slack) <= 10 * wt.tol


def _cyclic_part(graph: TransitionGraph, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(node labels, edge mask) of the strong components of ``mask`` that contain a cycle."""
    ids = np.flatnonzero(mask)
    adj = csr_matrix((np.ones(len(ids)), (graph.src[ids], graph.dst[ids])),
                     shape=(graph.num_nodes, graph.num_nodes))
    _, labels = connected_components(adj, directed=True, connection="strong")
    inside = labels[graph.src[ids]] == labels[graph.dst[ids]]
    cyc_edges = ids[inside]
    on = np.zeros(graph.num_nodes, dtype=bool)
    on[graph.src[cyc_edges]] = True
    emask = np.zeros(graph.num_edges, dtype=bool)
    emask[cyc_edges] = True
    labels = np.where(on, labels, -1)
    return labels, emask


def alpha_recurrent(graph: TransitionGraph, alpha, certificate: QLCertificate | None = None) -> AlphaRecSet:
    """Nodes on alpha-zero cycles: the cyclic part of the tight subgraph of any feasible potential."""
    alpha = as_class(alpha)
    cert = is_quasi_lyapunov(graph, alpha) if certificate is None else certificate
    if not cert.is_ql:
        raise PreconditionError(f"class {alpha} is not quasi-Lyapunov; cycle {cert.cycle}")
    wt = edge_weights(graph, alpha)
    labels, emask = _cyclic_part(graph, _tight_mask(graph, cert, wt))
    groups: dict[int, list[int]] = {}
    for v in np.flatnonzero(labels >= 0).tolist():
        groups.setdefault(int(labels[v]), []).append(v)
    chains = sorted(groups.values())
    nodes = frozenset(v for c in chains for v in c)
    return AlphaRecSet(nodes, chains, frozenset(np.flatnonzero(emask).tolist()))


def rec_empty_iff_strict(graph: TransitionGraph, alpha) -> tuple[bool, bool]:
    """(max cycle ratio < 0, alpha QL with empty Rec), computed independently."""
    alpha = as_class(alpha)
    try:
        strict = max_ratio_cycle(graph, alpha).value < 0
    except AcyclicGraphError:
        strict = True
    cert = is_quasi_lyapunov(graph, alpha)
    empty = cert.is_ql and alpha_recurrent(graph, alpha, cert).is_empty()
    return strict, empty


# -- cone geometry helpers -----------------------------------------------------------


def _ray_values(cone: DirectionCone, alpha: CohomologyClass) -> list:
    return [sum((v * r_i for v, r_i in zip(alpha.values, r)), Fraction(0) if alpha.exact else 0.0)
            for r in cone.rays]


def tight_rays(cone: DirectionCone, alpha) -> frozenset:
    alpha = as_class(alpha)
    vals = _ray_values(cone, alpha)
    if alpha.exact:
        return frozenset(i for i, v in enumerate(vals) if v == 0)
    tol = float_tolerance(alpha)
    return frozenset(i for i, v in enumerate(vals) if abs(v) <= tol)


def _combine(alpha: CohomologyClass, beta: CohomologyClass, t) -> CohomologyClass:
    """alpha + t (alpha - beta)."""
    return CohomologyClass.of([a + t * (a - b) for a, b in zip(alpha.values, beta.values)],
                              exact=alpha.exact and beta.exact and isinstance(t, (int, Fraction)))


def _exactify(alpha: CohomologyClass) -> CohomologyClass:
    if alpha.exact:
        return alpha
    return CohomologyClass.of([rationalize(v) for v in alpha.values], exact=True)


def rec_monotone_checks(graph: TransitionGraph, alpha, beta, cone: DirectionCone | None = None) -> dict:
    """Check Rec(a+b) within Rec(a) and Rec(b), and the inclusion criterion along a + t(a - b).

    Along the ray t >= 0 the value of a cone vertex r is linear in t, so the QL
    set is an interval [0, t_max] with t_max the first breakpoint where some
    ray value turns positive. The existential over t is decided there and
    certified by exact QL tests on both sides of the breakpoint. Inclusions of
    recurrent sets are compared on tight cycle edges (nodes are reported too).
    """
    alpha, beta = _exactify(as_class(alpha)), _exactify(as_class(beta))
    ca, cb = is_quasi_lyapunov(graph, alpha), is_quasi_lyapunov(graph, beta)
    if not (ca.is_ql and cb.is_ql):
        raise PreconditionError("both classes must be quasi-Lyapunov")
    ra, rb = alpha_recurrent(graph, alpha, ca), alpha_recurrent(graph, beta, cb)
    rs = alpha_recurrent(graph, alpha + beta)
    report = {
        "sum_subset": rs.edges <= (ra.edges & rb.edges) and rs.nodes <= (ra.nodes & rb.nodes),
        "rec_alpha_in_beta": ra.edges <= rb.edges,
        "rec_alpha_in_beta_nodes": ra.nodes <= rb.nodes,
        "strict_nodes": rs.nodes < (ra.nodes & rb.nodes),
    }
    breakpoints: list[Fraction] = []
    t_max: Fraction | None = None
    has_cycles = bool(graph.intra.any())
    if has_cycles:
        cone = direction_cone(graph) if cone is None else cone
        va, vb = _ray_values(cone, alpha), _ray_values(cone, beta)
        blocked = False
        for a_r, b_r in zip(va, vb):
            slope = a_r - b_r
            if slope > 0:
                if a_r == 0:
                    blocked = True
                else:
                    breakpoints.append(-a_r / slope)
        breakpoints.sort()
        t_max = Fraction(0) if blocked else (breakpoints[0] if breakpoints else None)
    probe_t = Fraction(1) if t_max is None else t_max / 2
    exists = t_max is None or t_max > 0
    certified_in = is_quasi_lyapunov(graph, _combine(alpha, beta, probe_t)).is_ql if probe_t > 0 else False
    certified_out = True
    if t_max is not None:
        beyond = t_max + 1 if t_max == 0 else t_max * Fraction(3, 2)
        certified_out = not is_quasi_lyapunov(graph, _combine(alpha, beta, beyond)).is_ql
    report.update({
        "breakpoints": [str(b) for b in breakpoints],
        "t_max": None if t_max is None else str(t_max),
        "t_exists": exists,
        "certified": (certified_in == exists) and certified_out,
        "biconditional": exists == report["rec_alpha_in_beta"],
    })
    return report


# -- faces --------------------------------------------------------------------------


@dataclass(frozen=True)
class FaceDescriptor:
    tight_rays: frozenset
    span: list[list[Fraction]]
    sample: CohomologyClass = field(compare=False)

    def contains_closure_of(self, other: "FaceDescriptor") -> bool:
        """True when ``self`` lies in the closure of ``other``."""
        return other.tight_rays <= self.tight_rays

    def to_json(self) -> dict:
        return {"tight_rays": sorted(self.tight_rays),
                "span": [[str(v) for v in b] for b in self.span],
                "sample": self.sample.to_json()}


def open_face(graph: TransitionGraph, alpha, cone: DirectionCone | None = None) -> FaceDescriptor:
    alpha = as_class(alpha)
    cert = is_quasi_lyapunov(graph, alpha)
    if not cert.is_ql:
        raise PreconditionError(f"class {alpha} is not quasi-Lyapunov")
    if not graph.intra.any():
        return FaceDescriptor(frozenset(), nullspace([], graph.dimension), alpha)
    cone = direction_cone(graph) if cone is None else cone
    Z = tight_rays(cone, alpha)
    span = nullspace([list(cone.rays[i]) for i in sorted(Z)], graph.dimension)
    return FaceDescriptor(Z, span, alpha)


def second_sample(face: FaceDescriptor, cone: DirectionCone, seed: int = 0) -> CohomologyClass:
    """Another interior point of the face: move within its span, staying strict off the tight rays."""
    alpha = _exactify(face.sample)
    if not face.span:
        return alpha
    rng = np.random.default_rng(seed)
    coef = [Fraction(int(c)) for c in rng.integers(1, 4, size=len(face.span))]
    delta = [sum((c * b[i] for c, b in zip(coef, face.span)), Fraction(0)) for i in range(len(alpha.values))]
    t = Fraction(1)
    for i, r in enumerate(cone.rays):
        if i in face.tight_rays:
            continue
        a_r = sum((a * x for a, x in zip(alpha.values, r)), Fraction(0))
        d_r = sum((a * x for a, x in zip(delta, r)), Fraction(0))
        if d_r > 0:
            t = min(t, -a_r / (2 * d_r))
    return CohomologyClass.of([a + t * d for a, d in zip(alpha.values, delta)], exact=True)


def face_rec_map(graph: TransitionGraph, faces: Sequence[FaceDescriptor], cone: DirectionCone | None = None) -> dict:
    """Rec set per face with the consistency checks of the face/Rec correspondence.

    Returns ``{"rec": [node lists], "problems": [...], "relations": [...]}``;
    an empty problem list means sample independence, the order reversal
    between closure inclusion and Rec inclusion, and at most one empty Rec.
    """
    problems: list[str] = []
    recs = []
    if graph.intra.any():
        cone = direction_cone(graph) if cone is None else cone
    for k, face in enumerate(faces):
        cert = is_quasi_lyapunov(graph, face.sample)
        if not cert.is_ql:
            raise PreconditionError(f"face {k} sample is not quasi-Lyapunov")
        rec = alpha_recurrent(graph, face.sample, cert)
        recs.append(rec)
        if cone is not None:
            other = second_sample(face, cone, seed=k)
            if tight_rays(cone, other) != face.tight_rays:
                problems.append(f"face {k}: second sample left the face")
            elif alpha_recurrent(graph, other).edges != rec.edges:
                problems.append(f"face {k}: Rec depends on the sample")
    relations = []
    for i, fi in enumerate(faces):
        for j, fj in enumerate(faces):
            if i == j:
                continue
            closure = fi.contains_closure_of(fj)
            rec_inc = recs[j].edges <= recs[i].edges
            relations.append({"f1": i, "f2": j, "closure": closure, "rec_reversed": rec_inc})
            if closure != rec_inc:
                problems.append(f"faces {i},{j}: closure {closure} but Rec inclusion {rec_inc}")
    distinct_empty = {fa.tight_rays for fa, r in zip(faces, recs) if r.is_empty()}
    if len(distinct_empty) > 1:
        problems.append("more than one face with empty Rec")
    return {"rec": [sorted(r.nodes) for r in recs], "problems": problems, "relations": relations}


# -- rational approximation ---------------------------------------------------------


@dataclass(frozen=True)
class RationalApprox:
    betas: list[CohomologyClass]
    lambdas: list[float]
    target: CohomologyClass

    @property
    def reconstruction(self) -> np.ndarray:
        return sum(lam * b.as_float() for lam, b in zip(self.lambdas, self.betas))

    def error(self) -> float:
        return float(np.abs(self.reconstruction - self.target.as_float()).max())


def _simplex_offsets(c: np.ndarray) -> np.ndarray:
    """k vectors summing to zero, spanning the complement of c in R^k."""
    k = len(c)
    if k == 1:
        return np.zeros((1, 1))
    perp = np.linalg.svd(c.reshape(1, -1))[2][1:]  # (k-1, k) orthonormal, orthogonal to c
    ones = np.linalg.svd(np.ones((1, k)))[2][1:]  # (k-1, k) orthonormal basis of 1-perp
    return ones.T @ perp  # row i: image of e_i - centroid


def rational_approx(graph: TransitionGraph, alpha, tol: float = 1e-6, max_denominator: int = 10**6,
                    cone: DirectionCone | None = None, attempts: int = 8) -> RationalApprox:
    """Write a QL class as a positive combination of rational QL classes sharing its tight rays."""
    alpha = as_class(alpha)
    if alpha.exact:
        if not is_quasi_lyapunov(graph, alpha).is_ql:
            raise PreconditionError(f"class {alpha} is not quasi-Lyapunov")
        return RationalApprox([alpha], [1.0], alpha)
    if not is_quasi_lyapunov(graph, alpha).is_ql:
        raise PreconditionError(f"class {alpha} is not quasi-Lyapunov")
    d = graph.dimension
    if graph.intra.any():
        cone = direction_cone(graph) if cone is None else cone
        Z = tight_rays(cone, alpha)
        rows = [list(cone.rays[i]) for i in sorted(Z)]
    else:
        Z, rows = frozenset(), []
    basis = nullspace(rows, d)
    if not basis:
        zero = CohomologyClass.of([Fraction(0)] * d, exact=True)
        return RationalApprox([zero], [1.0], alpha)
    N = np.array([[float(v) for v in b] for b in basis]).T  # d x k
    target = alpha.as_float()
    coords = np.linalg.lstsq(N, target, rcond=None)[0]
    offsets = _simplex_offsets(coords)
    delta = 1e-2 * max(np.abs(coords).max(), 1e-12)
    for _ in range(attempts):
        betas, B = [], []
        for off in offsets:
            b = [rationalize(x, max_denominator) for x in coords + delta * off]
            betas.append(CohomologyClass.of(
                [sum((bi * basis[i][j] for i, bi in enumerate(b)), Fraction(0)) for j in range(d)], exact=True))
            B.append([float(x) for x in b])
        lam = np.linalg.lstsq(np.array(B).T, coords, rcond=None)[0]
        ok = bool(np.all(lam > 0))
        if ok:
            for beta in betas:
                if not is_quasi_lyapunov(graph, beta).is_ql or (cone is not None and not Z <= tight_rays(cone, beta)):
                    ok = False
                    break
        if ok:
            approx = RationalApprox(betas, [float(x) for x in lam], alpha)
            if approx.error() <= tol:
                return approx
        delta /= 10
    raise PreconditionError(f"no rational decomposition within {tol} (denominator cap {max_denominator})")
