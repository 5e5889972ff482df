"""Chain-recurrent structure of a transition graph.

Strong components are renumbered in a deterministic topological order
(sources first), so component ids double as a linear extension of the Conley
order.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

import numpy as np

from .boxgraph import TransitionGraph


class PreconditionError(ValueError):
    """A mathematical precondition of an operation does not hold."""


@dataclass(frozen=True, eq=False)
class ChainDecomposition:
    scc_id: np.ndarray  # node -> component id (topological numbering)
    recurrent: np.ndarray  # node -> lies on a cycle
    condensation: frozenset  # (i, j) component edges, i != j
    chain_ids: tuple[int, ...]  # recurrent component ids, ascending

    @property
    def num_components(self) -> int:
        return int(self.scc_id.max()) + 1 if self.scc_id.size else 0

    def members(self, comp: int) -> np.ndarray:
        return np.flatnonzero(self.scc_id == comp)

    def chains(self) -> list[np.ndarray]:
        return [self.members(c) for c in self.chain_ids]

    def reach_sets(self) -> list[int]:
        """Bitset (python int) of components reachable from each component, itself included."""
        if "_reach" in self.__dict__:
            return self.__dict__["_reach"]
        succ: list[list[int]] = [[] for _ in range(self.num_components)]
        for a, b in self.condensation:
            succ[a].append(b)
        reach = [0] * self.num_components
        for c in range(self.num_components - 1, -1, -1):
            r = 1 << c
            for s in succ[c]:
                r |= reach[s]
            reach[c] = r
        self.__dict__["_reach"] = reach
        return reach


@dataclass(frozen=True)
class AttractorPair:
    attractor: frozenset
    repeller: frozenset


def _topological_renumber(ncomp: int, edges: set[tuple[int, int]], key: list[int]) -> list[int]:
    indeg = [0] * ncomp
    succ: list[list[int]] = [[] for _ in range(ncomp)]
    for a, b in edges:
        succ[a].append(b)
        indeg[b] += 1
    heap = [(key[c], c) for c in range(ncomp) if indeg[c] == 0]
    heapq.heapify(heap)
    new = [0] * ncomp
    k = 0
    while heap:
        _, c = heapq.heappop(heap)
        new[c] = k
        k += 1
        for s in succ[c]:
            indeg[s] -= 1
            if indeg[s] == 0:
                heapq.heappush(heap, (key[s], s))
    return new


def chain_decompose(graph: TransitionGraph) -> ChainDecomposition:
    labels = graph.scc
    ncomp = int(labels.max()) + 1 if graph.num_nodes else 0
    inter = ~graph.intra
    raw_edges = set(zip(labels[graph.src[inter]].tolist(), labels[graph.dst[inter]].tolist()))
    first_node = [graph.num_nodes] * ncomp
    for node, c in enumerate(labels.tolist()):
        first_node[c] = min(first_node[c], node)
    new = np.asarray(_topological_renumber(ncomp, raw_edges, first_node), dtype=np.int64)
    scc_id = new[labels] if ncomp else labels
    cond = frozenset((int(new[a]), int(new[b])) for a, b in raw_edges)

    recurrent = np.zeros(graph.num_nodes, dtype=bool)
    sizes = np.bincount(scc_id, minlength=ncomp)
    recurrent[sizes[scc_id] >= 2] = True
    loops = graph.src[graph.src == graph.dst]
    recurrent[loops] = True
    chain_ids = tuple(sorted(set(scc_id[recurrent].tolist())))
    return ChainDecomposition(scc_id, recurrent, cond, chain_ids)


def conley_order(dec: ChainDecomposition) -> set[tuple[int, int]]:
    """Pairs (R1, R2) of distinct chains with R1 reaching R2, i.e. R1 above R2."""
    reach = dec.reach_sets()
    chains = dec.chain_ids
    return {(a, b) for a in chains for b in chains if a != b and (reach[a] >> b) & 1}


def forward_closure(graph: TransitionGraph, nodes: Iterable[int]) -> set[int]:
    adj = graph.out_adjacency
    seen = set(int(v) for v in nodes)
    queue = deque(seen)
    while queue:
        u = queue.popleft()
        for e in adj[u]:
            v = int(graph.dst[e])
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def backward_closure(graph: TransitionGraph, nodes: Iterable[int], allowed: set[int] | None = None) -> set[int]:
    pred: list[list[int]] = [[] for _ in range(graph.num_nodes)]
    for s, t in zip(graph.src.tolist(), graph.dst.tolist()):
        pred[t].append(s)
    seen = set(int(v) for v in nodes)
    queue = deque(seen)
    while queue:
        u = queue.popleft()
        for v in pred[u]:
            if v not in seen and (allowed is None or v in allowed):
                seen.add(v)
                queue.append(v)
    return seen


def attractor_from(graph: TransitionGraph, dec: ChainDecomposition, seed_chains: Iterable[int]) -> AttractorPair:
    """Attractor generated by the seed chains and its dual repeller.

    A is the forward closure of the seeds. A* collects the nodes having a
    maximal walk that never enters A (it ends on a cycle or a dead end outside
    A): the complement of the basin of A. Every chain is then inside A or A*.
    """
    seeds = list(seed_chains)
    unknown = [c for c in seeds if c not in dec.chain_ids]
    if unknown:
        raise PreconditionError(f"unknown chain ids {unknown}")
    seed_nodes = np.flatnonzero(np.isin(dec.scc_id, seeds))
    A = forward_closure(graph, seed_nodes.tolist())
    outside = set(range(graph.num_nodes)) - A
    outdeg = np.bincount(graph.src, minlength=graph.num_nodes)
    free = [v for v in outside if dec.recurrent[v] or outdeg[v] == 0]
    # recurrent nodes outside A sit on cycles avoiding A (A is forward closed)
    A_star = backward_closure(graph, free, allowed=outside)
    return AttractorPair(frozenset(A), frozenset(A_star))


def check_pair(graph: TransitionGraph, dec: ChainDecomposition, pair: AttractorPair) -> list[str]:
    """Violated attractor-repeller axioms (empty list when valid)."""
    problems = []
    A, As = pair.attractor, pair.repeller
    for s, t in zip(graph.src.tolist(), graph.dst.tolist()):
        if s in A and t not in A:
            problems.append(f"attractor not forward closed at edge {s}->{t}")
            break
    for s, t in zip(graph.src.tolist(), graph.dst.tolist()):
        if t in As and s not in As:
            problems.append(f"repeller not backward closed at edge {s}->{t}")
            break
    if A & As:
        problems.append("attractor and repeller intersect")
    basin = backward_closure(graph, A)
    stray = [v for v in range(graph.num_nodes) if v not in basin and v not in As]
    if stray:
        problems.append(f"node {stray[0]} is outside A* but never reaches A")
    for c in dec.chain_ids:
        mem = set(dec.members(c).tolist())
        if not (mem <= A or mem <= As):
            problems.append(f"chain {c} split or outside A and A*")
    return problems


def graded_pre_lyapunov(graph: TransitionGraph, pair: AttractorPair,
                        dec: ChainDecomposition | None = None) -> dict[int, Fraction]:
    """0 on A, 1 on A*, and on the rest the longest-path distance to A rescaled into (0, 1)."""
    dec = chain_decompose(graph) if dec is None else dec
    problems = check_pair(graph, dec, pair)
    if problems:
        raise PreconditionError("; ".join(problems))
    A, As = pair.attractor, pair.repeller
    basin = [v for v in range(graph.num_nodes) if v not in A and v not in As]
    inb = set(basin)
    dist: dict[int, int] = {}
    adj = graph.out_adjacency

    # basin is acyclic: any cycle would be a chain outside A and A*
    def depth(u: int) -> int:
        stack = [(u, iter(adj[u]))]
        while stack:
            v, it = stack[-1]
            advanced = False
            for e in it:
                t = int(graph.dst[e])
                if t in inb and t not in dist:
                    stack.append((t, iter(adj[t])))
                    advanced = True
                    break
            if not advanced:
                stack.pop()
                best = 0
                for e in adj[v]:
                    t = int(graph.dst[e])
                    if t in A:
                        best = max(best, 1)
                    elif t in inb:
                        best = max(best, dist[t] + 1)
                dist[v] = best
        return dist[u]

    for v in basin:
        if v not in dist:
            depth(v)
    top = max(dist.values(), default=0) + 1
    f = {}
    for v in range(graph.num_nodes):
        if v in A:
            f[v] = Fraction(0)
        elif v in As:
            f[v] = Fraction(1)
        else:
            f[v] = Fraction(dist[v], top)
    return f


def decomposition_json(dec: ChainDecomposition) -> dict:
    index = {c: i for i, c in enumerate(dec.chain_ids)}
    order = sorted((index[a], index[b]) for a, b in conley_order(dec))
    return {"chains": [dec.members(c).tolist() for c in dec.chain_ids],
            "order": [list(p) for p in order]}
