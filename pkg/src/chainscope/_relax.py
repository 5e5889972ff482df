"""Longest-walk potentials and positive-cycle extraction (vectorised Bellman-Ford).

Potentials satisfy ``f[src] >= f[dst] + w`` on every edge, with f = max(0, best
walk value from the node). Components of the condensation are processed from
the sinks upward, so Bellman-Ford rounds only run inside strong components.
A positive cycle shows up as a cycle of the successor pointers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boxgraph import TransitionGraph

_POINTER_CHECK = 4


@dataclass
class _Block:
    exits: np.ndarray  # edge ids leaving the level
    intra: np.ndarray  # edge ids inside the level's components, sorted by src
    starts: np.ndarray
    counts: np.ndarray
    gsrc: np.ndarray  # source node of each group
    size: int  # nodes in the level


def _block(graph: TransitionGraph, exits: np.ndarray, intra: np.ndarray, size: int) -> _Block:
    intra = intra[np.argsort(graph.src[intra], kind="stable")]
    gsrc, starts, counts = np.unique(graph.src[intra], return_index=True, return_counts=True)
    return _Block(exits, intra, starts, counts, gsrc, size)


def level_plan(graph: TransitionGraph) -> list[_Block]:
    hit = graph.__dict__.get("_level_plan")
    if hit is not None:
        return hit
    node_level = graph.scc_levels[graph.scc]
    edge_level = node_level[graph.src]
    order = np.argsort(edge_level, kind="stable")
    bounds = np.searchsorted(edge_level[order], np.arange(int(node_level.max(initial=0)) + 2))
    sizes = np.bincount(node_level, minlength=len(bounds))
    plan = []
    for lvl in range(len(bounds) - 1):
        ids = order[bounds[lvl]:bounds[lvl + 1]]
        if ids.size == 0:
            continue
        mask = graph.intra[ids]
        plan.append(_block(graph, ids[~mask], ids[mask], int(sizes[lvl])))
    graph.__dict__["_level_plan"] = plan
    return plan


def cycle_plan(graph: TransitionGraph) -> list[_Block]:
    """Single block holding only intra-component edges (cycles live there)."""
    hit = graph.__dict__.get("_cycle_plan")
    if hit is not None:
        return hit
    ids = np.flatnonzero(graph.intra)
    plan = [_block(graph, np.empty(0, dtype=np.int64), ids, graph.num_nodes)] if ids.size else []
    graph.__dict__["_cycle_plan"] = plan
    return plan


def weights_dtype(w: np.ndarray, graph: TransitionGraph) -> np.ndarray:
    """Promote integer weights to Python ints when walk sums could overflow int64."""
    if w.dtype == object or w.dtype.kind == "f":
        return w
    bound = int(np.abs(w).max(initial=0)) * (graph.num_nodes + 1)
    if bound < 2**62:
        return w.astype(np.int64)
    return w.astype(object)


def _pointer_cycle(succ: np.ndarray, starts, dst: np.ndarray) -> list[int] | None:
    """Find a cycle of the successor-pointer graph reachable from ``starts``."""
    seen: dict[int, int] = {}
    for tag, u in enumerate(starts):
        u = int(u)
        while u not in seen and succ[u] >= 0:
            seen[u] = tag
            u = int(dst[succ[u]])
        if seen.get(u) == tag:
            cyc, v = [], u
            while True:
                e = int(succ[v])
                cyc.append(e)
                v = int(dst[e])
                if v == u:
                    return cyc
    return None


def relax(graph: TransitionGraph, w: np.ndarray, tol=0, plan: list[_Block] | None = None):
    """Return ``(f, None)`` if no cycle has value > tol, else ``(None, cycle_edge_ids)``."""
    w = weights_dtype(np.asarray(w), graph)
    plan = level_plan(graph) if plan is None else plan
    dtype = w.dtype
    f = np.zeros(graph.num_nodes, dtype=dtype)
    if dtype == object:
        f[:] = 0
    succ = np.full(graph.num_nodes, -1, dtype=np.int64)
    src, dst = graph.src, graph.dst
    for blk in plan:
        if blk.exits.size:
            ex = blk.exits
            np.maximum.at(f, src[ex], f[dst[ex]] + w[ex])
        if not blk.intra.size:
            continue
        ids, gsrc = blk.intra, blk.gsrc
        d_i, w_i = dst[ids], w[ids]
        group = np.repeat(np.arange(len(gsrc)), blk.counts)
        rounds = 0
        while True:
            cand = f[d_i] + w_i
            best = np.maximum.reduceat(cand, blk.starts)
            imp = best > f[gsrc] + tol
            if not imp.any():
                break
            hit = np.flatnonzero((cand == best[group]) & imp[group])
            _, first = np.unique(group[hit], return_index=True)
            nodes = gsrc[imp]
            f[nodes] = best[imp]
            succ[nodes] = ids[hit[first]]
            rounds += 1
            # past blk.size rounds a positive cycle is certain; look every round
            if rounds % _POINTER_CHECK == 0 or rounds >= blk.size:
                cyc = _pointer_cycle(succ, nodes, dst)
                if cyc is not None and sum(w[e] for e in cyc) > tol:
                    return None, cyc
            if rounds > 64 * blk.size + 1024:
                raise RuntimeError("relaxation failed to converge or to expose a cycle")
    return f, None


def find_positive_cycle(graph: TransitionGraph, w: np.ndarray, tol=0) -> list[int] | None:
    """A cycle with value > tol, searched on intra-component edges only."""
    plan = cycle_plan(graph)
    if not plan:
        return None
    return relax(graph, w, tol, plan)[1]


def rotate_cycle(cycle: list[int]) -> list[int]:
    """Canonical rotation (smallest edge id first) for reproducible output."""
    if not cycle:
        return cycle
    k = cycle.index(min(cycle))
    return cycle[k:] + cycle[:k]

