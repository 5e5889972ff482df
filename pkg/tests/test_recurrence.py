from __future__ import annotations

import itertools
from fractions import Fraction

import pytest

from chainscope import boxgraph, flowsys, recurrence
from chainscope.boxgraph import TransitionGraph
from chainscope.recurrence import AttractorPair, PreconditionError
from oracles import random_graph, reachability


def graph_of(n, pairs):
    return TransitionGraph.from_edges(n, [(a, b, (0, 0)) for a, b in pairs], 1.0, 2)


def test_linear_single_chain():
    g = boxgraph.build_transition_graph(flowsys.linear([1.0, flowsys.GOLDEN]), 8)
    dec = recurrence.chain_decompose(g)
    assert dec.recurrent.all() and len(dec.chain_ids) == 1


def test_acyclic_pair_has_no_chain():
    dec = recurrence.chain_decompose(graph_of(2, [(0, 1)]))
    assert not dec.recurrent.any() and dec.chain_ids == ()


def test_g1_single_chain(g1):
    dec = recurrence.chain_decompose(g1)
    assert [c.tolist() for c in dec.chains()] == [[0, 1]]
    assert recurrence.conley_order(dec) == set()


def test_self_loop_counts_as_recurrent():
    dec = recurrence.chain_decompose(graph_of(3, [(0, 0), (0, 1), (1, 2)]))
    assert dec.recurrent.tolist() == [True, False, False]


def test_disjoint_cycles_incomparable():
    dec = recurrence.chain_decompose(graph_of(4, [(0, 1), (1, 0), (2, 3), (3, 2)]))
    assert len(dec.chain_ids) == 2 and recurrence.conley_order(dec) == set()


def test_figure_one_p_above_q():
    g = boxgraph.build_transition_graph(flowsys.catalog_figure_one(), 64)
    dec = recurrence.chain_decompose(g)
    p, q = g.grid.locate([0.001, 0.001]), g.grid.locate([0.501, 0.501])
    cp, cq = int(dec.scc_id[p]), int(dec.scc_id[q])
    assert dec.recurrent[p] and dec.recurrent[q]
    # the p-q heteroclinic loop merges both into the big chain at scale eps = 1/64
    assert cp == cq or (cp, cq) in recurrence.conley_order(dec)


def test_decomposition_matches_transitive_closure(rng):
    for _ in range(150):
        g = random_graph(rng, max_nodes=12, max_edges=30)
        dec = recurrence.chain_decompose(g)
        reach = reachability(g)
        n = g.num_nodes
        assert dec.recurrent.tolist() == [bool(reach[u, u]) for u in range(n)]
        for u, v in itertools.product(range(n), repeat=2):
            same = dec.scc_id[u] == dec.scc_id[v]
            if u != v:
                assert same == (reach[u, v] and reach[v, u])
        # component numbering is a topological order and reachability is preserved
        for a, b in dec.condensation:
            assert a < b
        order = recurrence.conley_order(dec)
        for a, b in itertools.permutations(dec.chain_ids, 2):
            u, v = dec.members(a)[0], dec.members(b)[0]
            assert ((a, b) in order) == bool(reach[u, v])


def test_decomposition_json_roundtrip_shape(rng):
    g = random_graph(rng)
    doc = recurrence.decomposition_json(recurrence.chain_decompose(g))
    assert set(doc) == {"chains", "order"}
    assert all(0 <= i < len(doc["chains"]) for pair in doc["order"] for i in pair)


def test_attractor_all_chains(rng):
    g = graph_of(4, [(0, 1), (1, 1), (2, 3), (3, 2), (3, 1)])
    dec = recurrence.chain_decompose(g)
    pair = recurrence.attractor_from(g, dec, dec.chain_ids)
    assert pair.attractor == {1, 2, 3} and pair.repeller == frozenset()


def test_attractor_g1(g1):
    dec = recurrence.chain_decompose(g1)
    pair = recurrence.attractor_from(g1, dec, dec.chain_ids)
    assert pair.attractor == {0, 1} and pair.repeller == frozenset()


def test_attractor_unknown_seed(g1):
    with pytest.raises(PreconditionError):
        recurrence.attractor_from(g1, recurrence.chain_decompose(g1), [99])


def test_attractor_axioms_and_separation(rng):
    checked = 0
    for _ in range(150):
        g = random_graph(rng, max_nodes=10, max_edges=25)
        dec = recurrence.chain_decompose(g)
        reach = reachability(g)
        for c in dec.chain_ids:
            pair = recurrence.attractor_from(g, dec, [c])
            assert recurrence.check_pair(g, dec, pair) == []
            seeds = set(dec.members(c).tolist())
            expect = seeds | {v for u in seeds for v in range(g.num_nodes) if reach[u, v]}
            assert pair.attractor == expect
        for a, b in itertools.permutations(dec.chain_ids, 2):
            u, v = dec.members(a)[0], dec.members(b)[0]
            if reach[u, v]:
                continue
            pair = recurrence.attractor_from(g, dec, [a])
            ra, rb = set(dec.members(a).tolist()), set(dec.members(b).tolist())
            assert ra <= pair.attractor and rb <= pair.repeller
            checked += 1
    assert checked > 50


def test_graded_constant_on_trivial_pair():
    g = graph_of(3, [(0, 1), (1, 2), (2, 0)])
    f = recurrence.graded_pre_lyapunov(g, AttractorPair(frozenset(range(3)), frozenset()))
    assert set(f.values()) == {0}


def test_graded_chain():
    g = graph_of(3, [(0, 1), (1, 2)])
    f = recurrence.graded_pre_lyapunov(g, AttractorPair(frozenset({2}), frozenset({0})))
    assert f == {0: 1, 1: Fraction(1, 2), 2: 0}


def test_graded_rejects_invalid_pair():
    g = graph_of(3, [(0, 1), (1, 2)])
    with pytest.raises(PreconditionError):
        recurrence.graded_pre_lyapunov(g, AttractorPair(frozenset({1}), frozenset()))


def test_graded_on_random_dags(rng):
    for _ in range(100):
        n = int(rng.integers(3, 12))
        pairs = {(int(a), int(b)) for a, b in rng.integers(0, n, size=(2 * n, 2)) if a < b}
        g = graph_of(n, pairs or {(0, 1)})
        dec = recurrence.chain_decompose(g)
        sinks = [v for v in range(n) if not g.out_adjacency[v]]
        A = frozenset(recurrence.forward_closure(g, sinks[:1]))
        outside = set(range(n)) - A
        dead = [v for v in outside if not g.out_adjacency[v]]
        As = frozenset(recurrence.backward_closure(g, dead, allowed=outside))
        pair = AttractorPair(A, As)
        assert recurrence.check_pair(g, dec, pair) == []
        f = recurrence.graded_pre_lyapunov(g, pair, dec)
        for s, t in zip(g.src.tolist(), g.dst.tolist()):
            assert f[s] >= f[t]
            if s not in A and s not in As:
                assert f[s] > f[t]
        assert all(0 < f[v] < 1 for v in range(n) if v not in A and v not in As)
