from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ipirsi import motherset as ms
from ipirsi.motherset import FULL, RESTRICTED, Digraph


def G(n, *edges):
    return Digraph.from_edges(n, edges)


PATH = G(3, (1, 2), (2, 3))
CYCLE = G(3, (1, 2), (2, 3), (3, 1))
K3 = ms.complete_digraph(3)
EMPTY = G(3)


@st.composite
def digraphs(draw, max_n=7):
    n = draw(st.integers(1, max_n))
    pairs = [(u, v) for u in range(1, n + 1) for v in range(1, n + 1) if u != v]
    return Digraph.from_edges(n, [e for e in pairs if draw(st.booleans())])


def test_digraph_invariants():
    with pytest.raises(ms.GraphError):
        G(2, (1, 1))
    with pytest.raises(ms.GraphError):
        G(2, (1, 3))
    assert G(2, (1, 2), (1, 2)).edges == frozenset({(1, 2)})
    assert Digraph.from_json(CYCLE.to_json()) == CYCLE


def test_transpose_examples():
    assert ms.transpose(G(2, (1, 2))) == G(2, (2, 1))
    assert ms.transpose(CYCLE) == G(3, (1, 3), (3, 2), (2, 1))


@settings(max_examples=100, deadline=None)
@given(digraphs())
def test_transpose_involution(g):
    assert ms.transpose(ms.transpose(g)) == g


def test_reach_examples():
    assert ms.reach_set(PATH, 1) == {1, 2, 3}
    assert ms.reach_set(G(3, (1, 2)), 3) == {3}
    assert all(ms.reach_set(K3, v) == {1, 2, 3} for v in K3.nodes)


def test_condensation_examples():
    assert len(ms.scc_condensation(CYCLE).components) == 1
    cond = ms.scc_condensation(PATH)
    assert len(cond.components) == 3
    assert ms.reach_via_condensation(cond, 1) == {1, 2, 3}


@settings(max_examples=300, deadline=None)
@given(digraphs(max_n=8))
def test_condensation_reachability_equivalence(g):
    cond = ms.scc_condensation(g)
    assert sorted(v for c in cond.components for v in c) == list(g.nodes)
    for v in g.nodes:
        assert ms.reach_via_condensation(cond, v) == ms.reach_set(g, v)


def test_mu_examples():
    assert ms.mu_ext(K3).size == 1 and ms.mu_ext(K3, FULL).size == 1
    assert ms.mu_ext(EMPTY, RESTRICTED).size == 0
    assert ms.mu_ext(EMPTY, FULL).size == 3
    assert ms.mu_ext(CYCLE).size == 1
    r = ms.mu_int(PATH)
    assert r.size == 1 and r.witness == (1,)
    assert ms.mu_int(EMPTY).size == 0
    assert ms.mu_int(K3).size == 1
    with pytest.raises(ms.BudgetExceeded):
        ms.mu_ext(G(21))


def _covers(g, I, targets, full):
    covered = set().union(*(ms.reach_set(g, v) for v in I)) if I else set()
    goal = set(g.nodes) if full else targets
    return goal <= covered | set(I)


@settings(max_examples=150, deadline=None)
@given(digraphs(max_n=6))
def test_mother_set_minimality(g):
    out_targets = {u for u, _ in g.edges}
    for variant in (RESTRICTED, FULL):
        r = ms.mu_ext(g, variant)
        assert len(r.witness) == r.size
        assert _covers(g, r.witness, out_targets, variant == FULL)
        if r.size:
            assert not any(
                _covers(g, I, out_targets, variant == FULL) for I in combinations(g.nodes, r.size - 1)
            )


@settings(max_examples=150, deadline=None)
@given(digraphs(max_n=6))
def test_sink_free_variants_agree(g):
    if all(g.out_degree(v) > 0 for v in g.nodes):
        assert ms.mu_ext(g, RESTRICTED).size == ms.mu_ext(g, FULL).size


def test_d_graph_examples():
    rep = ms.is_d_graph(K3, 2)
    assert not rep.ok and rep.failed_conditions == ["iii"] and rep.mu_int_transpose == 1
    rep = ms.is_d_graph(G(3, (1, 2), (1, 3), (2, 1), (2, 3)), 2)
    assert not rep.ok and "iii" in rep.failed_conditions and rep.mu_int_transpose == 1
    assert "i" in ms.is_d_graph(G(3, (1, 2), (2, 3)), 2).failed_conditions
    assert "ii" in ms.is_d_graph(CYCLE, 2).failed_conditions


def test_bit_codes_round_trip():
    rng = np.random.default_rng(1)
    for n in range(2, 7):
        bits = rng.integers(0, 2, size=n * (n - 1), dtype=np.uint8)
        assert np.array_equal(ms.bits_from_graph(ms.graph_from_bits(bits, n)), bits)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6, 7])
def test_vectorized_mother_sets_match_brute_force(n):
    rng = np.random.default_rng(n)
    bits = rng.integers(0, 2, size=(400, n * (n - 1)), dtype=np.uint8)
    ext, int_t = ms.batch_mother_sets(bits, n)
    for b, e, i in zip(bits, ext, int_t):
        g = ms.graph_from_bits(b, n)
        assert ms.mu_ext(g).size == e
        assert ms.mu_int(ms.transpose(g)).size == i


@pytest.mark.parametrize("n,D", [(3, 2), (4, 2), (5, 2), (5, 3)])
def test_classify_matches_is_d_graph(n, D):
    rng = np.random.default_rng(10 * n + D)
    # dense graphs so the degree conditions pass often enough to reach condition (iii)
    bits = (rng.random((300, n * (n - 1))) < 0.8).astype(np.uint8)
    is_d, mu = ms.classify_graphs(bits, n, D)
    for b, flag, m in zip(bits, is_d, mu):
        g = ms.graph_from_bits(b, n)
        rep = ms.is_d_graph(g, D)
        assert bool(flag) == rep.ok
        assert m == (ms.mu_ext(g).size if rep.ok else -1)


def test_conjecture2_exhaustive_small():
    for K in (3, 4):
        rep = ms.check_conjecture2(K, 2)
        assert rep.graphs_scanned == 2 ** (K * (K - 1))
        assert rep.ok and rep.bound == K // 3
        assert rep.d_graphs_found == sum(rep.mu_ext_histogram.values())


def test_conjecture2_sample_reproducible():
    a = ms.check_conjecture2(6, 2, "sample", 5000, seed=7)
    b = ms.check_conjecture2(6, 2, "sample", 5000, seed=7)
    assert a.to_json() == b.to_json() and a.graphs_scanned == 5000


def test_conjecture2_guards():
    with pytest.raises(ms.BudgetExceeded):
        ms.check_conjecture2(7, 2, "exhaustive")
    with pytest.raises(ms.GraphError):
        ms.check_conjecture2(6, 2, "sample", 0)
    with pytest.raises(ValueError):
        ms.check_conjecture2(4, 2, "bogus")
