import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ipirsi import audit, goodrel as gr
from ipirsi import motherset as ms
from ipirsi.audit import QueryKey
from ipirsi.ff import rank
from ipirsi.gpcip import Instance, coefficient_matrix
from ipirsi.goodrel import EXCLUDING_I, LITERAL, SetRelation

KEY_4 = QueryKey((4,), ((1, 2, 3),))


def rel_4():
    inst = Instance(4, 1, 2)
    return gr.relation_from_protocol(inst, audit.query_from_key(inst, KEY_4))


def constant(K, M, D, J):
    return SetRelation(K, M, D, {I: frozenset(J) for I in gr.domain(K, M)})


def test_relation_must_be_total():
    with pytest.raises(gr.RelationError, match="not total"):
        SetRelation(3, 1, 2, {frozenset(): frozenset()})
    f = {I: frozenset({1, 9}) for I in gr.domain(3, 1)}
    with pytest.raises(gr.RelationError):
        SetRelation(3, 1, 2, f)


def test_json_round_trip():
    rel = rel_4()
    assert SetRelation.from_json(rel.to_json()) == rel
    assert rel.to_json()["f"][0] == {"I": [], "J": [4]}
    with pytest.raises(gr.RelationError):
        SetRelation.from_json({"K": 3})


def test_protocol_relation_example():
    rel = rel_4()
    assert rel(()) == {4}
    assert rel((3,)) == {1, 2, 3, 4}
    assert rel((4,)) == {4}


def test_full_relation_fails_iv():
    # literal: every f(I) = [K] meets every non-empty J*
    assert not gr.validate_good(constant(4, 1, 2, range(1, 5)), LITERAL).conditions["iv"].passed
    # excluding-I: fails once some J* is too big to be swallowed by a single I
    rep = gr.validate_good(constant(6, 1, 2, range(1, 7)), EXCLUDING_I)
    assert not rep.conditions["iv"].passed and rep.conditions["iv"].witness == {"Jstar": [1, 2]}
    # ...but at K=4, M=1, D=2 every J* has size <= 1 and I = J* works
    assert gr.validate_good(constant(4, 1, 2, range(1, 5)), EXCLUDING_I).conditions["iv"].passed


def test_condition_i_failure():
    f = {I: frozenset({1, 2, 3}) for I in gr.domain(4, 1)}
    rep = gr.validate_good(SetRelation(4, 1, 2, f))
    assert not rep.conditions["i"].passed and rep.conditions["i"].witness["I"] == [4]


def test_condition_iii_failure():
    f = {frozenset(): frozenset(), frozenset({1}): frozenset({1, 2}),
         frozenset({2}): frozenset({2, 3}), frozenset({3}): frozenset({3})}
    rep = gr.validate_good(SetRelation(3, 1, 2, f))
    assert not rep.conditions["iii"].passed
    assert rep.conditions["iii"].witness == {"I1": [1], "I2": [2]}


def test_iv_ambiguity_on_protocol_relation():
    rel = rel_4()
    lit = gr.validate_good(rel, LITERAL)
    exc = gr.validate_good(rel, EXCLUDING_I)
    assert all(lit.conditions[c].passed for c in ("i", "ii", "iii"))
    # X_4 sits in every image, so J* = {4} has no escape under the literal reading
    assert not lit.conditions["iv"].passed and lit.conditions["iv"].witness == {"Jstar": [4]}
    assert exc.good
    assert not exc.codomain.passed and exc.codomain.witness == {"I": []}


def test_unknown_variant():
    with pytest.raises(ValueError):
        gr.validate_good(rel_4(), "loose")


def test_min_cover_examples():
    assert gr.min_cover_size(gr.relation_from_graph(ms.complete_digraph(3)))[0] == 1
    ident = SetRelation(5, 1, 2, {I: I for I in gr.domain(5, 1)})
    assert gr.min_cover_size(ident) == (5, (1, 2, 3, 4, 5))
    size, witness = gr.min_cover_size(rel_4())
    assert size == 1
    assert set().union(rel_4()(()), rel_4()(witness)) == {1, 2, 3, 4}
    empty = constant(3, 1, 2, ())
    assert gr.min_cover_size(empty) == (math.inf, None)


def test_conjecture1_bound_examples():
    assert gr.conjecture1_bound(3, 1, 2) == 1
    assert gr.conjecture1_bound(4, 1, 2) == 1
    assert gr.conjecture1_bound(7, 1, 2) == 2
    for K in range(3, 40):
        for D in range(2, K):
            assert gr.conjecture1_bound(K, 1, D) == K // (D + 1)


def test_check_conjecture1():
    rep = gr.check_conjecture1(rel_4(), EXCLUDING_I)
    assert rep.ok and rep.cover_size == 1 and rep.bound == 1
    with pytest.raises(gr.NotGoodError):
        gr.check_conjecture1(rel_4(), LITERAL)


def test_relation_from_graph():
    rel = gr.relation_from_graph(ms.Digraph.from_edges(3, [(1, 2), (2, 3), (3, 1)]))
    assert all(rel((v,)) == {1, 2, 3} for v in (1, 2, 3))
    assert rel(()) == frozenset()
    assert rel.M == 1 and rel.D == 2


@st.composite
def digraphs(draw, max_n=7, sink_free=False):
    n = draw(st.integers(2, max_n))
    pairs = [(u, v) for u in range(1, n + 1) for v in range(1, n + 1) if u != v]
    edges = {e for e in pairs if draw(st.booleans())}
    if sink_free:
        for u in range(1, n + 1):
            if not any(a == u for a, _ in edges):
                edges.add((u, u % n + 1))
    return ms.Digraph.from_edges(n, edges)


@settings(max_examples=200, deadline=None)
@given(digraphs(sink_free=True))
def test_graph_cover_equals_full_cover_mother_set(g):
    assert gr.min_cover_size(gr.relation_from_graph(g))[0] == ms.mu_ext(g, ms.FULL).size


@settings(max_examples=100, deadline=None)
@given(digraphs())
def test_graph_relations_are_closed(g):
    rep = gr.validate_good(gr.relation_from_graph(g))
    assert rep.conditions["i"].passed and rep.conditions["iii"].passed


def test_d_graph_relations_pass_i_to_iii():
    # every D-graph an exhaustive K <= 4 scan finds (possibly none) gives a relation passing (i)-(iii)
    for n in (3, 4):
        for bits in ms._exhaustive_batches(n, 1 << 12):
            is_d, _ = ms.classify_graphs(bits, n, 2)
            for row in np.flatnonzero(is_d):
                rep = gr.validate_good(gr.relation_from_graph(ms.graph_from_bits(bits[row], n)))
                assert all(rep.conditions[c].passed for c in ("i", "ii", "iii"))


@pytest.mark.parametrize("K,M,D", [(4, 1, 2), (6, 1, 2), (7, 1, 2), (5, 2, 2)])
def test_protocol_relation_properties(K, M, D):
    inst = Instance(K, M, D)
    joint = audit.joint_distribution(inst)
    bound = gr.conjecture1_bound(K, M, D)
    for key in joint.keys():
        query = audit.query_from_key(inst, key)
        rel = gr.relation_from_protocol(inst, query)
        dom = list(gr.domain(K, M))
        for I1 in dom:
            for I2 in dom:
                if I1 <= I2:
                    assert rel(I1) <= rel(I2)
        rep = gr.validate_good(rel, EXCLUDING_I)
        assert all(rep.conditions[c].passed for c in ("i", "ii", "iii"))
        size, _ = gr.min_cover_size(rel)
        assert size <= bound
        assert K - size <= rank(coefficient_matrix(query))


def test_protocol_relation_rho_equal_d_is_not_good():
    # with rho = D the Q0 block decodes on its own, so J* = Q0 meets every f(I) - I
    inst = Instance(5, 1, 2)
    key = audit.joint_distribution(inst).keys()[0]
    rel = gr.relation_from_protocol(inst, audit.query_from_key(inst, key))
    rep = gr.validate_good(rel, EXCLUDING_I)
    assert not rep.conditions["iv"].passed
    assert set(rep.conditions["iv"].witness["Jstar"]) == set(key.q0)
