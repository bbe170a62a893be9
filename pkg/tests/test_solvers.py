from __future__ import annotations

import itertools

import pytest
from hypothesis import given, settings, strategies as st

from bruteforce import bf_vertex_cover, brute, solver_key
from graphsca.core import (
    FAMILIES,
    TIERS,
    ConstraintSet,
    Edge,
    Graph,
    NodeAttr,
    Query,
    StructuredTask,
)
from graphsca.forge import derive_seed, generate_task
from graphsca.solvers import INFEASIBLE, OUT_OF_RANGE, SOLVED, message_passing, solve
from graphsca.verifier import validate_witness, verify


@pytest.mark.parametrize("fam", FAMILIES)
def test_matches_exhaustive_oracle_d1(fam):
    for i in range(25):
        task = generate_task(fam, "D1", derive_seed("solver-bf", fam, i))
        res = solve(task)
        assert res.status == SOLVED
        assert solver_key(task, res.answer) == brute(task), (fam, i)


def test_bipartite_two_colors():
    nodes = tuple(f"n{i}" for i in range(6))
    edges = tuple(Edge(f"n{i}", f"n{j}") for i in range(3) for j in range(3, 6))
    t = StructuredTask("coloring", "D1", 0, Graph(nodes, edges), constraints=ConstraintSet(max_colors=2))
    res = solve(t)
    assert res.status == SOLVED and res.answer.value == 2
    assert verify(res.answer, t).passed


def test_triangle_two_colors_infeasible():
    g = Graph(("a", "b", "c"), (Edge("a", "b"), Edge("b", "c"), Edge("a", "c")))
    res = solve(StructuredTask("coloring", "D1", 0, g, constraints=ConstraintSet(max_colors=2)))
    assert res.status == INFEASIBLE and res.answer.claims_infeasible


def test_seven_node_cover_equals_subset_enumeration():
    found = 0
    for i in range(200):
        t = generate_task("vertex_cover", "D1", derive_seed("vc7", i))
        if t.n != 7:
            continue
        found += 1
        res = solve(t)
        assert (res.answer.value if res.status == SOLVED else None) == bf_vertex_cover(t)
    assert found >= 10


def test_oversized_pattern_out_of_range():
    host = Graph(tuple(f"h{i}" for i in range(12)), tuple(Edge(f"h{i}", f"h{i+1}") for i in range(11)))
    pat = Graph(tuple(f"p{i}" for i in range(9)), tuple(Edge(f"p{i}", f"p{i+1}") for i in range(8)))
    res = solve(StructuredTask("substructure", "D4", 0, host, Query(pattern=pat)))
    assert res.status == OUT_OF_RANGE


@pytest.mark.parametrize("fam", FAMILIES)
@pytest.mark.parametrize("tier", TIERS)
def test_solved_witness_validates(fam, tier):
    for i in range(3):
        t = generate_task(fam, tier, derive_seed("wit", fam, tier, i))
        res = solve(t)
        assert res.status == SOLVED
        w = res.answer.witness
        if isinstance(w, dict) and w:
            ok, msg = validate_witness(fam, w, t)
            assert ok, msg
        assert verify(res.answer, t).passed


def test_topological_tie_break_lexicographic():
    g = Graph(("n2", "n0", "n1"), (Edge("n2", "n1"),), directed=True)
    res = solve(StructuredTask("topological_sort", "D1", 0, g))
    assert res.answer.witness["order"] == ["n0", "n2", "n1"]


def test_shortest_path_tie_break_lexicographic():
    g = Graph(("s", "a", "b", "t"), (Edge("s", "b"), Edge("s", "a"), Edge("a", "t"), Edge("b", "t")))
    res = solve(StructuredTask("shortest_path", "D1", 0, g, Query(source="s", target="t")))
    assert res.answer.witness["path"] == ["s", "a", "t"]


@st.composite
def embedded_graphs(draw):
    n = draw(st.integers(2, 7))
    nodes = tuple(f"n{i}" for i in range(n))
    directed = draw(st.booleans())
    pairs = [p for p in itertools.permutations(nodes, 2) if directed or p[0] < p[1]]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs))) if pairs else []
    dim = draw(st.integers(1, 3))
    attrs = {v: NodeAttr(embedding=tuple(draw(st.lists(st.integers(-5, 5), min_size=dim, max_size=dim)))) for v in nodes}
    return Graph(nodes, tuple(Edge(u, v) for u, v in chosen), directed, attrs)


def _with_state(g: Graph, state) -> Graph:
    attrs = {v: NodeAttr(embedding=tuple(state[v])) for v in g.nodes}
    return Graph(g.nodes, g.edges, g.directed, attrs)


@given(embedded_graphs(), st.integers(0, 3), st.integers(0, 3))
@settings(max_examples=80, deadline=None)
def test_message_passing_round_compositional(g, a, b):
    whole = message_passing(g, a + b)
    assert message_passing(_with_state(g, message_passing(g, a)), b) == whole
    assert message_passing(g, a + b) == whole
