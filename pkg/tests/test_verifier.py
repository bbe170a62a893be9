from __future__ import annotations

import copy
import inspect
import random
import time

import pytest
from hypothesis import given, settings, strategies as st

from bruteforce import bf_shortest
from graphsca.bodies import make_body
from graphsca.core import FAMILIES, Answer, ConstraintSet, Edge, Graph, Query, StructuredTask
from graphsca.forge import derive_seed, generate
from graphsca.niche import niche_key
from graphsca.verifier import (
    DEFAULT_PROBES,
    VerifierEvidence,
    probe_candidate,
    run_with_timeout,
    validate_witness,
    verify,
)


def corrupt_witness(task, answer: Answer, rng: random.Random) -> dict:
    """One local edit to a passing answer (a witness element, or the flag of a boolean family)."""
    a = copy.deepcopy(answer.to_record())
    fam, w, nodes = a["family"], a["witness"], list(task.graph.nodes)
    if isinstance(a["value"], bool):
        a["value"] = not a["value"]
    elif fam == "shortest_path":
        p = w["path"]
        p[-1] = rng.choice([n for n in nodes if n != p[-1]])
    elif fam == "tsp":
        t = w["tour"]
        i = rng.randrange(1, len(t))
        t[i] = t[i - 1]
    elif fam == "coloring":
        e = rng.choice(task.graph.edges)
        w["colors"][e.u] = w["colors"][e.v]
    elif fam == "vertex_cover":
        w["cover"].remove(rng.choice(w["cover"]))
    elif fam == "mst":
        w["edges"].pop(rng.randrange(len(w["edges"])))
    elif fam == "max_flow":
        w["flow"][rng.randrange(len(w["flow"]))][2] += 1
    elif fam == "bipartite_matching":
        w["matching"].pop(rng.randrange(len(w["matching"])))
    elif fam == "topological_sort":
        e = rng.choice(task.graph.edges)
        o = w["order"]
        i, j = o.index(e.u), o.index(e.v)
        o[i], o[j] = o[j], o[i]
    elif fam == "scc":
        c = w["components"]
        if len(c) > 1:
            c[0] = c[0] + c.pop(1)
        else:
            c.append([c[0].pop()])
    elif fam == "bridges":
        b = w["bridges"]
        if b:
            b.pop(rng.randrange(len(b)))
        else:
            e = rng.choice(task.graph.edges)
            b.append([e.u, e.v])
    elif fam == "gnn_sum":
        v = rng.choice(sorted(w["states"]))
        w["states"][v][0] += 1
    else:
        a["value"] += 1
    return a


@pytest.mark.parametrize("fam", FAMILIES)
def test_single_corruption_fails(fam):
    for i in range(100):
        inst = generate(fam, ("D1", "D2")[i % 2], derive_seed("corrupt", fam, i))
        assert verify(inst.reference, inst.task).passed
        bad = corrupt_witness(inst.task, inst.reference, random.Random(i))
        ev = verify(Answer.from_record(bad), inst.task)
        assert not ev.passed and ev.error_messages, (fam, i)


def _sp_task() -> StructuredTask:
    g = Graph(("a", "b", "c"), (Edge("a", "b", 2), Edge("b", "c", 3), Edge("a", "c", 9)))
    return StructuredTask("shortest_path", "D1", 0, g, Query(source="a", target="c"))


def test_path_with_non_edge_is_invalid_path():
    t = _sp_task()
    g = Graph(("a", "b", "c", "d"), t.graph.edges + (Edge("c", "d", 1),))
    t = StructuredTask("shortest_path", "D1", 0, g, Query(source="a", target="d"))
    ev = verify(Answer("shortest_path", 6, {"path": ["a", "b", "d"]}), t)
    assert not ev.passed
    assert any("invalid path" in m for m in ev.error_messages)


def test_uncovered_edge():
    g = Graph(("a", "b", "c"), (Edge("a", "b"), Edge("b", "c")))
    t = StructuredTask("vertex_cover", "D1", 0, g, constraints=ConstraintSet(max_size=2))
    ev = verify(Answer("vertex_cover", 1, {"cover": ["a"]}), t)
    assert not ev.passed
    assert any("uncovered edge" in m for m in ev.error_messages)


def test_tour_repeating_node():
    nodes = ("a", "b", "c", "d")
    edges = tuple(Edge(u, v, 1) for u, v in [("a", "b"), ("b", "c"), ("c", "d"), ("a", "d"), ("a", "c"), ("b", "d")])
    t = StructuredTask("tsp", "D1", 0, Graph(nodes, edges), Query(start="a"))
    ok, msg = validate_witness("tsp", {"tour": ["a", "b", "a", "d"]}, t)
    assert not ok and msg == "Repeated node"


def test_flow_over_capacity():
    g = Graph(("s", "t"), (Edge("s", "t", capacity=2),), directed=True)
    t = StructuredTask("max_flow", "D1", 0, g, Query(source="s", target="t"))
    ok, msg = validate_witness("max_flow", {"flow": [["s", "t", 3]]}, t)
    assert not ok and "capacity violation" in msg


def test_c4_two_coloring_valid():
    g = Graph(("a", "b", "c", "d"), (Edge("a", "b"), Edge("b", "c"), Edge("c", "d"), Edge("d", "a")))
    t = StructuredTask("coloring", "D1", 0, g, constraints=ConstraintSet(max_colors=2))
    ok, _ = validate_witness("coloring", {"colors": {"a": 0, "b": 1, "c": 0, "d": 1}}, t)
    assert ok
    assert verify(Answer("coloring", 2, {"colors": {"a": 0, "b": 1, "c": 0, "d": 1}}), t).passed


def test_malformed_witness_shape_message():
    ok, msg = validate_witness("tsp", "not a dict", _sp_task())
    assert not ok and msg


def test_verify_takes_no_statement():
    assert list(inspect.signature(verify).parameters) == ["answer", "task"]


def test_none_answer_is_failed_evidence():
    ev = verify(None, _sp_task())
    assert not ev.passed


@given(st.integers(0, 10**9), st.integers(-20, 20))
@settings(max_examples=60, deadline=None)
def test_residual_is_absolute_gap(seed, delta):
    inst = generate("shortest_path_cost", "D1", seed)
    best = bf_shortest(inst.task)
    claimed = max(0, best + delta)
    ev = verify(Answer("shortest_path_cost", claimed), inst.task)
    assert ev.exactness_residual == abs(claimed - best)
    assert ev.passed == (claimed == best)


def test_evidence_invariants_enforced():
    with pytest.raises(ValueError):
        VerifierEvidence(True, True, True, 1)
    with pytest.raises(ValueError):
        VerifierEvidence(False, True, False, 0, missing_slots=("query.target",))


# hidden probes ----------------------------------------------------------------


def _niche(fam: str):
    return niche_key(generate(fam, "D1", 1).task)


def test_oracle_body_passes_all_probes():
    rep = probe_candidate(make_body("oracle:tsp"), "tsp", _niche("tsp"))
    assert rep.probes_run == DEFAULT_PROBES == 2
    assert rep.all_passed


def test_constant_body_fails_all_probes():
    rep = probe_candidate(make_body("const:shortest_path"), "shortest_path", _niche("shortest_path"))
    assert rep.probes_passed == 0 and len(rep.messages) == rep.probes_run


def test_crashing_candidate_is_isolated():
    def boom(payload):
        raise RuntimeError("kaput")

    rep = probe_candidate(boom, "mst", _niche("mst"))
    assert rep.probes_passed == 0
    assert all("kaput" in m for m in rep.messages)


def test_hanging_candidate_times_out():
    def slow(payload):
        time.sleep(1.0)

    t0 = time.perf_counter()
    out, err = run_with_timeout(slow, {}, timeout=0.05)
    assert out is None and "timeout" in err
    assert time.perf_counter() - t0 < 0.9


def test_probe_seeds_disjoint_from_training_stream():
    rep = probe_candidate(make_body("oracle:mst"), "mst", _niche("mst"), run_seed=5)
    train = {derive_seed(5, "task", i) for i in range(1, 400)}
    assert not set(rep.seeds) & train
