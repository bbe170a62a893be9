from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from bruteforce import bf_shortest
from graphsca.core import (
    FAMILIES,
    TIERS,
    Edge,
    Graph,
    Query,
    StructuredTask,
    canonical_serialize,
    structured_discrepancy,
)
from graphsca.forge import (
    ParseError,
    derive_seed,
    first_seen_by_tier,
    generate,
    initial_state,
    next_episode,
    profile,
    record_result,
    reference_parse,
    verbalize,
)
from graphsca.forge.curriculum import PROMOTE_AFTER
from graphsca.verifier import verify


# generation ----------------------------------------------------------------


def test_generate_is_deterministic():
    a, b = generate("tsp", "D1", 42), generate("tsp", "D1", 42)
    assert canonical_serialize(a.task) == canonical_serialize(b.task)
    assert a.statement == b.statement and a.reference == b.reference


def test_shortest_path_reference_matches_enumeration():
    for i in range(20):
        inst = generate("shortest_path", "D1", derive_seed("sp", i))
        assert inst.reference.value == bf_shortest(inst.task)


def test_tsp_d3_has_blocked_edges_and_cost_cap():
    t = generate("tsp", "D3", 11).task
    assert t.constraints.blocked_edges and t.constraints.max_cost is not None


@pytest.mark.parametrize("fam", FAMILIES)
@pytest.mark.parametrize("tier", TIERS)
def test_instance_in_band_and_reference_verifies(fam, tier):
    inst = generate(fam, tier, derive_seed("band", fam, tier))
    lo, hi = profile(fam, tier).nodes
    assert lo <= inst.task.n <= hi
    assert verify(inst.reference, inst.task).passed


@pytest.mark.parametrize("fam", FAMILIES)
def test_profile_bands_grow_with_tier(fam):
    profs = [profile(fam, t) for t in TIERS]
    for a, b in zip(profs, profs[1:]):
        assert a.nodes[0] <= b.nodes[0] and a.nodes[1] <= b.nodes[1]
        assert set(a.constraints) <= set(b.constraints)


def test_only_active_constraints_present():
    for fam in FAMILIES:
        for tier in TIERS:
            t = generate(fam, tier, 3).task
            assert set(t.constraints.active()) <= set(profile(fam, tier).constraints)


# verbalizer / parser ---------------------------------------------------------


GOLDEN_TWO_NODE = (
    "Task: connectivity.\n"
    "Difficulty: D1.\n"
    "Instance seed: 7.\n"
    "The graph is undirected.\n"
    "Nodes: a, b.\n"
    "Edge a -- b.\n"
    "Source: a.\n"
    "Target: b.\n"
    "Question: Is there a path from a to b?\n"
)


def test_two_node_golden_text():
    t = StructuredTask("connectivity", "D1", 7, Graph(("a", "b"), (Edge("a", "b"),)), Query(source="a", target="b"))
    text = verbalize(t)
    assert text == GOLDEN_TWO_NODE
    assert text.count("a -- b") == 1
    assert reference_parse(text) == t


def test_blocked_edges_sentence_lists_each_edge():
    t = generate("shortest_path", "D3", 4).task
    text = verbalize(t)
    for u, v in t.constraints.blocked_edges:
        assert u in text and v in text
    assert any("lock" in line for line in text.splitlines())


def test_verbalize_never_leaks_reference():
    inst = generate("shortest_path_cost", "D1", 9)
    assert f"answer {inst.reference.value}" not in inst.statement.lower()


def test_roundtrip_thousand_instances():
    rng = random.Random(1000)
    for _ in range(1000):
        fam, tier = rng.choice(FAMILIES), rng.choice(TIERS)
        t = generate(fam, tier, rng.getrandbits(48)).task
        assert reference_parse(verbalize(t)) == t


def test_deleted_edge_line_shows_up_in_discrepancy():
    t = generate("mst", "D1", 2).task
    lines = verbalize(t).splitlines(keepends=True)
    edge_lines = [i for i, ln in enumerate(lines) if ln.startswith("Edge")]
    del lines[edge_lines[0]]
    parsed = reference_parse("".join(lines))
    assert parsed != t
    assert structured_discrepancy(parsed, t).scalar >= 1


def test_free_text_is_parse_error_naming_line():
    with pytest.raises(ParseError, match="line 1"):
        reference_parse("please find me a path\nthanks")


# curriculum ------------------------------------------------------------------


def test_fresh_round_robin():
    s = initial_state()
    seen = []
    for _ in range(19):
        fam, tier, s = next_episode(s)
        seen.append((fam, tier))
    assert [f for f, _ in seen] == list(FAMILIES)
    assert {t for _, t in seen} == {"D1"}
    fam20, _, _ = next_episode(s)
    assert fam20 == FAMILIES[0]


def test_promotion_examples():
    fam = FAMILIES[0]
    s = initial_state()
    s = record_result(record_result(s, fam, True), fam, True)
    assert s.tier_of(fam) == "D2"
    s = record_result(s, fam, True)
    assert s.tier_of(fam) == "D2" and s.passes[0] == 1
    s = record_result(s, fam, True)
    assert s.tier_of(fam) == "D3" and s.passes[0] == 0
    s = record_result(s, fam, False)
    assert s.tier_of(fam) == "D3" and s.passes[0] == 0
    for _ in range(10):
        s = record_result(s, fam, True)
    assert s.tier_of(fam) == "D4"


@given(st.lists(st.tuples(st.integers(0, 18), st.booleans()), max_size=200))
@settings(max_examples=100, deadline=None)
def test_curriculum_monotone_and_promotes_on_second_pass(events):
    s = initial_state()
    tally = {f: 0 for f in FAMILIES}
    for i, ok in events:
        fam = FAMILIES[i]
        before = TIERS.index(s.tier_of(fam))
        s = record_result(s, fam, ok)
        after = TIERS.index(s.tier_of(fam))
        assert after >= before
        assert 0 <= s.passes[i] < PROMOTE_AFTER
        if ok and before < 3:
            tally[fam] += 1
            assert (after == before + 1) == (tally[fam] == PROMOTE_AFTER)
            if after > before:
                tally[fam] = 0
        elif not ok:
            assert after == before


def test_always_pass_reaches_d4_by_152():
    s = initial_state()
    for _ in range(152):
        fam, _, s = next_episode(s)
        s = record_result(s, fam, True)
    assert all(t == "D4" for t in s.tiers)
    assert first_seen_by_tier(s)["D1"] == 1


def test_fixed_d4_only_d4():
    s = initial_state("fixed:D4")
    for _ in range(60):
        fam, tier, s = next_episode(s)
        assert tier == "D4"
        s = record_result(s, fam, True)


def test_bad_curriculum_mode():
    with pytest.raises(ValueError):
        initial_state("fixed:D9")
