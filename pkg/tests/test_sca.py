from __future__ import annotations

import inspect

import pytest
from hypothesis import given, settings, strategies as st

from graphsca.agents import FaultAgent, OracleAgent, run_episode
from graphsca.core import Discrepancy
from graphsca.evolve import seed_genome
from graphsca.forge import generate
from graphsca.harness import stock_toolbox
from graphsca.niche import niche_key
from graphsca.sca import (
    Attribution,
    Diagnostics,
    assign_credit,
    diagnose,
    dispatch_update,
)
from graphsca.toolbox import Toolbox
from graphsca.verifier import VerifierEvidence, failed_evidence

PASS = VerifierEvidence(True, True, True, 0)
FAIL = failed_evidence("wrong")


@pytest.fixture(scope="module")
def stocked():
    box = Toolbox(run_seed=2)
    stock_toolbox(box)
    return box


def _episode(agent, fam, box, seed=1):
    inst = generate(fam, "D1", seed)
    traj, ev = run_episode(agent, inst, box.ids(), seed_genome(), box, 1, True, seed)
    return inst, traj, ev


def _route(agent, fam, box, seed=1):
    inst, traj, ev = _episode(agent, fam, box, seed)
    diag = diagnose(traj, ev, inst.task, box, box.ids())
    return diag, assign_credit(diag, ev)


# attribution invariants -------------------------------------------------------


def test_instruction_needs_section_subtarget():
    with pytest.raises(ValueError):
        Attribution("instruction", "tool_space")


def test_no_op_needs_identity():
    with pytest.raises(ValueError):
        Attribution("no_op", "parse")


def test_unknown_route():
    with pytest.raises(ValueError):
        Attribution("blame_user", "identity")


# cascade on hand-built diagnostics ----------------------------------------------


def test_passed_is_no_op():
    a = assign_credit(Diagnostics(Discrepancy()), PASS)
    assert (a.route, a.subtarget) == ("no_op", "identity")


def test_missing_payload_is_protocol():
    d = Diagnostics(Discrepancy(), protocol_violations=("execute_missing_task_input",), task_doc_emitted=True)
    a = assign_credit(d, FAIL)
    assert (a.route, a.subtarget, a.focus) == ("instruction", "protocol", "execute_missing_task_input")


def test_parse_difference_is_parse():
    d = Diagnostics(Discrepancy(missing_slots=("query.target",)), task_doc_emitted=True)
    a = assign_credit(d, FAIL)
    assert (a.route, a.subtarget, a.focus) == ("instruction", "parse", "parse_missing_slots")


def test_payload_only_mismatch_is_execute():
    d = Diagnostics(Discrepancy(), payload_discrepancy=Discrepancy(missing_slots=("graph.edges",)), task_doc_emitted=True)
    a = assign_credit(d, FAIL)
    assert (a.route, a.subtarget) == ("instruction", "execute")


def test_low_compat_is_selection():
    d = Diagnostics(Discrepancy(), selection_incompat=("x", 0.75), exact_tool_in_view=True, task_doc_emitted=True)
    assert assign_credit(d, FAIL).route == "tool_selection"
    d = Diagnostics(Discrepancy(), selection_incompat=("x", 0.75), exact_tool_in_view=False, task_doc_emitted=True)
    assert assign_credit(d, FAIL).route == "tool_logic"


def test_compatible_tool_failing_is_tool_logic():
    d = Diagnostics(Discrepancy(), selection_incompat=("x", 1.0), alg_residual=3, task_doc_emitted=True)
    a = assign_credit(d, FAIL)
    assert (a.route, a.subtarget) == ("tool_logic", "tool_space")


def test_nothing_observable_is_inconclusive():
    a = assign_credit(Diagnostics(Discrepancy()), FAIL)
    assert (a.route, a.evidence) == ("no_op", "inconclusive")


discrepancies = st.builds(
    Discrepancy,
    st.lists(st.sampled_from(["query.target", "graph.edges"]), max_size=2, unique=True).map(tuple),
    st.just(()),
    st.just(()),
)
diagnostics = st.builds(
    Diagnostics,
    discrepancies,
    discrepancies,
    st.none() | st.tuples(st.just("t"), st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0])),
    st.integers(0, 3),
    st.lists(st.sampled_from(["premature_answer", "stage_order", "execute_missing_task_input"]), unique=True, max_size=2).map(tuple),
    st.just(()),
    st.booleans(),
    st.booleans(),
    st.none(),
    st.none(),
    st.booleans(),
)


@given(diagnostics, st.booleans())
@settings(max_examples=300, deadline=None)
def test_cascade_total_and_ordered(d, passed):
    ev = PASS if passed else FAIL
    a = assign_credit(d, ev)
    assert a == assign_credit(d, ev)
    if passed:
        assert a.route == "no_op"
    elif d.protocol_violations:
        assert a.subtarget == "protocol"
    elif d.task_doc_emitted and d.parse_discrepancy.scalar:
        assert a.subtarget == "parse"
    elif d.payload_discrepancy.scalar:
        assert a.subtarget == "execute"
    elif d.selection_incompat is not None:
        assert a.route == ("tool_selection" if d.selection_incompat[1] < d.theta else "tool_logic")
    else:
        assert a.route == "no_op"


# diagnose on real trajectories ----------------------------------------------------


def test_passing_episode_zero_diagnostics(stocked):
    d, a = _route(OracleAgent(), "mst", stocked)
    assert d.parse_discrepancy.scalar == 0 and d.payload_discrepancy.scalar == 0
    assert d.alg_residual == 0 and d.protocol_violations == () and d.typed_missing_slots == ()
    assert a.route == "no_op"


def test_parse_drop_diagnosis(stocked):
    d, a = _route(FaultAgent("parse_drop_field", 1.0), "shortest_path", stocked)
    assert d.parse_discrepancy.scalar >= 1 and d.typed_missing_slots == ("query.target",)
    assert (a.route, a.subtarget) == ("instruction", "parse")


def test_wrong_tool_diagnosis(stocked):
    d, a = _route(FaultAgent("wrong_tool", 1.0), "mst", stocked)
    assert d.parse_discrepancy.scalar == 0
    tool, score = d.selection_incompat
    # the faulty agent runs the first foreign tool in id order; compat across families is 0
    assert tool == sorted(t for t in stocked.ids() if not t.startswith("mst"))[0]
    assert score == 0.0 < 1.0
    assert a.route == "tool_selection"


def test_buggy_tool_diagnosis(stocked):
    d, a = _route(FaultAgent("buggy_tool", 1.0), "tsp", stocked)
    assert d.executed == "buggy:tsp" and d.selection_incompat[1] == 1.0
    assert (a.route, a.subtarget) == ("tool_logic", "tool_space")


def test_diagnose_has_no_statement_input():
    params = set(inspect.signature(diagnose).parameters) | set(inspect.signature(assign_credit).parameters)
    assert not {"statement", "text", "instance"} & params


def test_diagnose_independent_of_view_order(stocked):
    inst, traj, ev = _episode(FaultAgent("parse_drop_field", 1.0), "mst", stocked)
    d1 = diagnose(traj, ev, inst.task, stocked, stocked.ids())
    d2 = diagnose(traj, ev, inst.task, stocked, list(reversed(stocked.ids())))
    assert d1 == d2


# dispatch -------------------------------------------------------------------------


def test_no_op_identity_plan(stocked):
    d, a = _route(OracleAgent(), "mst", stocked)
    assert dispatch_update(a, d, generate("mst", "D1", 1).task, stocked).operator == "identity"


def test_tool_logic_repair_plan(stocked):
    box = Toolbox()
    task = generate("tsp", "D1", 1).task
    assert box.accept_candidate("fragile:tsp", niche_key(task)).id == "tsp_solver"
    d = Diagnostics(Discrepancy(), selection_incompat=("tsp_solver", 1.0), executed="tsp_solver", task_doc_emitted=True)
    a = assign_credit(d, FAIL)
    plan = dispatch_update(a, d, task, box)
    assert (plan.operator, plan.parent) == ("tool_repair", "tsp_solver")


def test_candidate_repair_plan_names_body(stocked):
    inst, traj, ev = _episode(FaultAgent("buggy_tool", 1.0), "tsp", stocked)
    d = diagnose(traj, ev, inst.task, stocked, stocked.ids())
    plan = dispatch_update(assign_credit(d, ev), d, inst.task, stocked, traj)
    assert (plan.operator, plan.parent, plan.parent_body) == ("tool_repair", None, "buggy:tsp")


def test_instruction_execute_plan_targets_execute_section(stocked):
    inst, traj, ev = _episode(FaultAgent("protocol_skip_payload", 1.0), "tsp", stocked)
    d = diagnose(traj, ev, inst.task, stocked, stocked.ids())
    a = assign_credit(d, ev)
    assert a.focus == "execute_missing_task_input"
    plan = dispatch_update(a, d, inst.task, stocked, traj)
    assert (plan.operator, plan.section) == ("mutate_genome", "execute")


def test_selection_without_same_family_tool_grows():
    box = Toolbox()
    stock_toolbox(box, ["mst"])
    task = generate("tsp", "D1", 1).task
    d = Diagnostics(Discrepancy(), selection_incompat=("mst_solver", 0.0), task_doc_emitted=True)
    plan = dispatch_update(assign_credit(d, FAIL), d, task, box)
    assert plan.operator == "tool_grow" and plan.family == "tsp"


def test_dispatch_never_mutates(stocked):
    before = stocked.dump()
    inst, traj, ev = _episode(FaultAgent("buggy_tool", 1.0), "tsp", stocked)
    d = diagnose(traj, ev, inst.task, stocked, stocked.ids())
    dispatch_update(assign_credit(d, ev), d, inst.task, stocked, traj)
    assert stocked.dump() == before
