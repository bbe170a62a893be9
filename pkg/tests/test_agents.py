from __future__ import annotations

import json
import socket
import sys
import threading
import textwrap

import pytest
from hypothesis import given, settings, strategies as st

from graphsca.agents import (
    ActionError,
    Action,
    Agent,
    AgentConfig,
    ExternalAgent,
    FaultAgent,
    OracleAgent,
    Trajectory,
    TrajectoryStep,
    episode_violations,
    make_agent,
    protocol_check,
    run_episode,
)
from graphsca.core import FAMILIES, TIERS
from graphsca.evolve import seed_genome
from graphsca.forge import derive_seed, generate
from graphsca.harness import stock_toolbox
from graphsca.toolbox import Toolbox


@pytest.fixture(scope="module")
def stocked():
    box = Toolbox(run_seed=1)
    stock_toolbox(box)
    return box


def _run(agent, inst, box, view=None, propose=True, seed=0, **kw):
    view = box.ids() if view is None else view
    return run_episode(agent, inst, view, seed_genome(), box, 1, propose, seed, **kw)


# actions -------------------------------------------------------------------


@pytest.mark.parametrize(
    "rec",
    [
        {"kind": "emit_task_doc", "task_doc": {"family": "mst"}},
        {"kind": "retrieve_request", "query": {"family": "mst"}},
        {"kind": "propose_tool", "candidate": "oracle:mst", "niche": "tree_like / none / exact / D1"},
        {"kind": "run_tool", "tool_id": "mst_solver", "task_input": {"graph": {}}},
        {"kind": "run_tool", "tool_id": "mst_solver", "task_input": None},
        {"kind": "run_candidate", "candidate": "oracle:mst", "task_input": {"graph": {}}},
        {"kind": "direct_answer", "answer": {"family": "mst", "value": 3, "witness": None}},
        {"kind": "direct_answer", "answer": None},
    ],
)
def test_action_roundtrip(rec):
    assert Action.from_record(rec).to_record() == rec


@pytest.mark.parametrize(
    "rec",
    [
        "text",
        {"kind": "dance"},
        {"kind": "run_tool", "task_input": {}},
        {"kind": "run_tool", "tool_id": "x", "task_input": "payload"},
        {"kind": "direct_answer", "answer": None, "extra": 1},
        {"kind": "propose_tool", "niche": "x"},
    ],
)
def test_bad_action_rejected(rec):
    with pytest.raises(ActionError):
        Action.from_record(rec)


# oracle agent ----------------------------------------------------------------


@pytest.mark.parametrize("fam", FAMILIES)
@pytest.mark.parametrize("tier", TIERS)
def test_oracle_passes_and_follows_protocol(fam, tier, stocked):
    inst = generate(fam, tier, derive_seed("agent", fam, tier))
    traj, ev = _run(OracleAgent(), inst, Toolbox(), [])
    assert ev.passed, ev.error_messages
    assert protocol_check(traj) == (True, [])
    assert traj.protocol_signature == "task_doc → retrieve → propose_tool → run_candidate → direct_answer"


def test_oracle_uses_matching_tool(stocked):
    inst = generate("mst", "D1", 5)
    traj, ev = _run(OracleAgent(), inst, stocked)
    assert ev.passed
    assert traj.protocol_signature == "task_doc → retrieve → run_tool → direct_answer"
    run = [a for a in traj.actions() if a.kind == "run_tool"][0]
    assert run.tool_id == "mst_solver" and run.task_input is not None


def test_oracle_without_tools_or_proposals_answers_directly():
    inst = generate("mst", "D1", 5)
    traj, ev = _run(OracleAgent(), inst, Toolbox(), [], propose=False)
    assert ev.passed
    assert protocol_check(traj) == (False, ["premature_answer"])


@given(st.sampled_from(FAMILIES), st.integers(0, 10**9))
@settings(max_examples=30, deadline=None)
def test_zero_rate_fault_agent_is_oracle(fam, seed):
    inst = generate(fam, "D1", seed)
    box = Toolbox()
    a, _ = _run(OracleAgent(), inst, box, [])
    b, _ = _run(FaultAgent("mixed", 0.0), inst, box, [])
    assert [s.to_record() for s in a.steps] == [s.to_record() for s in b.steps]


# fault modes -----------------------------------------------------------------


def test_premature_answer_signature(stocked):
    inst = generate("tsp", "D1", 2)
    traj, ev = _run(FaultAgent("premature_answer", 1.0), inst, stocked)
    assert traj.protocol_signature == "task_doc → direct_answer"
    assert not ev.passed
    assert protocol_check(traj) == (False, ["premature_answer"])


def test_protocol_skip_refused(stocked):
    inst = generate("tsp", "D1", 2)
    traj, ev = _run(FaultAgent("protocol_skip_payload", 1.0), inst, stocked)
    run = [s for s in traj.steps if s.action and s.action.kind == "run_tool"][0]
    assert run.action.task_input is None
    assert run.observation["error"] == "execution refused: missing task_input payload"
    assert not ev.passed
    assert "execute_missing_task_input" in protocol_check(traj)[1]


def test_counter_rule_suppresses_fault(stocked):
    from graphsca.evolve import mutate_instruction
    from graphsca.sca import UpdatePlan

    g = mutate_instruction(seed_genome(), UpdatePlan("mutate_genome", "instruction", "execute_missing_task_input", "execute")).genome
    inst = generate("tsp", "D1", 2)
    agent = FaultAgent("protocol_skip_payload", 1.0)
    traj, ev = run_episode(agent, inst, stocked.ids(), g, stocked)
    assert ev.passed and traj.meta == {"fault": "none", "suppressed": "protocol_skip_payload"}


@pytest.mark.parametrize("mode", ["parse_drop_field", "wrong_tool", "buggy_tool", "protocol_skip_payload", "premature_answer"])
def test_fault_at_rate_one_always_injected(mode, stocked):
    for i in range(20):
        fam = FAMILIES[i % 19]
        traj, ev = _run(FaultAgent(mode, 1.0), generate(fam, "D1", i), stocked, seed=i)
        assert traj.meta["fault"] == mode
        assert not ev.passed


def test_wrong_tool_needs_foreign_tools():
    box = Toolbox()
    stock_toolbox(box, ["mst"])
    traj, ev = _run(FaultAgent("wrong_tool", 1.0), generate("mst", "D1", 1), box)
    assert traj.meta["fault"] == "none" and ev.passed


# trajectories ------------------------------------------------------------------


@given(st.sampled_from(FAMILIES), st.sampled_from(["none", "mixed"]), st.integers(0, 10**6))
@settings(max_examples=40, deadline=None)
def test_trajectory_roundtrip(fam, mode, seed):
    box = Toolbox()
    stock_toolbox(box, [fam, "mst" if fam != "mst" else "tsp"])
    traj, _ = _run(FaultAgent(mode, 1.0 if mode != "none" else 0.0), generate(fam, "D1", seed), box, seed=seed)
    rec = json.loads(json.dumps(traj.to_record()))
    assert Trajectory.from_record(rec) == traj


def test_signature_mismatch_rejected():
    traj = Trajectory((TrajectoryStep("parse", Action("emit_task_doc", task_doc={})),))
    rec = traj.to_record()
    rec["protocol_signature"] = "retrieve"
    with pytest.raises(ValueError):
        Trajectory.from_record(rec)


def _traj(*actions):
    return Trajectory(tuple(TrajectoryStep(a.stage, a) for a in actions))


def test_protocol_check_stage_order():
    doc = Action("emit_task_doc", task_doc={})
    run = Action("run_tool", tool_id="t", task_input={})
    ans = Action("direct_answer", answer=None)
    assert protocol_check(_traj(doc, Action("retrieve_request", query={}), run, ans)) == (True, [])
    assert protocol_check(_traj(run, doc, ans))[1] == ["stage_order"]
    assert protocol_check(_traj(doc, run, Action("retrieve_request", query={}), ans))[1] == ["stage_order"]


def test_missing_escalation():
    from graphsca.verifier import failed_evidence

    traj = _traj(Action("direct_answer", answer=None))
    assert episode_violations([traj], [failed_evidence("x")], 2) == ["missing_escalation"]
    assert episode_violations([traj, traj], [failed_evidence("x")] * 2, 2) == []


# step budget -------------------------------------------------------------------------


class Dawdler(Agent):
    def act(self, ctx):
        return Action("retrieve_request", query=None)


class Silent(Agent):
    def act(self, ctx):
        return None


@pytest.mark.parametrize("agent", [Dawdler(), Silent()])
def test_step_budget_fails_without_crash(agent):
    traj, ev = _run(agent, generate("mst", "D1", 1), Toolbox(), [], max_steps=12)
    assert traj.truncated and len(traj.steps) == 12
    assert not ev.passed and ev.error_messages == ("step budget exceeded",)


# agent configs --------------------------------------------------------------------------


def test_agent_config_parsing():
    assert AgentConfig.parse("oracle").kind == "oracle"
    c = AgentConfig.parse("fault:wrong_tool:0.5")
    assert (c.kind, c.fault_mode, c.rate) == ("fault", "wrong_tool", 0.5)
    assert c.render() == "fault:wrong_tool:0.5"
    assert AgentConfig.parse("external:tcp:127.0.0.1:9").endpoint == "tcp:127.0.0.1:9"
    assert isinstance(make_agent(AgentConfig.parse("fault:mixed:0.1")), FaultAgent)


@pytest.mark.parametrize("spec", ["fault:nope:0.1", "fault:none:2", "fault:none", "human", "external:"])
def test_agent_config_errors(spec):
    with pytest.raises(ValueError):
        AgentConfig.parse(spec)


# external agents -------------------------------------------------------------------------


SCRIPT = textwrap.dedent(
    """
    import json, sys
    n = 0
    for line in sys.stdin:
        req = json.loads(line)
        n += 1
        if n == 1:
            print("this is not json", flush=True)
        elif n == 2:
            print(json.dumps({"kind": "fly"}), flush=True)
        else:
            from graphsca.forge import reference_parse
            from graphsca.solvers import solve
            ans = solve(reference_parse(req["statement"])).answer.to_record()
            print(json.dumps({"kind": "direct_answer", "answer": ans}), flush=True)
    """
)


def test_external_cmd_agent_malformed_then_answer(tmp_path):
    script = tmp_path / "agent.py"
    script.write_text(SCRIPT)
    agent = ExternalAgent(f"cmd:{sys.executable} {script}", timeout=30)
    try:
        traj, ev = _run(agent, generate("mst", "D1", 1), Toolbox(), [])
    finally:
        agent.close()
    errs = [s.observation["error"] for s in traj.steps if s.action is None]
    assert len(errs) == 2 and all(e.startswith("malformed reply") for e in errs)
    assert traj.protocol_signature == "direct_answer"
    assert ev.passed
    assert protocol_check(traj)[1] == ["premature_answer"]


def test_external_timeout_retries(tmp_path):
    script = tmp_path / "mute.py"
    script.write_text("import sys, time\nfor _ in sys.stdin:\n    time.sleep(60)\n")
    agent = ExternalAgent(f"cmd:{sys.executable} {script}", timeout=0.05, retries=3)
    try:
        traj, ev = _run(agent, generate("mst", "D1", 1), Toolbox(), [], max_steps=2)
    finally:
        agent.close()
    assert all("no reply within" in s.observation["error"] for s in traj.steps)
    assert not ev.passed and traj.truncated


def test_external_tcp_agent():
    srv = socket.socket()
    srv.bind(("127.0.0.1", 0))
    srv.listen(1)
    port = srv.getsockname()[1]
    seen = []

    def serve():
        conn, _ = srv.accept()
        with conn, conn.makefile("r") as rf, conn.makefile("w") as wf:
            for line in rf:
                seen.append(json.loads(line))
                wf.write(json.dumps({"kind": "direct_answer", "answer": None}) + "\n")
                wf.flush()

    th = threading.Thread(target=serve, daemon=True)
    th.start()
    agent = ExternalAgent(f"tcp:127.0.0.1:{port}", timeout=10)
    try:
        traj, ev = _run(agent, generate("mst", "D1", 1), Toolbox(), [])
    finally:
        agent.close()
        srv.close()
    assert traj.protocol_signature == "direct_answer" and not ev.passed
    req = seen[0]
    assert set(req) == {"type", "statement", "tools", "instructions", "observations", "allowed_actions", "attempt"}
    # the canonical task never crosses the wire
    assert "task_input" not in json.dumps(req)
