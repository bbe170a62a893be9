"""Solve-trajectory state machine, action schema and the scripted/external agents.

An agent only ever sees the statement text, the visible tool manifest, its
genome and the observations of its own steps. The canonical task and the
reference answer stay with the harness.
"""
from __future__ import annotations

import copy
import json
import queue
import random
import socket
import subprocess
import threading
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .bodies import corrupt, split_body_id
from .core import (
    Answer,
    StructuredTask,
    interface_for,
    task_from_payload,
    to_record,
    validate_structure,
)
from .forge.generate import TaskInstance, derive_seed
from .forge.text import ParseError, reference_parse
from .niche import NicheKey, niche_key
from .solvers import solve
from .verifier import VerifierEvidence, as_answer, failed_evidence, verify

ACTION_KINDS = ("emit_task_doc", "retrieve_request", "propose_tool", "run_tool", "run_candidate", "direct_answer")
STAGE_OF = {
    "emit_task_doc": "parse",
    "retrieve_request": "retrieve",
    "propose_tool": "protocol",
    "run_tool": "execute",
    "run_candidate": "execute",
    "direct_answer": "answer",
}
STAGES = ("parse", "retrieve", "protocol", "execute", "answer")
SIGNATURE_TOKEN = {
    "emit_task_doc": "task_doc",
    "retrieve_request": "retrieve",
    "propose_tool": "propose_tool",
    "run_tool": "run_tool",
    "run_candidate": "run_candidate",
    "direct_answer": "direct_answer",
}
EXECUTIONS = ("run_tool", "run_candidate")
MAX_STEPS = 12
FAULT_MODES = (
    "none",
    "parse_drop_field",
    "parse_flip_directed",
    "wrong_tool",
    "buggy_tool",
    "protocol_skip_payload",
    "premature_answer",
)
MIXED_MODES = FAULT_MODES[1:]
# genome rule that neutralises each fault when present
COUNTER_RULES = {
    "parse_drop_field": ("parse", "check_required_slots"),
    "parse_flip_directed": ("parse", "preserve_directedness"),
    "protocol_skip_payload": ("execute", "require_task_input_payload"),
    "premature_answer": ("protocol", "execute_before_answer"),
    "wrong_tool": ("retrieve", "prefer_exact_compat"),
}
EXTERNAL_TIMEOUT_S = 300.0
EXTERNAL_RETRIES = 12


class ActionError(ValueError):
    pass


@dataclass(frozen=True)
class Action:
    kind: str
    task_doc: Mapping | None = None
    query: Mapping | None = None
    candidate: str | None = None
    niche: str | None = None
    tool_id: str | None = None
    task_input: Mapping | None = None
    answer: Mapping | None = None

    def __post_init__(self) -> None:
        if self.kind not in ACTION_KINDS:
            raise ActionError(f"unknown action kind {self.kind!r}")

    @property
    def stage(self) -> str:
        return STAGE_OF[self.kind]

    def to_record(self) -> dict:
        rec: dict[str, Any] = {"kind": self.kind}
        if self.kind == "emit_task_doc":
            rec["task_doc"] = self.task_doc
        elif self.kind == "retrieve_request":
            rec["query"] = self.query
        elif self.kind == "propose_tool":
            rec["candidate"], rec["niche"] = self.candidate, self.niche
        elif self.kind == "run_tool":
            rec["tool_id"], rec["task_input"] = self.tool_id, self.task_input
        elif self.kind == "run_candidate":
            rec["candidate"], rec["task_input"] = self.candidate, self.task_input
        else:
            rec["answer"] = self.answer
        return rec

    @classmethod
    def from_record(cls, rec: Any) -> "Action":
        if not isinstance(rec, Mapping):
            raise ActionError("action must be an object")
        kind = rec.get("kind")
        if kind not in ACTION_KINDS:
            raise ActionError(f"unknown action kind {kind!r}")
        fields_for = {
            "emit_task_doc": ("task_doc",),
            "retrieve_request": ("query",),
            "propose_tool": ("candidate", "niche"),
            "run_tool": ("tool_id", "task_input"),
            "run_candidate": ("candidate", "task_input"),
            "direct_answer": ("answer",),
        }[kind]
        extra = set(rec) - set(fields_for) - {"kind"}
        if extra:
            raise ActionError(f"unexpected fields for {kind}: {sorted(extra)}")
        kw = {k: rec.get(k) for k in fields_for}
        for k in ("task_doc", "query", "task_input", "answer"):
            if kw.get(k) is not None and not isinstance(kw[k], Mapping):
                raise ActionError(f"{k} must be an object")
        for k in ("candidate", "niche", "tool_id"):
            if kw.get(k) is not None and not isinstance(kw[k], str):
                raise ActionError(f"{k} must be a string")
        if kind == "run_tool" and not kw.get("tool_id"):
            raise ActionError("run_tool needs a tool_id")
        if kind in ("propose_tool", "run_candidate") and not kw.get("candidate"):
            raise ActionError(f"{kind} needs a candidate")
        return cls(kind, **kw)


@dataclass(frozen=True)
class TrajectoryStep:
    stage: str
    action: Action | None
    observation: Mapping | None = None

    def to_record(self) -> dict:
        return {
            "stage": self.stage,
            "action": self.action.to_record() if self.action else None,
            "observation": self.observation,
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "TrajectoryStep":
        act = rec.get("action")
        return cls(rec["stage"], Action.from_record(act) if act is not None else None, rec.get("observation"))


@dataclass(frozen=True)
class Trajectory:
    steps: tuple[TrajectoryStep, ...] = ()
    answer: Answer | None = None
    truncated: bool = False
    meta: Mapping = field(default_factory=dict)

    @property
    def protocol_signature(self) -> str:
        return signature(self.steps)

    def actions(self) -> list[Action]:
        return [s.action for s in self.steps if s.action is not None]

    def to_record(self) -> dict:
        return {
            "steps": [s.to_record() for s in self.steps],
            "answer": self.answer.to_record() if self.answer else None,
            "truncated": self.truncated,
            "protocol_signature": self.protocol_signature,
            "meta": dict(self.meta),
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "Trajectory":
        ans = rec.get("answer")
        t = cls(
            tuple(TrajectoryStep.from_record(s) for s in rec.get("steps", ())),
            Answer.from_record(ans) if ans else None,
            bool(rec.get("truncated", False)),
            dict(rec.get("meta", {})),
        )
        if "protocol_signature" in rec and rec["protocol_signature"] != t.protocol_signature:
            raise ValueError("protocol_signature does not match the step list")
        return t


def signature(steps: Sequence[TrajectoryStep]) -> str:
    return " → ".join(SIGNATURE_TOKEN[s.action.kind] for s in steps if s.action is not None)


def protocol_check(traj: Trajectory) -> tuple[bool, list[str]]:
    """Execution payloads present, no answer before execution, stage order respected."""
    violations: list[str] = []
    executed = False
    seen_doc = False
    rank = -1
    for step in traj.steps:
        a = step.action
        if a is None:
            continue
        r = STAGES.index(a.stage)
        if a.kind in EXECUTIONS:
            if a.task_input is None and "execute_missing_task_input" not in violations:
                violations.append("execute_missing_task_input")
            if not seen_doc and "stage_order" not in violations:
                violations.append("stage_order")
            executed = True
        if a.kind == "direct_answer" and not executed and "premature_answer" not in violations:
            violations.append("premature_answer")
        if r < rank and "stage_order" not in violations:
            violations.append("stage_order")
        rank = max(rank, r)
        seen_doc = seen_doc or a.kind == "emit_task_doc"
    return not violations, violations


def episode_violations(trajectories: Sequence[Trajectory], evidence: Sequence[VerifierEvidence], attempts_allowed: int) -> list[str]:
    """Episode-level protocol issues: a failed attempt left unretried while budget remained."""
    if evidence and not evidence[-1].passed and len(trajectories) < attempts_allowed:
        return ["missing_escalation"]
    return []


# ----------------------------------------------------------------------------
# agent configuration and context


@dataclass(frozen=True)
class AgentConfig:
    kind: str = "oracle"
    fault_mode: str = "none"
    rate: float = 0.0
    endpoint: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("oracle", "fault", "external"):
            raise ValueError(f"unknown agent kind {self.kind!r}")
        if self.fault_mode not in FAULT_MODES + ("mixed",):
            raise ValueError(f"unknown fault mode {self.fault_mode!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError("fault rate must lie in [0, 1]")
        if self.kind == "external" and not self.endpoint:
            raise ValueError("external agents need an endpoint")

    @classmethod
    def parse(cls, spec: str) -> "AgentConfig":
        """``oracle``, ``fault:MODE:RATE`` or ``external:ENDPOINT``."""
        if spec == "oracle":
            return cls()
        if spec.startswith("fault:"):
            parts = spec.split(":")
            if len(parts) != 3:
                raise ValueError(f"fault agent spec must be fault:MODE:RATE, got {spec!r}")
            try:
                rate = float(parts[2])
            except ValueError:
                raise ValueError(f"bad fault rate in {spec!r}") from None
            return cls("fault", parts[1], rate)
        if spec.startswith("external:"):
            return cls("external", endpoint=spec.split(":", 1)[1])
        raise ValueError(f"unknown agent spec {spec!r}")

    def render(self) -> str:
        if self.kind == "fault":
            return f"fault:{self.fault_mode}:{self.rate:g}"
        if self.kind == "external":
            return f"external:{self.endpoint}"
        return "oracle"


@dataclass
class EpisodeContext:
    statement: str
    manifest: list[dict]
    genome: Any
    attempt: int = 1
    propose_allowed: bool = True
    rng_seed: int = 0
    steps: list[TrajectoryStep] = field(default_factory=list)

    def kinds(self) -> list[str]:
        return [s.action.kind for s in self.steps if s.action is not None]

    def last_observation(self, kind: str) -> Mapping | None:
        for s in reversed(self.steps):
            if s.action is not None and s.action.kind == kind:
                return s.observation
        return None

    def has_rule(self, section: str, tag: str) -> bool:
        return self.genome is not None and self.genome.has_rule(section, tag)


class Agent:
    """Base interface: ``begin`` once per attempt, then ``act`` until an answer."""

    def begin(self, ctx: EpisodeContext) -> None:
        pass

    def act(self, ctx: EpisodeContext) -> Action | None:
        raise NotImplementedError

    def close(self) -> None:
        pass

    @property
    def meta(self) -> dict:
        return {}


class OracleAgent(Agent):
    """Scripted stand-in for the model: parse, retrieve, run the top tool, answer."""

    def begin(self, ctx: EpisodeContext) -> None:
        self._task: StructuredTask | None = None
        self._niche: NicheKey | None = None
        try:
            self._task = reference_parse(ctx.statement)
            self._niche = niche_key(self._task)
        except ParseError:
            pass

    # hooks the fault wrapper overrides -----------------------------------
    def task_doc(self, ctx: EpisodeContext) -> dict | None:
        return to_record(self._task) if self._task else None

    def payload(self, ctx: EpisodeContext) -> dict | None:
        rec = self._doc(ctx)
        if rec is None:
            return None
        return copy.deepcopy(rec.get("task_input"))

    def select_tool(self, ctx: EpisodeContext, ranked: list) -> str:
        return ranked[0][0]

    def candidate(self, ctx: EpisodeContext) -> str:
        return f"oracle:{self._task.family}"

    def early_answer(self, ctx: EpisodeContext) -> Action | None:
        return None

    # ---------------------------------------------------------------------
    def _doc(self, ctx: EpisodeContext) -> Mapping | None:
        for s in ctx.steps:
            if s.action is not None and s.action.kind == "emit_task_doc":
                return s.action.task_doc
        return None

    def act(self, ctx: EpisodeContext) -> Action | None:
        kinds = ctx.kinds()
        if "emit_task_doc" not in kinds:
            return Action("emit_task_doc", task_doc=self.task_doc(ctx))
        early = self.early_answer(ctx)
        if early is not None:
            return early
        if "retrieve_request" not in kinds:
            doc = self._doc(ctx)
            return Action("retrieve_request", query=doc)
        last = ctx.steps[-1].action
        if last is not None and last.kind in EXECUTIONS:
            obs = ctx.steps[-1].observation or {}
            if obs.get("error") is None and isinstance(obs.get("output"), Mapping):
                return Action("direct_answer", answer=dict(obs["output"]))
            return Action("direct_answer", answer=None)
        if self._task is None:
            return Action("direct_answer", answer=None)
        ranked = (ctx.last_observation("retrieve_request") or {}).get("ranked") or []
        if ranked:
            return Action("run_tool", tool_id=self.select_tool(ctx, ranked), task_input=self.payload(ctx))
        if ctx.propose_allowed:
            if "propose_tool" not in kinds:
                return Action("propose_tool", candidate=self.candidate(ctx), niche=self._niche.render())
            prop = next(s.action for s in ctx.steps if s.action is not None and s.action.kind == "propose_tool")
            return Action("run_candidate", candidate=prop.candidate, task_input=self.payload(ctx))
        # nothing to execute: answer from the agent's own reasoning
        return Action("direct_answer", answer=solve(self._task).answer.to_record())


def _drop_slot(payload: dict, slot: str) -> None:
    section, _, key = slot.partition(".")
    if section in ("query", "constraints"):
        payload.get(section, {}).pop(key, None)
        return
    g = payload.get("graph", {})
    if key in ("nodes", "edges", "directed"):
        g.pop(key, None)
    elif key in ("weights", "capacities"):
        attr = "weight" if key == "weights" else "capacity"
        for e in g.get("edges", []):
            e.pop(attr, None)
    else:
        attr = {"node_labels": "label", "node_weights": "weight", "embeddings": "embedding"}[key]
        for a in g.get("node_attrs", {}).values():
            a.pop(attr, None)


def drop_target(family: str) -> str:
    req = sorted(interface_for(family).required_slots - {"graph.nodes", "graph.edges"})
    return req[-1] if req else "graph.edges"


class FaultAgent(OracleAgent):
    """Oracle agent with one injected defect per attempt, neutralised by genome rules."""

    def __init__(self, mode: str = "none", rate: float = 0.0):
        self.mode = mode
        self.rate = rate
        self.active = "none"
        self.suppressed: str | None = None

    def begin(self, ctx: EpisodeContext) -> None:
        super().begin(ctx)
        rng = random.Random(derive_seed("fault", ctx.rng_seed, ctx.attempt))
        mode = "none"
        if self.mode != "none" and rng.random() < self.rate:
            mode = rng.choice(MIXED_MODES) if self.mode == "mixed" else self.mode
        self.active, self.suppressed = mode, None
        counter = COUNTER_RULES.get(mode)
        if counter and ctx.has_rule(*counter):
            self.active, self.suppressed = "none", mode
        if self.active == "wrong_tool" and not self._foreign_tools(ctx):
            self.active, self.suppressed = "none", None
        if self._task is None:
            self.active = "none"

    @property
    def meta(self) -> dict:
        return {"fault": self.active, "suppressed": self.suppressed}

    def _foreign_tools(self, ctx: EpisodeContext) -> list[str]:
        if self._task is None:
            return []
        return sorted(t["id"] for t in ctx.manifest if self._task.family not in t["families"])

    def task_doc(self, ctx):
        rec = super().task_doc(ctx)
        if rec is None:
            return rec
        if self.active == "parse_drop_field":
            _drop_slot(rec["task_input"], drop_target(self._task.family))
        elif self.active == "parse_flip_directed":
            g = rec["task_input"]["graph"]
            g["directed"] = not g.get("directed", False)
        return rec

    def payload(self, ctx):
        if self.active == "protocol_skip_payload":
            return None
        return super().payload(ctx)

    def select_tool(self, ctx, ranked):
        if self.active == "wrong_tool":
            return self._foreign_tools(ctx)[0]
        return super().select_tool(ctx, ranked)

    def act(self, ctx):
        act = super().act(ctx)
        # a defective candidate replaces whatever would have been executed
        if self.active == "buggy_tool" and act is not None and act.kind == "run_tool":
            bad = f"buggy:{self._task.family}"
            if "propose_tool" not in ctx.kinds():
                return Action("propose_tool", candidate=bad, niche=self._niche.render())
            return Action("run_candidate", candidate=bad, task_input=self.payload(ctx))
        if self.active == "wrong_tool" and act is not None and act.kind == "propose_tool":
            return Action("run_tool", tool_id=self._foreign_tools(ctx)[0], task_input=self.payload(ctx))
        return act

    def candidate(self, ctx):
        if self.active == "buggy_tool":
            return f"buggy:{self._task.family}"
        return super().candidate(ctx)

    def early_answer(self, ctx):
        if self.active == "premature_answer" and "retrieve_request" not in ctx.kinds():
            guess = corrupt(solve(self._task).answer.to_record())
            return Action("direct_answer", answer=guess)
        return None


# ----------------------------------------------------------------------------
# external agents


class _Channel:
    """Line-delimited JSON transport over a subprocess or a TCP socket."""

    def __init__(self, endpoint: str, timeout: float):
        self.endpoint = endpoint
        self.timeout = timeout
        self._proc = None
        self._sock = None
        self._lines: queue.Queue = queue.Queue()
        self._write = None
        self._open()

    def _open(self) -> None:
        if self.endpoint.startswith("cmd:"):
            self._proc = subprocess.Popen(
                self.endpoint[4:], shell=True, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
            )
            stream, self._write = self._proc.stdout, self._proc.stdin
        elif self.endpoint.startswith("tcp:"):
            host, _, port = self.endpoint[4:].rpartition(":")
            self._sock = socket.create_connection((host or "127.0.0.1", int(port)), timeout=self.timeout)
            self._sock.settimeout(None)
            stream = self._sock.makefile("r", encoding="utf-8")
            self._write = self._sock.makefile("w", encoding="utf-8")
        else:
            raise ValueError(f"endpoint must start with cmd: or tcp:, got {self.endpoint!r}")
        threading.Thread(target=self._pump, args=(stream,), daemon=True).start()

    def _pump(self, stream) -> None:
        for line in stream:
            self._lines.put(line)
        self._lines.put(None)

    def exchange(self, request: Mapping) -> str | None:
        self._write.write(json.dumps(request, sort_keys=True) + "\n")
        self._write.flush()
        try:
            return self._lines.get(timeout=self.timeout)
        except queue.Empty:
            return None

    def close(self) -> None:
        try:
            if self._write:
                self._write.close()
        except OSError:
            pass
        if self._proc is not None:
            self._proc.terminate()
            self._proc.wait(timeout=5)
        if self._sock is not None:
            self._sock.close()


class ExternalAgent(Agent):
    """Forwards each step to an external process; one action per exchange."""

    def __init__(self, endpoint: str, timeout: float = EXTERNAL_TIMEOUT_S, retries: int = EXTERNAL_RETRIES):
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self._chan: _Channel | None = None
        self.last_error: str | None = None

    def _channel(self) -> _Channel:
        if self._chan is None:
            self._chan = _Channel(self.endpoint, self.timeout)
        return self._chan

    def request(self, ctx: EpisodeContext) -> dict:
        return {
            "type": "step",
            "statement": ctx.statement,
            "tools": ctx.manifest,
            "instructions": ctx.genome.to_record()["sections"] if ctx.genome is not None else None,
            "observations": [s.to_record() for s in ctx.steps],
            "allowed_actions": list(ACTION_KINDS if ctx.propose_allowed else [k for k in ACTION_KINDS if k not in ("propose_tool", "run_candidate")]),
            "attempt": ctx.attempt,
        }

    def act(self, ctx: EpisodeContext) -> Action | None:
        req = self.request(ctx)
        self.last_error = None
        for _ in range(self.retries):
            try:
                line = self._channel().exchange(req)
            except (OSError, ValueError) as exc:
                self.last_error = f"transport error: {exc}"
                self._chan = None
                continue
            if line is None:
                self.last_error = f"no reply within {self.timeout:g}s"
                continue
            try:
                return Action.from_record(json.loads(line))
            except (json.JSONDecodeError, ActionError) as exc:
                self.last_error = f"malformed reply: {exc}"
                return None
        return None

    def close(self) -> None:
        if self._chan is not None:
            self._chan.close()
            self._chan = None


def make_agent(config: AgentConfig) -> Agent:
    if config.kind == "oracle":
        return OracleAgent()
    if config.kind == "fault":
        return FaultAgent(config.fault_mode, config.rate)
    return ExternalAgent(config.endpoint)


# ----------------------------------------------------------------------------
# episode driver


def _payload_observation(toolbox, action: Action, proposals: Mapping[str, Any]) -> dict:
    from .toolbox import execute_body

    if action.kind == "run_tool":
        if action.tool_id not in toolbox:
            return {"kind": "execution", "output": None, "error": f"unknown tool id {action.tool_id!r}"}
        out, err = toolbox.execute(action.tool_id, action.task_input)
    else:
        if action.candidate not in proposals:
            return {"kind": "execution", "output": None, "error": f"candidate {action.candidate!r} was not proposed"}
        out, err = execute_body(action.candidate, action.task_input, toolbox.probe_timeout)
    if err is None and not isinstance(out, Mapping):
        out, err = None, "tool output is not an answer record"
    return {"kind": "execution", "output": out, "error": err}


def _retrieval(toolbox, query: Mapping | None, view) -> dict:
    if not isinstance(query, Mapping):
        return {"kind": "retrieval", "ranked": [], "error": "missing query"}
    try:
        rec = query
        recovered = task_from_payload(rec["family"], rec["task_input"], rec.get("difficulty", "D1"), int(rec.get("seed", 0)))
    except Exception as exc:  # any malformed task_doc just retrieves nothing
        return {"kind": "retrieval", "ranked": [], "error": f"query not a valid task: {exc}"}
    return {"kind": "retrieval", "ranked": toolbox.retrieve(recovered, view).to_record(), "error": None}


def run_episode(
    agent: Agent,
    instance: TaskInstance,
    view,
    genome,
    toolbox,
    attempt: int = 1,
    propose_allowed: bool = True,
    rng_seed: int = 0,
    max_steps: int = MAX_STEPS,
) -> tuple[Trajectory, VerifierEvidence]:
    """Drive one attempt and verify the final answer against the canonical task."""
    view = frozenset(view)
    ctx = EpisodeContext(instance.statement, toolbox.manifest(view), genome, attempt, propose_allowed, rng_seed)
    agent.begin(ctx)
    proposals: dict[str, str | None] = {}
    answer_rec: Any = None
    answered = False
    for _ in range(max_steps):
        action = agent.act(ctx)
        if action is None:
            err = getattr(agent, "last_error", None) or "agent returned no action"
            ctx.steps.append(TrajectoryStep("answer" if not ctx.steps else ctx.steps[-1].stage, None, {"kind": "error", "error": err}))
            continue
        if action.kind == "emit_task_doc":
            obs = {"kind": "ack", "error": None}
        elif action.kind == "retrieve_request":
            obs = _retrieval(toolbox, action.query, view)
        elif action.kind == "propose_tool":
            if not propose_allowed:
                obs = {"kind": "ack", "error": "tool proposal disabled"}
            else:
                try:
                    split_body_id(action.candidate)
                    NicheKey.parse(action.niche or "")
                    proposals[action.candidate] = action.niche
                    obs = {"kind": "ack", "error": None}
                except (KeyError, ValueError) as exc:
                    obs = {"kind": "ack", "error": f"invalid proposal: {exc}"}
        elif action.kind in EXECUTIONS:
            obs = _payload_observation(toolbox, action, proposals)
        else:
            obs = {"kind": "final", "error": None}
            answer_rec, answered = action.answer, True
        ctx.steps.append(TrajectoryStep(action.stage, action, obs))
        if answered:
            break
    meta = dict(agent.meta)
    if not answered:
        traj = Trajectory(tuple(ctx.steps), None, True, meta)
        return traj, failed_evidence("step budget exceeded")
    ans = as_answer(answer_rec, instance.task.family) if answer_rec is not None else None
    traj = Trajectory(tuple(ctx.steps), ans, False, meta)
    if ans is None:
        return traj, failed_evidence("no answer produced")
    return traj, verify(ans, instance.task)


def executed_steps(traj: Trajectory) -> list[TrajectoryStep]:
    return [s for s in traj.steps if s.action is not None and s.action.kind in EXECUTIONS]


def task_doc_of(traj: Trajectory) -> Mapping | None:
    for a in traj.actions():
        if a.kind == "emit_task_doc":
            return a.task_doc
    return None


def proposal_of(traj: Trajectory, candidate: str) -> str | None:
    for a in traj.actions():
        if a.kind == "propose_tool" and a.candidate == candidate:
            return a.niche
    return None


def doc_is_complete(doc: Mapping | None) -> bool:
    if not isinstance(doc, Mapping) or "family" not in doc:
        return False
    try:
        return validate_structure(doc, interface_for(doc["family"])).empty
    except KeyError:
        return False


__all__ = [
    "ACTION_KINDS",
    "Action",
    "ActionError",
    "Agent",
    "AgentConfig",
    "COUNTER_RULES",
    "EpisodeContext",
    "ExternalAgent",
    "FAULT_MODES",
    "FaultAgent",
    "MAX_STEPS",
    "OracleAgent",
    "Trajectory",
    "TrajectoryStep",
    "drop_target",
    "episode_violations",
    "executed_steps",
    "make_agent",
    "proposal_of",
    "protocol_check",
    "run_episode",
    "signature",
    "task_doc_of",
]
