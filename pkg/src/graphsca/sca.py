"""Structural credit assignment: diagnose a failed attempt and route the blame.

Routing reads only structured fields of the trajectory and the verifier
evidence (plus the canonical task for the parse diff). It never looks at
statement text or answer prose. The cascade blames the earliest stage
that clearly failed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .agents import Trajectory, executed_steps, proposal_of, protocol_check, task_doc_of
from .bodies import split_body_id
from .core import (
    Discrepancy,
    StructuredTask,
    all_slots_sentinel,
    interface_for,
    structured_discrepancy,
    validate_structure,
)
from .niche import NicheKey, ToolMeta, compat, niche_key
from .verifier import VerifierEvidence

ROUTES = ("instruction", "tool_selection", "tool_logic", "no_op")
SUBTARGETS = ("parse", "retrieve", "protocol", "execute", "tool_space", "identity")
INSTRUCTION_SUBTARGETS = ("parse", "retrieve", "protocol", "execute")
OPERATORS = ("mutate_genome", "tool_repair", "tool_grow", "identity")
THETA_EXACT = 1.0
THETA_DEFAULT = 0.5

# diagnostic focus -> genome section the matching rule lives in
FOCUS_SECTION = {
    "parse_missing_slots": "parse",
    "parse_directedness": "parse",
    "parse_mismatch": "parse",
    "selection": "retrieve",
    "execute_missing_task_input": "execute",
    "premature_answer": "protocol",
    "stage_order": "protocol",
    "missing_escalation": "protocol",
    "payload_mismatch": "execute",
}
_VIOLATION_ORDER = ("execute_missing_task_input", "premature_answer", "stage_order", "missing_escalation")


@dataclass(frozen=True)
class Diagnostics:
    parse_discrepancy: Discrepancy
    payload_discrepancy: Discrepancy = Discrepancy()
    selection_incompat: tuple[str, float] | None = None
    alg_residual: int = 0
    protocol_violations: tuple[str, ...] = ()
    typed_missing_slots: tuple[str, ...] = ()
    exact_tool_in_view: bool = False
    same_family_in_view: bool = False
    executed: str | None = None
    execution_error: str | None = None
    task_doc_emitted: bool = False

    @property
    def theta(self) -> float:
        return THETA_EXACT if self.exact_tool_in_view else THETA_DEFAULT

    def to_record(self) -> dict:
        return {
            "parse_discrepancy": self.parse_discrepancy.to_record(),
            "payload_discrepancy": self.payload_discrepancy.to_record(),
            "selection_incompat": list(self.selection_incompat) if self.selection_incompat else None,
            "alg_residual": self.alg_residual,
            "protocol_violations": list(self.protocol_violations),
            "typed_missing_slots": list(self.typed_missing_slots),
            "exact_tool_in_view": self.exact_tool_in_view,
            "executed": self.executed,
            "execution_error": self.execution_error,
        }


@dataclass(frozen=True)
class Attribution:
    route: str
    subtarget: str
    evidence: str = ""
    focus: str | None = None

    def __post_init__(self) -> None:
        if self.route not in ROUTES or self.subtarget not in SUBTARGETS:
            raise ValueError(f"bad attribution {self.route}/{self.subtarget}")
        if self.route == "instruction" and self.subtarget not in INSTRUCTION_SUBTARGETS:
            raise ValueError("instruction attributions need a genome-section subtarget")
        if self.route == "no_op" and self.subtarget != "identity":
            raise ValueError("no_op attributions use the identity subtarget")

    def to_record(self) -> dict:
        return {"route": self.route, "subtarget": self.subtarget, "focus": self.focus, "evidence": self.evidence}

    @classmethod
    def from_record(cls, rec: Mapping) -> "Attribution":
        return cls(rec["route"], rec["subtarget"], rec.get("evidence", ""), rec.get("focus"))


@dataclass(frozen=True)
class UpdatePlan:
    operator: str
    route: str = "no_op"
    focus: str | None = None
    section: str | None = None
    parent: str | None = None
    parent_body: str | None = None
    family: str | None = None
    niche: NicheKey | None = None
    evidence: Mapping = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.operator not in OPERATORS:
            raise ValueError(f"unknown update operator {self.operator!r}")

    def to_record(self) -> dict:
        return {
            "operator": self.operator,
            "route": self.route,
            "focus": self.focus,
            "section": self.section,
            "parent": self.parent,
            "parent_body": self.parent_body,
            "family": self.family,
            "niche": self.niche.render() if self.niche else None,
        }


IDENTITY_PLAN = UpdatePlan("identity")


def _executed_meta(step, traj: Trajectory, toolbox) -> ToolMeta | None:
    a = step.action
    if a.kind == "run_tool":
        if a.tool_id in toolbox:
            return toolbox.get(a.tool_id).meta
        return None
    try:
        fams = split_body_id(a.candidate)[1]
        return ToolMeta(fams, NicheKey.parse(proposal_of(traj, a.candidate) or ""))
    except (KeyError, ValueError):
        return None


def diagnose(
    traj: Trajectory,
    evidence: VerifierEvidence,
    canonical: StructuredTask,
    toolbox,
    view: Iterable[str],
    extra_violations: Sequence[str] = (),
) -> Diagnostics:
    iface = interface_for(canonical.family)
    doc = task_doc_of(traj)
    if doc is None:
        parse = all_slots_sentinel(canonical)
        missing = tuple(sorted(iface.required_slots))
    else:
        try:
            parse = structured_discrepancy(doc, canonical)
        except ValueError:
            parse = all_slots_sentinel(canonical)
        missing = validate_structure(doc, iface).missing_slots
    _, violations = protocol_check(traj)
    violations = tuple(violations) + tuple(v for v in extra_violations if v not in violations)
    view = [t for t in set(view) if t in toolbox]
    scores = [compat(toolbox.get(t).meta, canonical) for t in view]
    payload = Discrepancy()
    selection = None
    executed = err = None
    runs = executed_steps(traj)
    if runs:
        last = runs[-1]
        executed = last.action.tool_id or last.action.candidate
        err = (last.observation or {}).get("error")
        meta = _executed_meta(last, traj, toolbox)
        selection = (executed, compat(meta, canonical) if meta else 0.0)
        if last.action.task_input is not None:
            try:
                payload = structured_discrepancy(
                    {"family": canonical.family, "task_input": last.action.task_input}, canonical
                )
            except ValueError:
                payload = all_slots_sentinel(canonical)
    return Diagnostics(
        parse_discrepancy=Discrepancy() if evidence.passed else parse,
        payload_discrepancy=Discrepancy() if evidence.passed else payload,
        selection_incompat=selection,
        alg_residual=evidence.exactness_residual,
        protocol_violations=violations,
        typed_missing_slots=tuple(missing),
        exact_tool_in_view=any(s == 1.0 for s in scores),
        same_family_in_view=any(s > 0 for s in scores),
        executed=executed,
        execution_error=err,
        task_doc_emitted=doc is not None,
    )


def _parse_focus(d: Discrepancy) -> str:
    if d.missing_slots:
        return "parse_missing_slots"
    if any(slot == "graph.directed" for slot, _ in d.mismatched_slots):
        return "parse_directedness"
    return "parse_mismatch"


def assign_credit(diag: Diagnostics, evidence: VerifierEvidence) -> Attribution:
    """Ordered cascade; exactly one attribution per attempt."""
    if evidence.passed:
        return Attribution("no_op", "identity", "passed")
    if diag.protocol_violations:
        focus = next(v for v in _VIOLATION_ORDER + diag.protocol_violations if v in diag.protocol_violations)
        return Attribution("instruction", "protocol", "protocol violation: " + ", ".join(diag.protocol_violations), focus)
    if diag.task_doc_emitted and diag.parse_discrepancy.scalar > 0:
        d = diag.parse_discrepancy
        slots = list(d.missing_slots) + list(d.extra_slots) + [s for s, _ in d.mismatched_slots]
        return Attribution("instruction", "parse", "parsed task differs from canonical: " + ", ".join(slots), _parse_focus(d))
    if diag.payload_discrepancy.scalar > 0:
        return Attribution("instruction", "execute", "execution payload differs from the emitted task_doc", "payload_mismatch")
    if diag.selection_incompat is not None:
        tool, score = diag.selection_incompat
        if score < diag.theta:
            return Attribution(
                "tool_selection", "retrieve", f"selected {tool} with compat {score:g} < {diag.theta:g}", "selection"
            )
        return Attribution("tool_logic", "tool_space", f"compatible tool {tool} ran but verifier still fails")
    return Attribution("no_op", "identity", "inconclusive")


def dispatch_update(
    attr: Attribution,
    diag: Diagnostics,
    canonical: StructuredTask,
    toolbox,
    traj: Trajectory | None = None,
) -> UpdatePlan:
    """Name the operator to apply; never mutates anything itself."""
    ev = attr.to_record()
    if attr.route == "no_op":
        return UpdatePlan("identity", "no_op", evidence=ev)
    if attr.route == "instruction":
        focus = attr.focus or {"parse": "parse_mismatch", "execute": "payload_mismatch"}.get(attr.subtarget, "stage_order")
        return UpdatePlan("mutate_genome", "instruction", focus, FOCUS_SECTION.get(focus), evidence=ev)
    if attr.route == "tool_selection":
        if diag.same_family_in_view:
            return UpdatePlan("mutate_genome", "tool_selection", "selection", "retrieve", evidence=ev)
        return UpdatePlan(
            "tool_grow", "tool_selection", family=canonical.family, niche=niche_key(canonical), evidence=ev
        )
    # tool_logic: repair what ran
    tool = diag.executed
    if tool is not None and tool in toolbox:
        return UpdatePlan("tool_repair", "tool_logic", parent=tool, niche=toolbox.get(tool).niche, evidence=ev)
    niche = None
    if traj is not None and tool is not None:
        raw = proposal_of(traj, tool)
        niche = NicheKey.parse(raw) if raw else None
    return UpdatePlan(
        "tool_repair", "tool_logic", parent_body=tool, family=canonical.family, niche=niche or niche_key(canonical), evidence=ev
    )


__all__ = [
    "Attribution",
    "Diagnostics",
    "FOCUS_SECTION",
    "IDENTITY_PLAN",
    "ROUTES",
    "UpdatePlan",
    "assign_credit",
    "diagnose",
    "dispatch_update",
]
