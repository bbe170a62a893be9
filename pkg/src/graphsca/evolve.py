"""Instruction genomes, tool mutation, objective vectors and the Pareto frontier.

Genome rules are tags from a closed bank; the scripted agents read them
behaviourally, so adding a rule has a measurable effect without any free
text. A rule id is ``section.tag`` and carries a ``strictness`` parameter.
"""
from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from .bodies import grow_target, repair_target, split_body_id
from .core import FAMILIES
from .niche import NicheKey
from .sca import UpdatePlan

SECTIONS = ("parse", "retrieve", "protocol", "execute")

RULE_BANK: dict[str, tuple[str, ...]] = {
    "parse": ("extract_all_slots", "check_required_slots", "preserve_directedness", "cross_check_edges"),
    "retrieve": ("rank_by_compat", "prefer_exact_compat"),
    "protocol": ("parse_retrieve_execute", "execute_before_answer", "escalate_on_failure"),
    "execute": ("run_top_tool", "require_task_input_payload", "build_nested_task_input"),
}
SEED_RULES = {s: RULE_BANK[s][0] for s in SECTIONS}

# diagnostic focus -> (section, rule tag)
FOCUS_RULES: dict[str, tuple[str, str]] = {
    "parse_missing_slots": ("parse", "check_required_slots"),
    "parse_directedness": ("parse", "preserve_directedness"),
    "parse_mismatch": ("parse", "cross_check_edges"),
    "selection": ("retrieve", "prefer_exact_compat"),
    "execute_missing_task_input": ("execute", "require_task_input_payload"),
    "premature_answer": ("protocol", "execute_before_answer"),
    "stage_order": ("protocol", "parse_retrieve_execute"),
    "missing_escalation": ("protocol", "escalate_on_failure"),
    "payload_mismatch": ("execute", "build_nested_task_input"),
}
MAX_STRICTNESS = 3
RULE_CAP = sum(len(v) for v in RULE_BANK.values())
VIEW_CAP = 2 * len(FAMILIES)


@dataclass(frozen=True)
class Rule:
    section: str
    tag: str
    strictness: int = 1

    @property
    def id(self) -> str:
        return f"{self.section}.{self.tag}"

    def to_record(self) -> dict:
        return {"id": self.id, "tag": self.tag, "params": {"strictness": self.strictness}}

    @classmethod
    def from_record(cls, section: str, rec: Mapping) -> "Rule":
        tag = rec["tag"]
        if tag not in RULE_BANK.get(section, ()):
            raise ValueError(f"rule {tag!r} not in the {section} bank")
        return cls(section, tag, int(rec.get("params", {}).get("strictness", 1)))


def _sections_record(sections: Mapping[str, tuple[Rule, ...]]) -> dict:
    return {s: [r.to_record() for r in sections[s]] for s in SECTIONS}


def _genome_id(sections: Mapping[str, tuple[Rule, ...]]) -> str:
    blob = json.dumps(_sections_record(sections), sort_keys=True, separators=(",", ":"))
    return "pi_" + hashlib.sha256(blob.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class Genome:
    sections: Mapping[str, tuple[Rule, ...]]
    ancestors: tuple[str, ...] = ()
    provenance: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if tuple(self.sections) != SECTIONS:
            object.__setattr__(self, "sections", {s: tuple(self.sections.get(s, ())) for s in SECTIONS})
        for s in SECTIONS:
            ids = [r.id for r in self.sections[s]]
            if len(set(ids)) != len(ids):
                raise ValueError(f"duplicate rule ids in section {s}")
        if self.id in self.ancestors:
            raise ValueError("genome cannot be its own ancestor")

    @property
    def id(self) -> str:
        return _genome_id(self.sections)

    def has_rule(self, section: str, tag: str) -> bool:
        return any(r.tag == tag for r in self.sections.get(section, ()))

    def rule_count(self) -> int:
        return sum(len(v) for v in self.sections.values())

    def section_bytes(self, section: str) -> bytes:
        return json.dumps([r.to_record() for r in self.sections[section]], sort_keys=True).encode()

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "sections": _sections_record(self.sections),
            "ancestors": list(self.ancestors),
            "provenance": [list(p) for p in self.provenance],
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "Genome":
        sections = {s: tuple(Rule.from_record(s, r) for r in rec["sections"].get(s, ())) for s in SECTIONS}
        g = cls(sections, tuple(rec.get("ancestors", ())), tuple(tuple(p) for p in rec.get("provenance", ())))
        if rec.get("id") not in (None, g.id):
            raise ValueError(f"genome id mismatch: {rec.get('id')} != {g.id}")
        return g


def seed_genome() -> Genome:
    return Genome({s: (Rule(s, SEED_RULES[s]),) for s in SECTIONS})


def _child(parent: Genome, sections: Mapping[str, tuple[Rule, ...]], route: str, focus: str) -> Genome:
    return Genome(sections, parent.ancestors + (parent.id,), parent.provenance + ((route, focus),))


@dataclass(frozen=True)
class MutationResult:
    genome: Genome
    changed: bool
    note: str
    sections_changed: tuple[str, ...] = ()


def mutate_instruction(genome: Genome, plan: UpdatePlan) -> MutationResult:
    """Apply a localized genome edit: add the focus rule, or tighten it if present."""
    if plan.operator != "mutate_genome":
        return MutationResult(genome, False, "identity")
    target = FOCUS_RULES.get(plan.focus or "")
    if target is None:
        return MutationResult(genome, False, f"skipped: no bank rule for focus {plan.focus!r}")
    section, tag = target
    if plan.section is not None and plan.section != section:
        return MutationResult(genome, False, f"skipped: focus {plan.focus} belongs to {section}")
    rules = list(genome.sections[section])
    for i, r in enumerate(rules):
        if r.tag == tag:
            if r.strictness >= MAX_STRICTNESS:
                return MutationResult(genome, False, f"skipped: {r.id} already at max strictness")
            rules[i] = replace(r, strictness=r.strictness + 1)
            note = f"tightened {r.id}"
            break
    else:
        rules.append(Rule(section, tag))
        note = f"added {section}.{tag}"
    sections = dict(genome.sections)
    sections[section] = tuple(rules)
    return MutationResult(_child(genome, sections, plan.route, plan.focus or ""), True, note, (section,))


def blind_mutation(genome: Genome, rng: random.Random) -> MutationResult:
    """Ablation operator: resample every section from its bank, ignoring the diagnosis."""
    sections = {}
    for s in SECTIONS:
        sections[s] = tuple(Rule(s, tag) for tag in RULE_BANK[s] if rng.random() < 0.5)
    changed = tuple(s for s in SECTIONS if sections[s] != genome.sections[s])
    if not changed:
        return MutationResult(genome, False, "blind: no change")
    return MutationResult(_child(genome, sections, "blind", "all"), True, "blind resample", changed)


@dataclass(frozen=True)
class ToolCandidate:
    body_id: str
    families: tuple[str, ...]
    niche: NicheKey
    parent: str | None = None

    def to_record(self) -> dict:
        return {"body": self.body_id, "families": list(self.families), "niche": self.niche.render(), "parent": self.parent}


def mutate_tool(toolbox, plan: UpdatePlan) -> ToolCandidate | None:
    """Pick a bank body for a repair or growth plan; the toolbox gate decides acceptance."""
    if plan.operator == "tool_repair":
        parent_body = plan.parent_body
        if plan.parent is not None and plan.parent in toolbox:
            parent_body = toolbox.get(plan.parent).body_id
        if parent_body is None:
            return None
        fixed = repair_target(parent_body)
        if fixed is None or plan.niche is None:
            return None
        return ToolCandidate(fixed, split_body_id(fixed)[1], plan.niche, plan.parent)
    if plan.operator == "tool_grow":
        if plan.family is None or plan.niche is None:
            return None
        body = grow_target(plan.family)
        if body is None:
            return None
        return ToolCandidate(body, (plan.family,), plan.niche)
    return None


# ----------------------------------------------------------------------------
# objectives and the frontier


@dataclass(frozen=True)
class ObjectiveVector:
    S: float
    G: float
    R: float
    Q: float

    def __post_init__(self) -> None:
        for name in "SGRQ":
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"objective {name}={v} outside [0, 1]")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.S, self.G, self.R, self.Q)

    def to_record(self) -> dict:
        return {"S": self.S, "G": self.G, "R": self.R, "Q": self.Q}

    @classmethod
    def from_record(cls, rec: Mapping) -> "ObjectiveVector":
        return cls(float(rec["S"]), float(rec["G"]), float(rec["R"]), float(rec["Q"]))


def dominates(a: ObjectiveVector | Sequence[float], b: ObjectiveVector | Sequence[float]) -> bool:
    ta = a.as_tuple() if isinstance(a, ObjectiveVector) else tuple(a)
    tb = b.as_tuple() if isinstance(b, ObjectiveVector) else tuple(b)
    return all(x >= y for x, y in zip(ta, tb)) and any(x > y for x, y in zip(ta, tb))


@dataclass(frozen=True)
class ValidationCase:
    family: str
    passed: bool
    protocol_ok: bool


def objective_vector(
    genome: Genome,
    view: Iterable[str],
    results: Sequence[ValidationCase],
    rule_cap: int = RULE_CAP,
    view_cap: int = VIEW_CAP,
) -> ObjectiveVector:
    if not results:
        raise ValueError("objective_vector needs at least one validation case")
    n = len(results)
    S = sum(r.passed for r in results) / n
    buckets = {r.family for r in results}
    G = len({r.family for r in results if r.passed}) / len(buckets)
    R = sum(r.protocol_ok for r in results) / n
    size = genome.rule_count() + len(set(view))
    Q = 1.0 - min(1.0, size / (rule_cap + view_cap))
    return ObjectiveVector(S, G, R, Q)


@dataclass(frozen=True)
class PolicyPair:
    genome: Genome
    view: frozenset[str]
    objective: ObjectiveVector | None = None
    lineage: Mapping = field(default_factory=dict)

    @property
    def id(self) -> str:
        blob = self.genome.id + "|" + ",".join(sorted(self.view))
        return "pair_" + hashlib.sha256(blob.encode()).hexdigest()[:12]

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "genome": self.genome.to_record(),
            "view": sorted(self.view),
            "objective": self.objective.to_record() if self.objective else None,
            "lineage": dict(self.lineage),
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "PolicyPair":
        obj = rec.get("objective")
        return cls(
            Genome.from_record(rec["genome"]),
            frozenset(rec.get("view", ())),
            ObjectiveVector.from_record(obj) if obj else None,
            dict(rec.get("lineage", {})),
        )


def _vec(p) -> ObjectiveVector:
    v = p.objective if isinstance(p, PolicyPair) else p
    if v is None:
        raise ValueError("frontier members need objective vectors")
    return v


def frontier_update(frontier: Sequence, candidate) -> tuple:
    """Add ``candidate`` unless dominated; drop incumbents it dominates.

    Members may be PolicyPairs or bare ObjectiveVectors.
    """
    cv = _vec(candidate)
    if any(dominates(_vec(p), cv) for p in frontier):
        return tuple(frontier)
    return tuple(p for p in frontier if not dominates(cv, _vec(p))) + (candidate,)


def _select_key(p) -> tuple:
    v = _vec(p)
    return (v.S, v.R, v.G, v.Q)


def enforce_cap(frontier: Sequence, cap: int) -> tuple:
    """Drop lexicographically-worst members until at most ``cap`` remain."""
    out = list(frontier)
    while len(out) > max(cap, 1):
        worst = min(range(len(out)), key=lambda i: (_select_key(out[i]), -i))
        out.pop(worst)
    return tuple(out)


def select_final(frontier: Sequence):
    if not frontier:
        raise ValueError("cannot select from an empty frontier")
    # earliest member wins exact ties
    best = 0
    for i in range(1, len(frontier)):
        if _select_key(frontier[i]) > _select_key(frontier[best]):
            best = i
    return frontier[best]


def diff_genomes(a: Genome, b: Genome) -> dict:
    out = {}
    for s in SECTIONS:
        ra = {r.id: r for r in a.sections[s]}
        rb = {r.id: r for r in b.sections[s]}
        added = [i for i in rb if i not in ra]
        removed = [i for i in ra if i not in rb]
        changed = [
            {"id": i, "from": ra[i].strictness, "to": rb[i].strictness}
            for i in ra if i in rb and ra[i].strictness != rb[i].strictness
        ]
        if added or removed or changed:
            out[s] = {"added": added, "removed": removed, "changed": changed}
    return out


__all__ = [
    "FOCUS_RULES",
    "Genome",
    "MutationResult",
    "ObjectiveVector",
    "PolicyPair",
    "RULE_BANK",
    "Rule",
    "SECTIONS",
    "ToolCandidate",
    "ValidationCase",
    "blind_mutation",
    "diff_genomes",
    "dominates",
    "enforce_cap",
    "frontier_update",
    "mutate_instruction",
    "mutate_tool",
    "objective_vector",
    "seed_genome",
    "select_final",
]
