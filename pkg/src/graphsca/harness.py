"""Training loop, episode log, metrics rollup and frozen-pair evaluation."""
from __future__ import annotations

import concurrent.futures as cf
import json
import random
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .agents import (
    AgentConfig,
    MAX_STEPS,
    episode_violations,
    executed_steps,
    make_agent,
    proposal_of,
    protocol_check,
    run_episode,
)
from .core import FAMILIES, TIERS, StructuredTask, from_record, to_record
from .evolve import (
    Genome,
    PolicyPair,
    ValidationCase,
    blind_mutation,
    enforce_cap,
    frontier_update,
    mutate_instruction,
    mutate_tool,
    objective_vector,
    seed_genome,
    select_final,
)
from .forge import derive_seed, generate, initial_state, next_episode, record_result, verbalize
from .forge.generate import GeneratorError, TaskInstance
from .niche import NicheKey, niche_key
from .sca import UpdatePlan, assign_credit, diagnose, dispatch_update
from .toolbox import REUSE_WINDOW, Rejection, Tool, Toolbox
from .verifier import DEFAULT_PROBES

DEFAULT_SEED = 20260413
ROUTING_MODES = ("sca", "blind")


@dataclass(frozen=True)
class RunConfig:
    episodes: int = 300
    seed: int = DEFAULT_SEED
    curriculum: str = "progressive"
    agent: str = "oracle"
    attempts: int = 2
    propose_tool: bool = True
    validation_per_family: int = 2
    probes: int = DEFAULT_PROBES
    population_cap: int = 4
    reeval_every: int = 38
    workers: int = 1
    routing: str = "sca"
    updates: bool = True
    instruction_updates: bool = True
    reuse_window: int = REUSE_WINDOW
    max_steps: int = MAX_STEPS
    eval_mode: bool = False

    def __post_init__(self) -> None:
        for name in ("episodes", "attempts", "validation_per_family", "probes", "population_cap", "reeval_every", "workers", "reuse_window", "max_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.routing not in ROUTING_MODES:
            raise ValueError(f"routing must be one of {ROUTING_MODES}")
        AgentConfig.parse(self.agent)
        initial_state(self.curriculum)
        if self.eval_mode:
            object.__setattr__(self, "attempts", 1)
            object.__setattr__(self, "propose_tool", False)
            object.__setattr__(self, "updates", False)

    @property
    def agent_config(self) -> AgentConfig:
        return AgentConfig.parse(self.agent)

    def to_record(self) -> dict:
        return asdict(self)


# ----------------------------------------------------------------------------
# stock toolboxes


def stock_toolbox(
    box: Toolbox,
    families: Iterable[str] = FAMILIES,
    tier: str = "D1",
    kind: str = "oracle",
    seed: int = 0,
) -> list[Tool]:
    """Register one ``kind:family`` body per family, keyed to a sampled niche at ``tier``."""
    out = []
    for fam in families:
        inst = generate(fam, tier, derive_seed("stock", seed, fam, tier))
        got = box.accept_candidate(f"{kind}:{fam}", niche_key(inst.task), episode=0)
        if isinstance(got, Rejection):
            raise ValueError(f"stock tool {kind}:{fam} rejected: {got.reason}")
        out.append(got)
    return out


# ----------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    config: RunConfig
    records: list[dict]
    summary: dict
    toolbox: Toolbox
    genome: Genome
    genomes: dict[str, Genome]
    frontier: tuple
    archive: list[dict]
    timings: list[dict] = field(default_factory=list)

    @property
    def selected(self) -> PolicyPair | None:
        return select_final(self.frontier) if self.frontier else None

    def log_bytes(self) -> bytes:
        return "".join(dumps_record(r) + "\n" for r in self.records).encode()


def dumps_record(rec: Mapping) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class _Trainer:
    def __init__(self, cfg: RunConfig, toolbox: Toolbox | None, genome: Genome | None):
        self.cfg = cfg
        self.box = toolbox if toolbox is not None else Toolbox(run_seed=cfg.seed, n_probes=cfg.probes, reuse_window=cfg.reuse_window)
        self.genome = genome or seed_genome()
        self.genomes = {self.genome.id: self.genome}
        self.view: set[str] = set(self.box.ids())
        self.state = initial_state(cfg.curriculum)
        self.frontier: tuple = ()
        self.archive: list[dict] = []
        self.blind_rng = random.Random(derive_seed("blind", cfg.seed))
        self.agent_cfg = cfg.agent_config
        self._shared = make_agent(self.agent_cfg) if self.agent_cfg.kind == "external" else None
        self.evaluations = 0

    def agent(self):
        return self._shared if self._shared is not None else make_agent(self.agent_cfg)

    # -- updates ------------------------------------------------------------
    def _accept(self, cand, episode: int, replaces: str | None) -> Tool | None:
        got = self.box.accept_candidate(cand.body_id, cand.niche, cand.families, episode, cand.parent)
        if isinstance(got, Tool):
            self.view.add(got.id)
            if replaces is not None:
                self.view.discard(replaces)
            return got
        return None

    def _set_genome(self, g: Genome) -> None:
        self.genome = g
        self.genomes.setdefault(g.id, g)

    def apply_updates(self, attr, diag, task: StructuredTask, traj, episode: int) -> tuple[int, list[str]]:
        muts, packaged = 0, []
        if self.cfg.routing == "sca":
            plan = dispatch_update(attr, diag, task, self.box, traj)
            if plan.operator == "mutate_genome" and self.cfg.instruction_updates:
                res = mutate_instruction(self.genome, plan)
                if res.changed:
                    self._set_genome(res.genome)
                    muts += 1
            elif plan.operator in ("tool_repair", "tool_grow"):
                cand = mutate_tool(self.box, plan)
                if cand is not None:
                    tool = self._accept(cand, episode, plan.parent)
                    if tool:
                        packaged.append(tool.id)
            return muts, packaged
        # blind ablation: rewrite every section and try every tool operator
        if self.cfg.instruction_updates:
            res = blind_mutation(self.genome, self.blind_rng)
            if res.changed:
                self._set_genome(res.genome)
                muts += len(res.sections_changed)
        plans = [UpdatePlan("tool_grow", "blind", family=task.family, niche=niche_key(task))]
        if diag.executed is not None:
            if diag.executed in self.box:
                plans.append(UpdatePlan("tool_repair", "blind", parent=diag.executed, niche=self.box.get(diag.executed).niche))
            else:
                plans.append(UpdatePlan("tool_repair", "blind", parent_body=diag.executed, niche=niche_key(task)))
        for plan in plans:
            cand = mutate_tool(self.box, plan)
            if cand is not None:
                tool = self._accept(cand, episode, plan.parent)
                if tool:
                    packaged.append(tool.id)
        return muts, packaged

    # -- one episode --------------------------------------------------------
    def episode(self, idx: int, family: str, tier: str) -> dict:
        cfg = self.cfg
        seed = derive_seed(cfg.seed, "task", idx)
        inst = generate(family, tier, seed)
        tool_calls: list[str] = []
        packaged: list[str] = []
        protocol_ok: list[bool] = []
        steps: list[int] = []
        signatures: list[str] = []
        muts = 0
        first = None
        candidate_ran = False
        trajs, evs = [], []
        passed = False
        for attempt in range(1, cfg.attempts + 1):
            traj, ev = run_episode(
                self.agent(), inst, self.view, self.genome, self.box, attempt, cfg.propose_tool,
                derive_seed(cfg.seed, "agent", idx), cfg.max_steps,
            )
            trajs.append(traj)
            evs.append(ev)
            ok, _ = protocol_check(traj)
            protocol_ok.append(ok)
            steps.append(len(traj.steps))
            signatures.append(traj.protocol_signature)
            for step in executed_steps(traj):
                a = step.action
                if a.kind == "run_tool" and a.tool_id in self.box:
                    self.box.record_use(a.tool_id, ev.passed)
                    tool_calls.append(a.tool_id)
                elif a.kind == "run_candidate":
                    candidate_ran = True
            if ev.passed and cfg.propose_tool:
                packaged.extend(self._package(traj, idx))
            if ev.passed:
                passed = True
                break
            diag = diagnose(traj, ev, inst.task, self.box, self.view)
            attr = assign_credit(diag, ev)
            if first is None:
                first = (attr, diag, traj)
            if cfg.updates:
                m, p = self.apply_updates(attr, diag, inst.task, traj, idx)
                muts += m
                packaged.extend(p)
        self.box.note_episode(bool(tool_calls))
        if first is None:
            credit = {"route": "no_op", "subtarget": "identity", "focus": None, "evidence": "passed"}
            missing: list[str] = []
            sig = signatures[-1]
        else:
            credit = first[0].to_record()
            missing = list(first[1].typed_missing_slots)
            sig = first[2].protocol_signature
        return {
            "episode": idx,
            "task_kind": family,
            "difficulty": tier,
            "seed": seed,
            "excluded": False,
            "passed": passed,
            "tool_used": tool_calls[-1] if tool_calls else None,
            "candidate_ran": candidate_ran,
            "credit_assignment": credit,
            "typed_missing_slots": missing,
            "protocol_signature": sig,
            "attempts": len(trajs),
            "attempt_signatures": signatures,
            "protocol_ok": protocol_ok,
            "episode_violations": episode_violations(trajs, evs, cfg.attempts),
            "tool_calls": tool_calls,
            "tools_packaged": packaged,
            "accepted_mutations": muts,
            "genome_id": self.genome.id,
            "frontier_size": len(self.frontier),
            "timing": {"steps": steps},
        }

    def _package(self, traj, idx: int) -> list[str]:
        out = []
        for step in executed_steps(traj):
            a = step.action
            if a.kind != "run_candidate" or (step.observation or {}).get("error"):
                continue
            raw = proposal_of(traj, a.candidate)
            try:
                niche = NicheKey.parse(raw or "")
            except ValueError:
                continue
            got = self.box.accept_candidate(a.candidate, niche, episode=idx)
            if isinstance(got, Tool):
                self.view.add(got.id)
                out.append(got.id)
        return out

    # -- pair evaluation ----------------------------------------------------
    def validate(self) -> None:
        self.evaluations += 1
        k = self.evaluations
        genome, view = self.genome, frozenset(self.view)
        jobs = [(fam, i) for fam in FAMILIES for i in range(self.cfg.validation_per_family)]

        def run(job):
            fam, i = job
            inst = generate(fam, self.state.tier_of(fam), derive_seed(self.cfg.seed, "validation", k, fam, i))
            traj, ev = run_episode(
                self.agent(), inst, view, genome, self.box, 1, False,
                derive_seed(self.cfg.seed, "validation-agent", k, fam, i), self.cfg.max_steps,
            )
            return ValidationCase(fam, ev.passed, protocol_check(traj)[0])

        results = _map(run, jobs, 1 if self._shared is not None else self.cfg.workers)
        pair = PolicyPair(genome, view, objective_vector(genome, view, results), {"evaluation": k})
        self.archive.append(pair.to_record())
        incumbents = tuple(p for p in self.frontier if p.id != pair.id)
        self.frontier = enforce_cap(frontier_update(incumbents, pair), self.cfg.population_cap)

    def close(self) -> None:
        if self._shared is not None:
            self._shared.close()


def _map(fn, items: list, workers: int) -> list:
    if workers <= 1:
        return [fn(x) for x in items]
    with cf.ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def train(cfg: RunConfig, toolbox: Toolbox | None = None, genome: Genome | None = None, progress=None) -> TrainResult:
    """Run the closed loop; the returned summary equals ``rollup`` of the records."""
    tr = _Trainer(cfg, toolbox, genome)
    records, timings = [], []
    try:
        for idx in range(1, cfg.episodes + 1):
            family, tier, advanced = next_episode(tr.state)
            t0 = time.perf_counter()
            try:
                rec = tr.episode(idx, family, tier)
            except (GeneratorError, OSError) as exc:
                # infrastructure failure: logged, excluded, curriculum untouched
                rec = excluded_record(idx, family, tier, f"{type(exc).__name__}: {exc}", len(tr.frontier))
            else:
                tr.state = record_result(advanced, family, rec["passed"])
            if idx % cfg.reeval_every == 0 or idx == cfg.episodes:
                tr.validate()
                rec["frontier_size"] = len(tr.frontier)
            records.append(rec)
            timings.append({"episode": idx, "seconds": round(time.perf_counter() - t0, 6)})
            if progress is not None:
                progress(rec)
    finally:
        tr.close()
    summary = rollup(records, cfg.reuse_window)
    return TrainResult(cfg, records, summary, tr.box, tr.genome, tr.genomes, tr.frontier, tr.archive, timings)


def excluded_record(idx: int, family: str, tier: str, error: str, frontier_size: int) -> dict:
    return {
        "episode": idx,
        "task_kind": family,
        "difficulty": tier,
        "seed": None,
        "excluded": True,
        "error": error,
        "passed": False,
        "tool_used": None,
        "candidate_ran": False,
        "credit_assignment": None,
        "typed_missing_slots": [],
        "protocol_signature": "",
        "attempts": 0,
        "attempt_signatures": [],
        "protocol_ok": [],
        "episode_violations": [],
        "tool_calls": [],
        "tools_packaged": [],
        "accepted_mutations": 0,
        "genome_id": None,
        "frontier_size": frontier_size,
        "timing": {"steps": []},
    }


# ----------------------------------------------------------------------------
# rollup


class LogError(ValueError):
    pass


REQUIRED_FIELDS = (
    "episode", "task_kind", "difficulty", "passed", "excluded", "tool_used", "candidate_ran",
    "credit_assignment", "typed_missing_slots", "protocol_signature", "attempts", "protocol_ok",
    "tool_calls", "tools_packaged", "accepted_mutations", "frontier_size",
)


def read_log(path: str | Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogError(f"{path}:{n}: corrupt record: {exc.msg}") from None
            if not isinstance(rec, dict):
                raise LogError(f"{path}:{n}: record is not an object")
            missing = [k for k in REQUIRED_FIELDS if k not in rec]
            if missing:
                raise LogError(f"{path}:{n}: record missing fields {missing}")
            out.append(rec)
    return out


def rollup(records: Sequence[Mapping], window: int = REUSE_WINDOW) -> dict:
    """Recompute every summary statistic from raw episode records."""
    counted = [r for r in records if not r.get("excluded")]
    n = len(counted)
    attempts = [ok for r in counted for ok in r["protocol_ok"]]
    packaged = [t for r in records for t in r["tools_packaged"]]
    used = {t for r in counted for t in r["tool_calls"]}
    tiers = {t: 0 for t in TIERS}
    first_seen: dict[str, int | None] = {t: None for t in TIERS}
    fam_total, fam_pass = Counter(), Counter()
    routes = Counter()
    for r in counted:
        tiers[r["difficulty"]] += 1
        if first_seen[r["difficulty"]] is None:
            first_seen[r["difficulty"]] = r["episode"]
        fam_total[r["task_kind"]] += 1
        fam_pass[r["task_kind"]] += bool(r["passed"])
        if r["credit_assignment"]:
            routes[r["credit_assignment"]["route"]] += 1
    tail = counted[-window:]
    return {
        "counted_episodes": n,
        "excluded_episodes": len(records) - n,
        "cumulative_pass_rate": sum(bool(r["passed"]) for r in counted) / n if n else 0.0,
        "protocol_reliability": sum(attempts) / len(attempts) if attempts else 0.0,
        "accepted_instruction_mutations": sum(r["accepted_mutations"] for r in records),
        "packaged_tools": len(packaged),
        "used_tools": len(used),
        "activation_rate": len(set(packaged) & used) / len(set(packaged)) if packaged else 0.0,
        "run_tool_calls": sum(len(r["tool_calls"]) for r in counted),
        "rolling_reuse_rate": sum(bool(r["tool_calls"]) for r in tail) / len(tail) if tail else 0.0,
        "reuse_window": window,
        "frontier_size": records[-1]["frontier_size"] if records else 0,
        "attempts_per_episode": sum(r["attempts"] for r in counted) / n if n else 0.0,
        "tier_episode_counts": tiers,
        "first_seen_episode": first_seen,
        "family_pass_rates": {f: fam_pass[f] / fam_total[f] for f in FAMILIES if fam_total[f]},
        "route_counts": {k: routes[k] for k in sorted(routes)},
    }


# ----------------------------------------------------------------------------
# artifacts


def write_artifacts(result: TrainResult, out: str | Path) -> dict[str, Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "episodes": out / "episodes.jsonl",
        "timings": out / "timings.jsonl",
        "toolbox": out / "toolbox.json",
        "genomes": out / "genomes.json",
        "frontier": out / "frontier.json",
        "pair": out / "pair.json",
        "summary": out / "summary.json",
        "config": out / "config.json",
    }
    paths["episodes"].write_bytes(result.log_bytes())
    paths["timings"].write_text("".join(dumps_record(t) + "\n" for t in result.timings))
    paths["toolbox"].write_text(result.toolbox.dump() + "\n")
    genomes = {"genomes": [g.to_record() for g in result.genomes.values()], "current": result.genome.id}
    paths["genomes"].write_text(json.dumps(genomes, indent=1, sort_keys=True) + "\n")
    frontier = {
        "members": [p.to_record() for p in result.frontier],
        "archive": result.archive,
        "selected": result.selected.id if result.selected else None,
    }
    paths["frontier"].write_text(json.dumps(frontier, indent=1, sort_keys=True) + "\n")
    if result.selected is not None:
        paths["pair"].write_text(json.dumps(result.selected.to_record(), indent=1, sort_keys=True) + "\n")
    paths["summary"].write_text(json.dumps(result.summary, indent=1, sort_keys=True) + "\n")
    paths["config"].write_text(json.dumps(result.config.to_record(), indent=1, sort_keys=True) + "\n")
    return paths


# ----------------------------------------------------------------------------
# benchmarks and frozen evaluation


class BenchmarkError(ValueError):
    pass


def make_benchmark(
    families: Iterable[str] = FAMILIES,
    tiers: Iterable[str] = ("D1",),
    per_family: int = 1,
    seed: int = DEFAULT_SEED,
) -> list[StructuredTask]:
    out = []
    for fam in families:
        for tier in tiers:
            for i in range(per_family):
                out.append(generate(fam, tier, derive_seed("benchmark", seed, fam, tier, i)).task)
    return out


def write_benchmark(tasks: Iterable[StructuredTask], path: str | Path) -> None:
    Path(path).write_text("".join(dumps_record(to_record(t)) + "\n" for t in tasks))


def read_benchmark(path: str | Path) -> list[StructuredTask]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(from_record(json.loads(line)))
            except Exception as exc:  # bad JSON or bad task: both abort with location
                raise BenchmarkError(f"{path}:{n}: {type(exc).__name__}: {exc}") from None
    return out


def load_pair(path_or_record: str | Path | Mapping) -> PolicyPair:
    if isinstance(path_or_record, Mapping):
        return PolicyPair.from_record(path_or_record)
    try:
        return PolicyPair.from_record(json.loads(Path(path_or_record).read_text()))
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise BenchmarkError(f"{path_or_record}: bad pair manifest: {exc}") from None


def evaluate(
    pair: PolicyPair,
    toolbox: Toolbox,
    cases: Sequence[StructuredTask],
    agent: str = "oracle",
    workers: int = 1,
    seed: int = DEFAULT_SEED,
) -> dict:
    """One attempt per case with a frozen pair: no proposals, no updates, no reuse accounting."""
    cfg = AgentConfig.parse(agent)
    shared = make_agent(cfg) if cfg.kind == "external" else None
    view = frozenset(t for t in pair.view if t in toolbox)

    def run(job):
        i, task = job
        inst = TaskInstance(task, verbalize(task), None)
        traj, ev = run_episode(
            shared or make_agent(cfg), inst, view, pair.genome, toolbox, 1, False, derive_seed("eval", seed, i)
        )
        return task.family, ev.passed, protocol_check(traj)[0]

    try:
        rows = _map(run, list(enumerate(cases)), 1 if shared else workers)
    finally:
        if shared is not None:
            shared.close()
    per: dict[str, dict[str, Any]] = {}
    for fam, ok, _ in rows:
        d = per.setdefault(fam, {"cases": 0, "passed": 0})
        d["cases"] += 1
        d["passed"] += ok
    for d in per.values():
        d["pass_rate"] = d["passed"] / d["cases"]
    n = len(rows)
    return {
        "cases": n,
        "passed": sum(ok for _, ok, _ in rows),
        "pass_rate": sum(ok for _, ok, _ in rows) / n if n else 0.0,
        "protocol_reliability": sum(p for _, _, p in rows) / n if n else 0.0,
        "per_kind": {f: per[f] for f in sorted(per)},
    }


__all__ = [
    "BenchmarkError",
    "DEFAULT_SEED",
    "LogError",
    "RunConfig",
    "TrainResult",
    "evaluate",
    "load_pair",
    "make_benchmark",
    "read_benchmark",
    "read_log",
    "rollup",
    "stock_toolbox",
    "train",
    "write_artifacts",
    "write_benchmark",
]
