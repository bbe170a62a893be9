"""Structured answer checking and hidden-probe acceptance for tool bodies.

``verify`` never looks at statement text: it receives the canonical task
and a structured answer and recomputes the optimum through the reference
solvers. Every failure is reported as evidence, never raised.
"""
from __future__ import annotations

import concurrent.futures as cf
from dataclasses import dataclass
from typing import Any, Callable, Mapping

from .core import (
    Answer,
    StructuredTask,
    edge_key,
    task_exactness,
    task_input,
)
from .solvers import INFEASIBLE, SOLVED, solve, tour_cost, undirected_adjacency, usable_arcs

PROBE_TIMEOUT_S = 5.0
DEFAULT_PROBES = 2


@dataclass(frozen=True)
class HiddenTestReport:
    probes_run: int
    probes_passed: int
    messages: tuple[str, ...] = ()
    seeds: tuple[int, ...] = ()

    @property
    def all_passed(self) -> bool:
        return self.probes_run > 0 and self.probes_passed == self.probes_run

    def to_record(self) -> dict:
        return {
            "probes_run": self.probes_run,
            "probes_passed": self.probes_passed,
            "messages": list(self.messages),
            "seeds": list(self.seeds),
        }


@dataclass(frozen=True)
class VerifierEvidence:
    passed: bool
    schema_valid: bool
    feasible: bool
    exactness_residual: int
    hidden_test_report: HiddenTestReport | None = None
    error_messages: tuple[str, ...] = ()
    missing_slots: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.passed and not (self.schema_valid and self.feasible and self.exactness_residual == 0):
            raise ValueError("passed evidence must be schema-valid, feasible and exact")
        if self.missing_slots and self.schema_valid:
            raise ValueError("evidence with missing slots cannot be schema-valid")

    def to_record(self) -> dict:
        return {
            "passed": self.passed,
            "schema_valid": self.schema_valid,
            "feasible": self.feasible,
            "exactness_residual": self.exactness_residual,
            "hidden_test_report": self.hidden_test_report.to_record() if self.hidden_test_report else None,
            "error_messages": list(self.error_messages),
            "missing_slots": list(self.missing_slots),
        }


def failed_evidence(message: str, missing: tuple[str, ...] = ()) -> VerifierEvidence:
    return VerifierEvidence(False, False, False, 1, None, (message,), missing)


# ----------------------------------------------------------------------------
# witness shapes

_WITNESS_KEYS = {
    "shortest_path": ("path",),
    "tsp": ("tour",),
    "hamilton": ("path",),
    "coloring": ("colors",),
    "vertex_cover": ("cover",),
    "mst": ("edges",),
    "max_flow": ("flow",),
    "bipartite_matching": ("matching",),
    "topological_sort": ("order",),
    "scc": ("components",),
    "bridges": ("bridges",),
    "triangle_max_sum": ("triangle",),
    "common_neighbors": ("nodes",),
    "gnn_sum": ("states",),
}
_INT_VALUED = {
    "shortest_path", "shortest_path_cost", "tsp", "coloring", "vertex_cover", "mst", "max_flow",
    "bipartite_matching", "scc", "bridges", "triangle_max_sum", "common_neighbors",
}
_BOOL_VALUED = {"hamilton", "connectivity", "cycle", "bipartite_check", "substructure"}


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _node_list(x, nodes: set[str]) -> bool:
    return isinstance(x, list) and all(isinstance(v, str) and v in nodes for v in x)


def _pair_list(x, nodes: set[str]) -> bool:
    return isinstance(x, list) and all(
        isinstance(p, list) and len(p) == 2 and all(isinstance(v, str) and v in nodes for v in p) for p in x
    )


def _steps_ok(task: StructuredTask, seq: list[str], respect_blocked: bool) -> bool:
    if respect_blocked:
        arcs = usable_arcs(task)
        nbrs = {u: {v for v, _ in outs} for u, outs in arcs.items()}
    else:
        adj = task.graph.adjacency()
        nbrs = {u: set(vs) for u, vs in adj.items()}
    return all(b in nbrs[a] for a, b in zip(seq, seq[1:]))


def _path_cost(task: StructuredTask, seq: list[str]) -> int:
    arcs = {u: dict(outs) for u, outs in usable_arcs(task).items()}
    return sum(arcs[a][b] for a, b in zip(seq, seq[1:]))


def validate_witness(family: str, witness: Any, task: StructuredTask) -> tuple[bool, str]:
    """Structural validity of a witness (no optimality check)."""
    g = task.graph
    nodes = set(g.nodes)
    if family != task.family:
        return False, f"witness family {family} does not match task family {task.family}"
    if not isinstance(witness, Mapping):
        return False, "witness must be an object"
    q = task.query
    if family == "shortest_path" or (family == "connectivity" and "path" in witness):
        path = witness.get("path")
        if not _node_list(path, nodes) or not path:
            return False, "malformed path"
        if path[0] != q.source or path[-1] != q.target:
            return False, "missing endpoint"
        if len(set(path)) != len(path):
            return False, "invalid path: repeated node"
        if not _steps_ok(task, path, respect_blocked=family == "shortest_path"):
            return False, "invalid path: non-edge step"
        return True, ""
    if family == "connectivity":
        comp = witness.get("component")
        if not _node_list(comp, nodes):
            return False, "witness needs a path or a component"
        cset = set(comp)
        if q.source not in cset:
            return False, "component must contain the source"
        if q.target in cset:
            return False, "component contains the target"
        adj = g.adjacency()
        if any(v not in cset for u in cset for v in adj[u]):
            return False, "component is not closed under edges"
        return True, ""
    if family == "tsp":
        tour = witness.get("tour")
        if not _node_list(tour, nodes):
            return False, "malformed tour"
        if len(set(tour)) != len(tour):
            return False, "Repeated node"
        if set(tour) != nodes:
            return False, "tour misses a node"
        if q.start is not None and tour[0] != q.start:
            return False, f"tour must start at {q.start}"
        if tour_cost(task, tour) is None:
            return False, "non-edge step"
        return True, ""
    if family == "hamilton":
        path = witness.get("path")
        if not _node_list(path, nodes):
            return False, "malformed path"
        if len(set(path)) != len(path):
            return False, "Repeated node"
        if set(path) != nodes:
            return False, "path misses a node"
        if not _steps_ok(task, path, respect_blocked=False):
            return False, "non-edge step"
        return True, ""
    if family == "coloring":
        colors = witness.get("colors")
        if not isinstance(colors, Mapping) or set(colors) != nodes or not all(_is_int(c) and c >= 0 for c in colors.values()):
            return False, "color map must assign a non-negative integer to every node"
        for e in g.edges:
            if colors[e.u] == colors[e.v]:
                return False, f"invalid color assignment on edge {e.u}-{e.v}"
        return True, ""
    if family == "vertex_cover":
        cover = witness.get("cover")
        if not _node_list(cover, nodes) or len(set(cover)) != len(cover):
            return False, "malformed cover"
        cset = set(cover)
        for e in g.edges:
            if e.u not in cset and e.v not in cset:
                return False, f"uncovered edge {e.u}-{e.v}"
        return True, ""
    if family == "mst":
        edges = witness.get("edges")
        if not _pair_list(edges, nodes):
            return False, "malformed edge list"
        keys = [edge_key(u, v, False) for u, v in edges]
        if len(set(keys)) != len(keys):
            return False, "repeated tree edge"
        if any(g.get_edge(u, v) is None and g.get_edge(v, u) is None for u, v in keys):
            return False, "tree uses a non-edge"
        if len(keys) != len(nodes) - 1:
            return False, "spanning tree must have n-1 edges"
        parent = {n: n for n in nodes}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for u, v in keys:
            ru, rv = find(u), find(v)
            if ru == rv:
                return False, "tree contains a cycle"
            parent[ru] = rv
        return True, ""
    if family == "max_flow":
        flow = witness.get("flow")
        if not isinstance(flow, list):
            return False, "malformed flow"
        net = {n: 0 for n in nodes}
        seen = set()
        for item in flow:
            if not (isinstance(item, list) and len(item) == 3 and item[0] in nodes and item[1] in nodes and _is_int(item[2])):
                return False, "malformed flow entry"
            u, v, f = item
            e = g.get_edge(u, v) if g.directed else (g.get_edge(u, v) or g.get_edge(v, u))
            if e is None:
                return False, f"flow on a non-edge {u}-{v}"
            key = (e.u, e.v)
            if key in seen:
                return False, f"edge {u}-{v} listed twice"
            seen.add(key)
            if f < 0 or f > (e.capacity or 0):
                return False, f"capacity violation on {u}-{v}"
            net[u] -= f
            net[v] += f
        for n in nodes:
            if n not in (q.source, q.target) and net[n] != 0:
                return False, f"flow conservation violated at {n}"
        return True, ""
    if family == "bipartite_matching":
        matching = witness.get("matching")
        if not _pair_list(matching, nodes):
            return False, "malformed matching"
        used: set[str] = set()
        for u, v in matching:
            if not g.has_edge(u, v) and not g.has_edge(v, u):
                return False, f"unmatched edge {u}-{v} is not in the graph"
            labels = {g.attr(u).label, g.attr(v).label}
            if None not in labels and labels != {"L", "R"}:
                return False, f"edge {u}-{v} does not cross the bipartition"
            if u in used or v in used:
                return False, "node matched twice"
            used |= {u, v}
        return True, ""
    if family == "topological_sort":
        order = witness.get("order")
        if not _node_list(order, nodes) or len(set(order)) != len(order) or set(order) != nodes:
            return False, "order must list every node once"
        pos = {v: i for i, v in enumerate(order)}
        for e in g.edges:
            if pos[e.u] > pos[e.v] or not g.directed:
                return False, f"order violates edge {e.u}->{e.v}"
        return True, ""
    if family == "scc":
        comps = witness.get("components")
        if not isinstance(comps, list) or not all(_node_list(c, nodes) and c for c in comps):
            return False, "malformed components"
        flat = [v for c in comps for v in c]
        if len(flat) != len(set(flat)) or set(flat) != nodes:
            return False, "components must partition the nodes"
        return True, ""
    if family == "bridges":
        br = witness.get("bridges")
        if not _pair_list(br, nodes):
            return False, "malformed bridge list"
        if any(not g.has_edge(u, v) and not g.has_edge(v, u) for u, v in br):
            return False, "bridge is not an edge"
        return True, ""
    if family == "cycle":
        cyc = witness.get("cycle")
        if not _node_list(cyc, nodes) or len(cyc) < 3 or cyc[0] != cyc[-1]:
            return False, "cycle must be a closed node sequence"
        body = cyc[:-1]
        if len(set(body)) != len(body):
            return False, "Repeated node"
        if not g.directed and len(body) < 3:
            return False, "undirected cycle needs three nodes"
        if not _steps_ok(task, cyc, respect_blocked=False):
            return False, "non-edge step"
        return True, ""
    if family == "bipartite_check":
        if "coloring" in witness:
            col = witness["coloring"]
            if not isinstance(col, Mapping) or set(col) != nodes or not all(c in (0, 1) and _is_int(c) for c in col.values()):
                return False, "2-coloring must map every node to 0 or 1"
            for e in g.edges:
                if col[e.u] == col[e.v]:
                    return False, f"invalid color assignment on edge {e.u}-{e.v}"
            return True, ""
        cyc = witness.get("odd_cycle")
        if not _node_list(cyc, nodes) or len(cyc) < 4 or cyc[0] != cyc[-1]:
            return False, "witness needs a coloring or a closed odd cycle"
        body = cyc[:-1]
        if len(set(body)) != len(body) or len(body) % 2 == 0:
            return False, "odd cycle must be simple with odd length"
        adj = undirected_adjacency(g)
        if any(b not in adj[a] for a, b in zip(cyc, cyc[1:])):
            return False, "non-edge step"
        return True, ""
    if family == "triangle_max_sum":
        tri = witness.get("triangle")
        if not _node_list(tri, nodes) or len(set(tri)) != 3 or len(tri) != 3:
            return False, "triangle must name three distinct nodes"
        adj = undirected_adjacency(g)
        a, b, c = tri
        if b not in adj[a] or c not in adj[a] or c not in adj[b]:
            return False, "nodes do not form a triangle"
        return True, ""
    if family == "common_neighbors":
        got = witness.get("nodes")
        if not _node_list(got, nodes) or len(set(got)) != len(got):
            return False, "malformed node set"
        return True, ""
    if family == "substructure":
        mapping = witness.get("mapping")
        pattern = q.pattern
        if pattern is None:
            return False, "task has no pattern"
        if not isinstance(mapping, Mapping) or set(mapping) != set(pattern.nodes):
            return False, "mapping must cover every pattern node"
        if not all(isinstance(v, str) and v in nodes for v in mapping.values()):
            return False, "mapping targets unknown host nodes"
        if len(set(mapping.values())) != len(mapping):
            return False, "mapping is not injective"
        for e in pattern.edges:
            hu, hv = mapping[e.u], mapping[e.v]
            ok = g.has_edge(hu, hv) if g.directed else (g.has_edge(hu, hv) or g.has_edge(hv, hu))
            if not ok:
                return False, f"pattern edge {e.u}-{e.v} is not preserved"
        return True, ""
    if family == "gnn_sum":
        states = witness.get("states")
        if not isinstance(states, Mapping) or set(states) != nodes:
            return False, "states must cover every node"
        dim = len(next(iter(g.node_attrs.values())).embedding or ()) if g.node_attrs else 0
        for v in states.values():
            if not isinstance(v, list) or len(v) != dim or not all(_is_int(x) for x in v):
                return False, "state vectors must be integer lists of the embedding length"
        return True, ""
    return False, f"no witness rule for family {family}"


# ----------------------------------------------------------------------------
# verify


def _schema(answer: Answer, task: StructuredTask) -> tuple[list[str], list[str]]:
    """(missing answer slots, shape errors)."""
    fam = task.family
    missing, errors = [], []
    if answer.family != fam:
        errors.append(f"answer family {answer.family!r} does not match task family {fam}")
    if answer.claims_infeasible:
        return missing, errors
    if fam in _INT_VALUED:
        if answer.value is None:
            missing.append("answer.value")
        elif not _is_int(answer.value):
            errors.append("answer value must be an integer")
    elif fam in _BOOL_VALUED:
        if answer.value is None:
            missing.append("answer.value")
        elif not isinstance(answer.value, bool):
            errors.append("answer value must be a boolean")
    keys = _WITNESS_KEYS.get(fam, ())
    w = answer.witness
    if keys:
        if not isinstance(w, Mapping):
            missing.extend(f"answer.witness.{k}" for k in keys)
        else:
            missing.extend(f"answer.witness.{k}" for k in keys if k not in w)
    return missing, errors


def _bool_witness_needed(fam: str, value: bool) -> tuple[str, ...]:
    if fam == "connectivity":
        return ("path",) if value else ("component",)
    if fam == "cycle":
        return ("cycle",) if value else ()
    if fam == "bipartite_check":
        return ("coloring",) if value else ("odd_cycle",)
    if fam == "substructure":
        return ("mapping",) if value else ()
    return ()


def verify(answer: Answer | Mapping | None, task: StructuredTask) -> VerifierEvidence:
    if answer is None:
        return failed_evidence("no answer produced", ("answer.value",))
    if isinstance(answer, Mapping):
        answer = Answer.from_record(answer)
    if not isinstance(answer, Answer):
        return failed_evidence("answer is not a structured object")
    fam = task.family
    missing, errors = _schema(answer, task)
    ref = solve(task)
    if ref.status not in (SOLVED, INFEASIBLE):
        return VerifierEvidence(False, not (missing or errors), False, 1, None, ("reference solver out of exact range", *errors), tuple(missing))
    if missing or errors:
        return VerifierEvidence(False, False, False, 1, None, tuple(errors + [f"missing {m}" for m in missing]), tuple(missing))
    # infeasibility claims
    if ref.status == INFEASIBLE:
        if answer.claims_infeasible:
            return VerifierEvidence(True, True, True, 0)
        return VerifierEvidence(False, True, False, 1, None, ("instance is infeasible but an answer was claimed",))
    if answer.claims_infeasible:
        return VerifierEvidence(False, True, False, 1, None, ("claimed infeasible but a solution exists",))

    exactness = task_exactness(task)
    opt = ref.answer
    w = answer.witness if isinstance(answer.witness, Mapping) else {}

    if fam in _BOOL_VALUED:
        residual = int(answer.value != opt.value)
        if residual:
            return VerifierEvidence(False, True, True, 1, None, (f"wrong boolean answer: expected {opt.value}",))
        need = _bool_witness_needed(fam, answer.value) if fam != "hamilton" else ("path",)
        absent = tuple(f"answer.witness.{k}" for k in need if k not in w)
        if absent:
            return VerifierEvidence(False, False, False, 0, None, tuple(f"missing {a}" for a in absent), absent)
        if need:
            ok, msg = validate_witness(fam, w, task)
            if not ok:
                return VerifierEvidence(False, True, False, 0, None, (msg,))
        return VerifierEvidence(True, True, True, 0)

    ok, msg = (True, "")
    if fam in _WITNESS_KEYS:
        ok, msg = validate_witness(fam, w, task)
        if not ok:
            return VerifierEvidence(False, True, False, _residual(answer.value, opt.value), None, (msg,))

    if fam == "gnn_sum":
        diff = sum(1 for n, v in opt.witness["states"].items() if w["states"].get(n) != v)
        if diff:
            return VerifierEvidence(False, True, True, diff, None, (f"{diff} final states differ",))
        return VerifierEvidence(True, True, True, 0)
    if fam == "topological_sort":
        return VerifierEvidence(True, True, True, 0)

    # the claimed value must agree with the witness it came with
    implied = _implied_value(fam, w, task)
    if implied is not None and implied != answer.value:
        return VerifierEvidence(False, True, False, abs(answer.value - implied), None, (f"claimed value {answer.value} disagrees with witness ({implied})",))

    if fam in ("scc", "bridges", "common_neighbors"):
        key = {"scc": "components", "bridges": "bridges", "common_neighbors": "nodes"}[fam]
        if _set_form(fam, w[key]) != _set_form(fam, opt.witness[key]):
            return VerifierEvidence(False, True, False, _residual(answer.value, opt.value), None, (f"{key} differ from the reference",))

    c = task.constraints
    if fam == "tsp" and c.max_cost is not None and answer.value > c.max_cost:
        return VerifierEvidence(False, True, False, answer.value - c.max_cost, None, ("tour exceeds max_cost",))
    if fam == "coloring" and c.max_colors is not None and answer.value > c.max_colors:
        return VerifierEvidence(False, True, False, answer.value - c.max_colors, None, ("coloring exceeds max_colors",))
    if fam == "vertex_cover" and c.max_size is not None and answer.value > c.max_size:
        return VerifierEvidence(False, True, False, answer.value - c.max_size, None, ("cover exceeds max_size",))

    if exactness in ("feasible", "feasible_large"):
        return VerifierEvidence(True, True, True, 0)
    residual = _residual(answer.value, opt.value)
    if residual:
        label = {"shortest_path": "wrong distance", "shortest_path_cost": "wrong distance"}.get(fam, "not optimal")
        return VerifierEvidence(False, True, True, residual, None, (f"{label}: claimed {answer.value}, optimum {opt.value}",))
    return VerifierEvidence(True, True, True, 0)


def _residual(claimed, optimum) -> int:
    if _is_int(claimed) and _is_int(optimum):
        return abs(claimed - optimum)
    return int(claimed != optimum)


def _set_form(fam: str, items) -> Any:
    if fam == "scc":
        return frozenset(frozenset(c) for c in items)
    if fam == "bridges":
        return frozenset(frozenset(p) for p in items)
    return frozenset(items)


def _implied_value(fam: str, w: Mapping, task: StructuredTask) -> int | None:
    if fam == "shortest_path":
        return _path_cost(task, w["path"])
    if fam == "tsp":
        return tour_cost(task, w["tour"])
    if fam == "coloring":
        return len(set(w["colors"].values()))
    if fam == "vertex_cover":
        return len(w["cover"])
    if fam == "mst":
        g = task.graph
        return sum((g.get_edge(u, v) or g.get_edge(v, u)).weight or 0 for u, v in w["edges"])
    if fam == "max_flow":
        s = task.query.source
        return sum(f for u, v, f in w["flow"] if u == s) - sum(f for u, v, f in w["flow"] if v == s)
    if fam == "bipartite_matching":
        return len(w["matching"])
    if fam == "scc":
        return len(w["components"])
    if fam == "bridges":
        return len(w["bridges"])
    if fam == "triangle_max_sum":
        return sum(task.graph.attr(x).weight or 0 for x in w["triangle"])
    if fam == "common_neighbors":
        return len(w["nodes"])
    return None


# ----------------------------------------------------------------------------
# hidden probes

Body = Callable[[Mapping], Any]


def run_with_timeout(body: Body, payload: Mapping, timeout: float = PROBE_TIMEOUT_S) -> tuple[Any, str | None]:
    """Run ``body(payload)`` in a worker thread; returns (output, error message)."""
    pool = cf.ThreadPoolExecutor(max_workers=1)
    fut = pool.submit(body, payload)
    try:
        return fut.result(timeout=timeout), None
    except cf.TimeoutError:
        return None, f"timeout after {timeout:g}s"
    except Exception as exc:  # candidate crashes are evidence, not harness failures
        return None, f"{type(exc).__name__}: {exc}"
    finally:
        pool.shutdown(wait=False, cancel_futures=True)


def as_answer(output: Any, family: str) -> Answer | None:
    if isinstance(output, Answer):
        return output
    if isinstance(output, Mapping) and ("value" in output or "witness" in output):
        rec = dict(output)
        rec.setdefault("family", family)
        return Answer.from_record(rec)
    return None


PROBE_ATTEMPTS = 24


def probe_seed(run_seed: int, tool_id: str, probe_index: int, attempt: int = 0) -> int:
    """Hidden-probe seed; the "probe" domain tag keeps it disjoint from training seeds."""
    from .forge.generate import derive_seed

    return derive_seed("probe", run_seed, tool_id, probe_index, attempt)


def probe_candidate(
    candidate: Body,
    family: str,
    niche,
    n_probes: int = DEFAULT_PROBES,
    run_seed: int = 0,
    tool_id: str = "candidate",
    timeout: float = PROBE_TIMEOUT_S,
) -> HiddenTestReport:
    """Run the candidate on fresh instances of its niche and verify each output."""
    from .forge.generate import generate
    from .niche import niche_key

    passed, messages, seeds = 0, [], []
    for i in range(n_probes):
        # prefer an instance whose niche matches exactly; otherwise keep the last one at that tier
        for attempt in range(PROBE_ATTEMPTS):
            inst = generate(family, niche.tier, probe_seed(run_seed, tool_id, i, attempt))
            if niche_key(inst.task) == niche:
                break
        seeds.append(inst.task.seed)
        out, err = run_with_timeout(candidate, task_input(inst.task), timeout)
        if err is not None:
            messages.append(f"probe {i}: {err}")
            continue
        ans = as_answer(out, family)
        ev = verify(ans, inst.task)
        if ev.passed:
            passed += 1
        else:
            messages.append(f"probe {i}: " + "; ".join(ev.error_messages or ("failed",)))
    return HiddenTestReport(n_probes, passed, tuple(messages), tuple(seeds))
