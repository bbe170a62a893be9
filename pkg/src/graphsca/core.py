"""Value types for graphs, canonical task objects, typed interfaces and answers.

Everything here is an immutable value. Graph edges are normalized at
construction (undirected edges oriented by node order, edge lists sorted)
so dataclass equality coincides with canonical-serialization equality.
Records (plain dicts) are the wire shape; ``to_record``/``from_record``
convert between the two.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

FAMILIES: tuple[str, ...] = (
    "shortest_path",
    "shortest_path_cost",
    "tsp",
    "hamilton",
    "coloring",
    "vertex_cover",
    "mst",
    "max_flow",
    "bipartite_matching",
    "topological_sort",
    "scc",
    "bridges",
    "connectivity",
    "cycle",
    "bipartite_check",
    "triangle_max_sum",
    "common_neighbors",
    "substructure",
    "gnn_sum",
)
TIERS: tuple[str, ...] = ("D1", "D2", "D3", "D4")
EXACTNESS_TAGS = ("exact", "exact_small", "exact_medium", "feasible", "feasible_large", "boolean_with_witness")
# Present in the three-regime taxonomy but never assigned to a family.
UNUSED_EXACTNESS = ("approximate",)
AGGREGATIONS = ("sum",)


class GraphError(ValueError):
    """A graph, query or constraint violates a structural invariant."""


class UnknownFamilyError(KeyError):
    pass


_NUM = re.compile(r"(\d+)")


def node_key(node: str) -> tuple:
    """Natural sort key: ``n2`` sorts before ``n10``."""
    parts = _NUM.split(node)
    return tuple((0, int(p)) if p.isdigit() else (1, p) for p in parts if p != "")


def sort_nodes(nodes: Iterable[str]) -> list[str]:
    return sorted(nodes, key=node_key)


def edge_key(u: str, v: str, directed: bool) -> tuple[str, str]:
    if directed or node_key(u) <= node_key(v):
        return (u, v)
    return (v, u)


# ----------------------------------------------------------------------------
# graphs


@dataclass(frozen=True)
class Edge:
    u: str
    v: str
    weight: int | None = None
    capacity: int | None = None

    def pair(self) -> tuple[str, str]:
        return (self.u, self.v)


@dataclass(frozen=True)
class NodeAttr:
    label: str | None = None
    weight: int | None = None
    embedding: tuple[int, ...] | None = None


def _is_int(x: Any) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


@dataclass(frozen=True)
class Graph:
    nodes: tuple[str, ...]
    edges: tuple[Edge, ...] = ()
    directed: bool = False
    node_attrs: Mapping[str, NodeAttr] = field(default_factory=dict)

    def __post_init__(self) -> None:
        nodes = tuple(sort_nodes(self.nodes))
        if len(set(nodes)) != len(nodes):
            raise GraphError("duplicate node identifiers")
        for n in nodes:
            if not isinstance(n, str) or not n:
                raise GraphError(f"node id must be a non-empty string: {n!r}")
        nodeset = set(nodes)
        seen: set[tuple[str, str]] = set()
        normalized = []
        for e in self.edges:
            if e.u not in nodeset or e.v not in nodeset:
                raise GraphError(f"edge endpoint not in nodes: {e.u}-{e.v}")
            if e.u == e.v:
                raise GraphError(f"self-loop on {e.u}")
            if e.weight is not None and (not _is_int(e.weight) or e.weight < 0):
                raise GraphError(f"weight must be a non-negative integer: {e.weight!r}")
            if e.capacity is not None and (not _is_int(e.capacity) or e.capacity <= 0):
                raise GraphError(f"capacity must be a positive integer: {e.capacity!r}")
            key = edge_key(e.u, e.v, self.directed)
            if key in seen:
                raise GraphError(f"duplicate edge {key[0]}-{key[1]}")
            seen.add(key)
            normalized.append(Edge(key[0], key[1], e.weight, e.capacity))
        if normalized:
            for attr in ("weight", "capacity"):
                present = [getattr(e, attr) is not None for e in normalized]
                if any(present) and not all(present):
                    raise GraphError(f"edge {attr}s must be homogeneous")
        normalized.sort(key=lambda e: (node_key(e.u), node_key(e.v)))
        attrs = {}
        for n, a in dict(self.node_attrs).items():
            if n not in nodeset:
                raise GraphError(f"node attribute for unknown node {n}")
            if a.embedding is not None:
                a = NodeAttr(a.label, a.weight, tuple(a.embedding))
            attrs[n] = a
        attrs = {n: attrs[n] for n in sort_nodes(attrs)}
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", tuple(normalized))
        object.__setattr__(self, "node_attrs", attrs)

    # convenience -----------------------------------------------------------
    @property
    def weighted(self) -> bool:
        return bool(self.edges) and self.edges[0].weight is not None

    @property
    def capacitated(self) -> bool:
        return bool(self.edges) and self.edges[0].capacity is not None

    def has_edge(self, u: str, v: str) -> bool:
        return self.get_edge(u, v) is not None

    def get_edge(self, u: str, v: str) -> Edge | None:
        return self._edge_index().get(edge_key(u, v, self.directed))

    def _edge_index(self) -> dict[tuple[str, str], Edge]:
        idx = self.__dict__.get("_eidx")
        if idx is None:
            idx = {(e.u, e.v): e for e in self.edges}
            object.__setattr__(self, "_eidx", idx)
        return idx

    def adjacency(self) -> dict[str, list[str]]:
        """Out-neighbors (all neighbors when undirected), node-ordered."""
        adj: dict[str, list[str]] = {n: [] for n in self.nodes}
        for e in self.edges:
            adj[e.u].append(e.v)
            if not self.directed:
                adj[e.v].append(e.u)
        for n in adj:
            adj[n].sort(key=node_key)
        return adj

    def density(self) -> float:
        n = len(self.nodes)
        if n < 2:
            return 0.0
        possible = n * (n - 1) if self.directed else n * (n - 1) // 2
        return len(self.edges) / possible

    def attr(self, node: str) -> NodeAttr:
        return self.node_attrs.get(node, NodeAttr())


@dataclass(frozen=True)
class Query:
    source: str | None = None
    target: str | None = None
    start: str | None = None
    pair: tuple[str, str] | None = None
    pattern: Graph | None = None
    rounds: int | None = None
    aggregation: str | None = None

    def __post_init__(self) -> None:
        if self.pair is not None:
            object.__setattr__(self, "pair", tuple(self.pair))


@dataclass(frozen=True)
class ConstraintSet:
    blocked_edges: tuple[tuple[str, str], ...] | None = None
    max_cost: int | None = None
    max_colors: int | None = None
    max_size: int | None = None

    def active(self) -> list[str]:
        return [k for k in ("blocked_edges", "max_cost", "max_colors", "max_size") if getattr(self, k) is not None]


@dataclass(frozen=True)
class StructuredTask:
    family: str
    difficulty: str
    seed: int
    graph: Graph
    query: Query = field(default_factory=Query)
    constraints: ConstraintSet = field(default_factory=ConstraintSet)

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise UnknownFamilyError(self.family)
        if self.difficulty not in TIERS:
            raise GraphError(f"unknown difficulty {self.difficulty!r}")
        nodes = set(self.graph.nodes)
        q = self.query
        for slot in ("source", "target", "start"):
            val = getattr(q, slot)
            if val is not None and val not in nodes:
                raise GraphError(f"query.{slot} references unknown node {val}")
        if q.pair is not None and any(p not in nodes for p in q.pair):
            raise GraphError("query.pair references unknown node")
        c = self.constraints
        if c.blocked_edges is not None:
            norm = sorted(
                {edge_key(u, v, self.graph.directed) for u, v in c.blocked_edges},
                key=lambda p: (node_key(p[0]), node_key(p[1])),
            )
            for u, v in norm:
                if u not in nodes or v not in nodes:
                    raise GraphError(f"blocked edge {u}-{v} references unknown node")
            object.__setattr__(self, "constraints", ConstraintSet(tuple(norm), c.max_cost, c.max_colors, c.max_size))

    @property
    def n(self) -> int:
        return len(self.graph.nodes)

    def blocked(self) -> set[tuple[str, str]]:
        return set(self.constraints.blocked_edges or ())

    def is_blocked(self, u: str, v: str) -> bool:
        if not self.constraints.blocked_edges:
            return False
        return edge_key(u, v, self.graph.directed) in self.blocked()


# ----------------------------------------------------------------------------
# records


def graph_to_record(g: Graph) -> dict:
    edges = []
    for e in g.edges:
        rec: dict[str, Any] = {"u": e.u, "v": e.v}
        if e.weight is not None:
            rec["weight"] = e.weight
        if e.capacity is not None:
            rec["capacity"] = e.capacity
        edges.append(rec)
    out: dict[str, Any] = {"nodes": list(g.nodes), "edges": edges, "directed": g.directed}
    attrs = {}
    for n, a in g.node_attrs.items():
        rec = {}
        if a.label is not None:
            rec["label"] = a.label
        if a.weight is not None:
            rec["weight"] = a.weight
        if a.embedding is not None:
            rec["embedding"] = list(a.embedding)
        if rec:
            attrs[n] = rec
    if attrs:
        out["node_attrs"] = attrs
    return out


def graph_from_record(rec: Mapping) -> Graph:
    if not isinstance(rec, Mapping):
        raise GraphError("graph record must be an object")
    edges = []
    for e in rec.get("edges", []):
        if isinstance(e, Mapping):
            edges.append(Edge(e["u"], e["v"], e.get("weight"), e.get("capacity")))
        else:
            u, v, *rest = e
            edges.append(Edge(u, v, rest[0] if rest else None))
    attrs = {}
    for n, a in (rec.get("node_attrs") or {}).items():
        emb = a.get("embedding")
        attrs[n] = NodeAttr(a.get("label"), a.get("weight"), tuple(emb) if emb is not None else None)
    return Graph(tuple(rec.get("nodes", ())), tuple(edges), bool(rec.get("directed", False)), attrs)


def query_to_record(q: Query) -> dict:
    out: dict[str, Any] = {}
    for k in ("source", "target", "start", "rounds", "aggregation"):
        if getattr(q, k) is not None:
            out[k] = getattr(q, k)
    if q.pair is not None:
        out["pair"] = list(q.pair)
    if q.pattern is not None:
        out["pattern"] = graph_to_record(q.pattern)
    return out


def query_from_record(rec: Mapping) -> Query:
    pattern = rec.get("pattern")
    pair = rec.get("pair")
    return Query(
        source=rec.get("source"),
        target=rec.get("target"),
        start=rec.get("start"),
        pair=tuple(pair) if pair is not None else None,
        pattern=graph_from_record(pattern) if pattern is not None else None,
        rounds=rec.get("rounds"),
        aggregation=rec.get("aggregation"),
    )


def constraints_to_record(c: ConstraintSet) -> dict:
    out: dict[str, Any] = {}
    if c.blocked_edges is not None:
        out["blocked_edges"] = [list(p) for p in c.blocked_edges]
    for k in ("max_cost", "max_colors", "max_size"):
        if getattr(c, k) is not None:
            out[k] = getattr(c, k)
    return out


def constraints_from_record(rec: Mapping) -> ConstraintSet:
    blocked = rec.get("blocked_edges")
    return ConstraintSet(
        blocked_edges=tuple(tuple(p) for p in blocked) if blocked is not None else None,
        max_cost=rec.get("max_cost"),
        max_colors=rec.get("max_colors"),
        max_size=rec.get("max_size"),
    )


def task_input(task: StructuredTask) -> dict:
    """The nested payload carried by run_tool / run_candidate."""
    return {
        "graph": graph_to_record(task.graph),
        "query": query_to_record(task.query),
        "constraints": constraints_to_record(task.constraints),
    }


def to_record(task: StructuredTask) -> dict:
    return {
        "family": task.family,
        "difficulty": task.difficulty,
        "seed": task.seed,
        "task_input": task_input(task),
    }


def from_record(rec: Mapping) -> StructuredTask:
    try:
        ti = rec["task_input"]
        return StructuredTask(
            family=rec["family"],
            difficulty=rec.get("difficulty", "D1"),
            seed=int(rec.get("seed", 0)),
            graph=graph_from_record(ti["graph"]),
            query=query_from_record(ti.get("query") or {}),
            constraints=constraints_from_record(ti.get("constraints") or {}),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, (GraphError, UnknownFamilyError)):
            raise
        raise GraphError(f"malformed task record: {exc}") from exc


def task_from_payload(family: str, payload: Mapping, difficulty: str = "D1", seed: int = 0) -> StructuredTask:
    return from_record({"family": family, "difficulty": difficulty, "seed": seed, "task_input": payload})


def _dumps(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def canonical_serialize(task: StructuredTask) -> bytes:
    """Deterministic, order-normalized bytes. Equal tasks give equal bytes."""
    return _dumps(to_record(task))


def canonical_parse(data: bytes | str) -> StructuredTask:
    return from_record(json.loads(data))


def payload_bytes(payload: Mapping) -> bytes:
    return _dumps(payload)


# ----------------------------------------------------------------------------
# interfaces


@dataclass(frozen=True)
class TypedInterface:
    family: str
    required_slots: frozenset[str]
    optional_slots: frozenset[str]
    exactness: str

    @property
    def allowed_slots(self) -> frozenset[str]:
        return self.required_slots | self.optional_slots


_BASE = {"graph.nodes", "graph.edges"}
_PATH_REQ = _BASE | {"query.source", "query.target"}
_PATH_OPT = {"graph.weights", "graph.directed", "constraints.blocked_edges"}
_DIR = {"graph.directed"}

_INTERFACE_TABLE: dict[str, tuple[set[str], set[str], str]] = {
    "shortest_path": (_PATH_REQ, _PATH_OPT, "exact"),
    "shortest_path_cost": (_PATH_REQ, _PATH_OPT, "exact"),
    "tsp": (
        _BASE | _DIR,
        {"graph.weights", "query.start", "constraints.blocked_edges", "constraints.max_cost"},
        "exact_small",
    ),
    "hamilton": (_BASE | _DIR, {"graph.weights"}, "exact_small"),
    "coloring": (_BASE | {"constraints.max_colors"}, set(_DIR), "exact_small"),
    "vertex_cover": (_BASE | {"constraints.max_size"}, set(_DIR), "exact_small"),
    "mst": (_BASE | {"graph.weights"}, set(_DIR), "exact"),
    "max_flow": (_BASE | _DIR | {"graph.capacities", "query.source", "query.target"}, set(), "exact"),
    "bipartite_matching": (_BASE | {"graph.node_labels"}, set(_DIR), "exact"),
    "topological_sort": (_BASE | _DIR, set(), "exact"),
    "scc": (_BASE | _DIR, set(), "exact"),
    "bridges": (_BASE | _DIR, set(), "exact"),
    "connectivity": (_BASE | _DIR | {"query.source", "query.target"}, set(), "boolean_with_witness"),
    "cycle": (_BASE | _DIR, set(), "boolean_with_witness"),
    "bipartite_check": (_BASE | _DIR, set(), "boolean_with_witness"),
    "triangle_max_sum": (_BASE | {"graph.node_weights"}, set(_DIR), "exact"),
    "common_neighbors": (_BASE | {"query.pair"}, set(_DIR), "exact"),
    "substructure": (_BASE | _DIR | {"query.pattern"}, set(), "exact_small"),
    "gnn_sum": (_BASE | {"graph.embeddings", "query.rounds", "query.aggregation"}, set(_DIR), "exact"),
}

INTERFACES: dict[str, TypedInterface] = {
    fam: TypedInterface(fam, frozenset(req), frozenset(opt), ex) for fam, (req, opt, ex) in _INTERFACE_TABLE.items()
}


def interface_for(family: str) -> TypedInterface:
    try:
        return INTERFACES[family]
    except KeyError:
        raise UnknownFamilyError(f"unknown task family: {family!r}") from None


# size caps above which exact semantics relax
TSP_DP_CAP = 15
COVER_EXACT_CAP = 12
PATTERN_SMALL_CAP = 4
PATTERN_MEDIUM_CAP = 6
HAMILTON_CAP = 30


def task_exactness(task: StructuredTask) -> str:
    """Effective exactness semantics for one instance (size-dependent)."""
    fam, n = task.family, task.n
    if fam == "tsp":
        return "exact_small" if n <= TSP_DP_CAP else "feasible_large"
    if fam == "coloring":
        return "exact_small" if n <= COVER_EXACT_CAP else "feasible"
    if fam == "vertex_cover":
        return "exact_small" if n <= COVER_EXACT_CAP else "feasible_large"
    if fam == "substructure":
        p = len(task.query.pattern.nodes) if task.query.pattern else 0
        return "exact_small" if p <= PATTERN_SMALL_CAP else "exact_medium"
    return INTERFACES[fam].exactness


# ----------------------------------------------------------------------------
# answers


@dataclass(frozen=True)
class Answer:
    family: str
    value: Any = None
    witness: Any = None

    def to_record(self) -> dict:
        return {"family": self.family, "value": self.value, "witness": self.witness}

    @classmethod
    def from_record(cls, rec: Mapping) -> "Answer":
        return cls(rec.get("family", ""), rec.get("value"), rec.get("witness"))

    @property
    def claims_infeasible(self) -> bool:
        return isinstance(self.witness, Mapping) and self.witness.get("infeasible") is True


def infeasible_answer(family: str) -> Answer:
    return Answer(family, None, {"infeasible": True})


# ----------------------------------------------------------------------------
# slot reports and discrepancy


@dataclass(frozen=True)
class Discrepancy:
    missing_slots: tuple[str, ...] = ()
    extra_slots: tuple[str, ...] = ()
    mismatched_slots: tuple[tuple[str, str], ...] = ()

    @property
    def scalar(self) -> int:
        return len(self.missing_slots) + len(self.extra_slots) + len(self.mismatched_slots)

    @property
    def empty(self) -> bool:
        return self.scalar == 0

    def to_record(self) -> dict:
        return {
            "missing_slots": list(self.missing_slots),
            "extra_slots": list(self.extra_slots),
            "mismatched_slots": [list(m) for m in self.mismatched_slots],
            "scalar": self.scalar,
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "Discrepancy":
        return cls(
            tuple(rec.get("missing_slots", ())),
            tuple(rec.get("extra_slots", ())),
            tuple(tuple(m) for m in rec.get("mismatched_slots", ())),
        )


def _payload_of(obj: StructuredTask | Mapping) -> tuple[str | None, Mapping]:
    if isinstance(obj, StructuredTask):
        return obj.family, task_input(obj)
    if not isinstance(obj, Mapping):
        return None, {}
    if "task_input" in obj:
        ti = obj.get("task_input")
        return obj.get("family"), ti if isinstance(ti, Mapping) else {}
    return obj.get("family"), obj


def present_slots(payload: Mapping) -> dict[str, Any]:
    """Map every populated slot path in a task_input payload to its raw value."""
    out: dict[str, Any] = {}
    g = payload.get("graph")
    if isinstance(g, Mapping):
        for k in ("nodes", "edges", "directed"):
            if k in g:
                out[f"graph.{k}"] = g[k]
        edges = g.get("edges")
        if isinstance(edges, list):
            for attr, slot in (("weight", "graph.weights"), ("capacity", "graph.capacities")):
                if any(isinstance(e, Mapping) and attr in e for e in edges):
                    out[slot] = edges
        attrs = g.get("node_attrs")
        if isinstance(attrs, Mapping):
            for attr, slot in (("label", "graph.node_labels"), ("weight", "graph.node_weights"), ("embedding", "graph.embeddings")):
                if any(isinstance(a, Mapping) and attr in a for a in attrs.values()):
                    out[slot] = attrs
    elif g is not None:
        out["graph"] = g
    for section in ("query", "constraints"):
        sec = payload.get(section)
        if isinstance(sec, Mapping):
            for k, v in sec.items():
                if v is not None:
                    out[f"{section}.{k}"] = v
    for k in payload:
        if k not in ("graph", "query", "constraints"):
            out[str(k)] = payload[k]
    return out


def _check_graph_slot(g: Any, where: str) -> list[tuple[str, str]]:
    """Type-check a raw graph record; returns (slot, message) problems."""
    bad: list[tuple[str, str]] = []
    nodes = g.get("nodes")
    if "nodes" in g:
        if not isinstance(nodes, list) or not all(isinstance(n, str) and n for n in nodes):
            bad.append((f"{where}.nodes", "nodes must be a list of strings"))
            nodes = None
        elif len(set(nodes)) != len(nodes):
            bad.append((f"{where}.nodes", "duplicate node identifiers"))
    nodeset = set(nodes) if isinstance(nodes, list) else None
    directed = g.get("directed", False)
    if "directed" in g and not isinstance(directed, bool):
        bad.append((f"{where}.directed", "directed must be a boolean"))
    edges = g.get("edges")
    if "edges" in g:
        if not isinstance(edges, list):
            bad.append((f"{where}.edges", "edges must be a list"))
        else:
            seen = set()
            for e in edges:
                if not isinstance(e, Mapping) or not isinstance(e.get("u"), str) or not isinstance(e.get("v"), str):
                    bad.append((f"{where}.edges", "edge records need string u and v"))
                    break
                if nodeset is not None and (e["u"] not in nodeset or e["v"] not in nodeset):
                    bad.append((f"{where}.edges", f"edge endpoint not in nodes: {e['u']}-{e['v']}"))
                    break
                if e["u"] == e["v"]:
                    bad.append((f"{where}.edges", f"self-loop on {e['u']}"))
                    break
                key = edge_key(e["u"], e["v"], bool(directed))
                if key in seen:
                    bad.append((f"{where}.edges", f"duplicate edge {key[0]}-{key[1]}"))
                    break
                seen.add(key)
            else:
                for attr, slot, lo in (("weight", "weights", 0), ("capacity", "capacities", 1)):
                    present = [attr in e for e in edges]
                    if any(present):
                        if not all(present):
                            bad.append((f"{where}.{slot}", f"edge {attr}s must be homogeneous"))
                        elif not all(_is_int(e[attr]) and e[attr] >= lo for e in edges):
                            bad.append((f"{where}.{slot}", f"edge {attr}s must be integers >= {lo}"))
    attrs = g.get("node_attrs")
    if attrs is not None:
        if not isinstance(attrs, Mapping):
            bad.append((f"{where}.node_attrs", "node_attrs must be an object"))
        else:
            for n, a in attrs.items():
                if nodeset is not None and n not in nodeset:
                    bad.append((f"{where}.node_attrs", f"attribute for unknown node {n}"))
                    break
                if not isinstance(a, Mapping):
                    bad.append((f"{where}.node_attrs", "node attribute must be an object"))
                    break
                if "weight" in a and not _is_int(a["weight"]):
                    bad.append((f"{where}.node_weights", "node weights must be integers"))
                    break
                if "label" in a and not isinstance(a["label"], str):
                    bad.append((f"{where}.node_labels", "node labels must be strings"))
                    break
                if "embedding" in a and (
                    not isinstance(a["embedding"], list) or not all(_is_int(x) for x in a["embedding"])
                ):
                    bad.append((f"{where}.embeddings", "embeddings must be integer lists"))
                    break
    return bad


def validate_structure(candidate: Any, iface: TypedInterface) -> Discrepancy:
    """Slot report for a (possibly malformed) parse of agent output.

    Accepts either a full task record ``{family, task_input}`` or a bare
    task_input payload. Never raises.
    """
    fam, payload = _payload_of(candidate)
    if not isinstance(candidate, (Mapping, StructuredTask)):
        return Discrepancy(missing_slots=tuple(sorted(iface.required_slots)))
    slots = present_slots(payload)
    missing = sorted(iface.required_slots - slots.keys())
    extra = sorted(s for s in slots if s not in iface.allowed_slots)
    invalid: list[tuple[str, str]] = []
    if fam is not None and fam != iface.family:
        invalid.append(("family", f"expected {iface.family}, got {fam}"))
    g = payload.get("graph")
    if isinstance(g, Mapping):
        invalid.extend(_check_graph_slot(g, "graph"))
        nodes = set(g["nodes"]) if isinstance(g.get("nodes"), list) and all(isinstance(n, str) for n in g["nodes"]) else None
    else:
        nodes = None
        if g is not None:
            invalid.append(("graph", "graph must be an object"))
    q = payload.get("query") if isinstance(payload.get("query"), Mapping) else {}
    for k in ("source", "target", "start"):
        if q.get(k) is not None:
            v = q[k]
            if not isinstance(v, str) or (nodes is not None and v not in nodes):
                invalid.append((f"query.{k}", f"unknown node {v!r}"))
    if q.get("pair") is not None:
        p = q["pair"]
        if not isinstance(p, list) or len(p) != 2 or (nodes is not None and any(x not in nodes for x in p)):
            invalid.append(("query.pair", "pair must list two known nodes"))
    if q.get("pattern") is not None:
        if not isinstance(q["pattern"], Mapping):
            invalid.append(("query.pattern", "pattern must be a graph object"))
        else:
            invalid.extend(_check_graph_slot(q["pattern"], "query.pattern"))
    if q.get("rounds") is not None and (not _is_int(q["rounds"]) or q["rounds"] < 1):
        invalid.append(("query.rounds", "rounds must be a positive integer"))
    if q.get("aggregation") is not None and q["aggregation"] not in AGGREGATIONS:
        invalid.append(("query.aggregation", f"unsupported aggregation {q['aggregation']!r}"))
    c = payload.get("constraints") if isinstance(payload.get("constraints"), Mapping) else {}
    if c.get("blocked_edges") is not None:
        be = c["blocked_edges"]
        if not isinstance(be, list) or not all(isinstance(p, list) and len(p) == 2 for p in be):
            invalid.append(("constraints.blocked_edges", "blocked edges must be node pairs"))
        elif nodes is not None and any(x not in nodes for p in be for x in p):
            invalid.append(("constraints.blocked_edges", "blocked edge references unknown node"))
    for k, lo in (("max_cost", 0), ("max_colors", 1), ("max_size", 1)):
        if c.get(k) is not None and (not _is_int(c[k]) or c[k] < lo):
            invalid.append((f"constraints.{k}", f"{k} must be an integer >= {lo}"))
    return Discrepancy(tuple(missing), tuple(extra), tuple(invalid))


def _edge_map(edges: Any, directed: bool) -> dict[tuple[str, str], Mapping] | None:
    if not isinstance(edges, list):
        return None
    out = {}
    for e in edges:
        if not isinstance(e, Mapping) or "u" not in e or "v" not in e:
            return None
        out[edge_key(str(e["u"]), str(e["v"]), directed)] = e
    return out


def _describe_set_delta(slot_noun: str, missing: int, extra: int) -> str:
    parts = []
    if missing:
        parts.append(f"{missing} {slot_noun}{'s' if missing != 1 else ''} missing")
    if extra:
        parts.append(f"{extra} extra {slot_noun}{'s' if extra != 1 else ''}")
    return ", ".join(parts) or "differs"


def structured_discrepancy(recovered: StructuredTask | Mapping, canonical: StructuredTask | Mapping) -> Discrepancy:
    """Slot-level diff of a recovered task against the canonical one.

    Every slot contributes at most one item; ``scalar`` is the item count.
    Edge identity uses the canonical task's directedness, so a wrong
    ``directed`` flag is counted once rather than also as edge drift.
    """
    fam_r, rec = _payload_of(recovered)
    fam_c, can = _payload_of(canonical)
    if fam_r is not None and fam_c is not None and fam_r != fam_c:
        raise ValueError(f"family mismatch: {fam_r} vs {fam_c}")
    rs, cs = present_slots(rec), present_slots(can)
    missing = sorted(cs.keys() - rs.keys())
    extra = sorted(rs.keys() - cs.keys())
    mismatched: list[tuple[str, str]] = []
    directed = bool(can.get("graph", {}).get("directed", False))
    r_edges = _edge_map(rs.get("graph.edges"), directed)
    c_edges = _edge_map(cs.get("graph.edges"), directed) or {}
    for slot in sorted(rs.keys() & cs.keys()):
        a, b = rs[slot], cs[slot]
        if slot == "graph.nodes":
            if isinstance(a, list) and set(a) == set(b):
                continue
            sa = set(a) if isinstance(a, list) else set()
            mismatched.append((slot, _describe_set_delta("node", len(set(b) - sa), len(sa - set(b)))))
        elif slot == "graph.edges":
            if r_edges is None:
                mismatched.append((slot, "malformed edge list"))
            elif r_edges.keys() != c_edges.keys():
                mismatched.append(
                    (slot, _describe_set_delta("edge", len(c_edges.keys() - r_edges.keys()), len(r_edges.keys() - c_edges.keys())))
                )
        elif slot in ("graph.weights", "graph.capacities"):
            attr = "weight" if slot == "graph.weights" else "capacity"
            if r_edges is None:
                mismatched.append((slot, "malformed edge list"))
                continue
            diff = sum(1 for k, e in c_edges.items() if k in r_edges and r_edges[k].get(attr) != e.get(attr))
            if diff:
                mismatched.append((slot, f"{diff} {attr}{'s' if diff != 1 else ''} differ"))
        elif slot in ("graph.node_labels", "graph.node_weights", "graph.embeddings"):
            attr = {"graph.node_labels": "label", "graph.node_weights": "weight", "graph.embeddings": "embedding"}[slot]
            ra = {n: v.get(attr) for n, v in a.items() if isinstance(v, Mapping)} if isinstance(a, Mapping) else {}
            ca = {n: v.get(attr) for n, v in b.items()}
            diff = sum(1 for n in ca.keys() | ra.keys() if ra.get(n) != ca.get(n))
            if diff:
                mismatched.append((slot, f"{diff} node {attr}{'s' if diff != 1 else ''} differ"))
        elif slot == "constraints.blocked_edges":
            try:
                ra_set = {edge_key(u, v, directed) for u, v in a}
            except (TypeError, ValueError):
                ra_set = None
            ca_set = {edge_key(u, v, directed) for u, v in b}
            if ra_set != ca_set:
                mismatched.append((slot, "blocked edge set differs"))
        elif slot == "query.pattern":
            try:
                if graph_from_record(a) != graph_from_record(b):
                    mismatched.append((slot, "pattern graph differs"))
            except (GraphError, KeyError, TypeError, ValueError):
                mismatched.append((slot, "malformed pattern graph"))
        elif a != b:
            mismatched.append((slot, f"{a!r} != {b!r}"))
    return Discrepancy(tuple(missing), tuple(extra), tuple(mismatched))


def all_slots_sentinel(canonical: StructuredTask) -> Discrepancy:
    """Maximal discrepancy: used when no task_doc was emitted at all."""
    return Discrepancy(missing_slots=tuple(sorted(present_slots(task_input(canonical)))))
