"""Template verbalizer and its exact inverse.

The statement is line oriented: one header, one line per node attribute,
one line per edge, one line per constraint and query slot, followed by a
family-specific question sentence. ``reference_parse`` accepts exactly the
language ``verbalize`` produces and rejects anything else with the first
offending line. Node identifiers must not contain whitespace or commas.
"""
from __future__ import annotations

import re

from ..core import (
    FAMILIES,
    ConstraintSet,
    Edge,
    Graph,
    GraphError,
    NodeAttr,
    Query,
    StructuredTask,
)


class ParseError(ValueError):
    def __init__(self, line_no: int, line: str, reason: str = "unrecognized line"):
        super().__init__(f"line {line_no}: {reason}: {line!r}")
        self.line_no = line_no
        self.line = line


def _question(task: StructuredTask) -> str:
    q = task.query
    fam = task.family
    if fam == "shortest_path":
        return f"Find a minimum-cost path from {q.source} to {q.target} that avoids blocked edges; report its cost and the path."
    if fam == "shortest_path_cost":
        return f"Report the minimum total cost of travelling from {q.source} to {q.target} without using blocked edges."
    if fam == "tsp":
        start = q.start if q.start is not None else "any node"
        return f"Find a minimum-cost tour that starts at {start}, visits every node exactly once and returns to the start."
    if fam == "hamilton":
        return "Find a path that visits every node exactly once."
    if fam == "coloring":
        return "Assign each node a color so that adjacent nodes differ, using as few colors as possible."
    if fam == "vertex_cover":
        return "Find a smallest set of nodes that touches every edge."
    if fam == "mst":
        return "Find a minimum spanning tree; report its total weight and its edges."
    if fam == "max_flow":
        return f"Compute the maximum flow from {q.source} to {q.target} and a flow assignment on every edge."
    if fam == "bipartite_matching":
        return "Find a maximum matching between nodes labelled L and nodes labelled R."
    if fam == "topological_sort":
        return "Give an ordering of the nodes in which every edge points forward."
    if fam == "scc":
        return "Partition the nodes into strongly connected components and report their number."
    if fam == "bridges":
        return "List every edge whose removal disconnects the graph."
    if fam == "connectivity":
        return f"Is there a path from {q.source} to {q.target}?"
    if fam == "cycle":
        return "Does the graph contain a cycle?"
    if fam == "bipartite_check":
        return "Is the graph bipartite?"
    if fam == "triangle_max_sum":
        return "Find the triangle whose node weights have the largest sum."
    if fam == "common_neighbors":
        a, b = q.pair
        return f"Which nodes are neighbors of both {a} and {b}?"
    if fam == "substructure":
        return "Does the graph contain the pattern graph as a subgraph (edges preserved, nodes distinct)?"
    if fam == "gnn_sum":
        return (
            f"Apply {q.rounds} rounds of the update: new state of v = state of v + sum of states of its neighbors;"
            " report every final state."
        )
    raise AssertionError(fam)


def _edge_line(prefix: str, e: Edge, directed: bool) -> str:
    arrow = "->" if directed else "--"
    extras = []
    if e.weight is not None:
        extras.append(f"weight {e.weight}")
    if e.capacity is not None:
        extras.append(f"capacity {e.capacity}")
    tail = f" with {', '.join(extras)}" if extras else ""
    return f"{prefix} {e.u} {arrow} {e.v}{tail}."


def _graph_lines(g: Graph, prefix: str) -> list[str]:
    noun = "graph" if prefix == "" else "pattern graph"
    label = prefix.capitalize() + " " if prefix else ""
    lines = [f"The {noun} is {'directed' if g.directed else 'undirected'}."]
    lines.append(f"{label}Nodes: {', '.join(g.nodes) if g.nodes else 'none'}.".lstrip())
    for n, a in g.node_attrs.items():
        if a.label is not None:
            lines.append(f"{label}Node {n} has label {a.label}.")
        if a.weight is not None:
            lines.append(f"{label}Node {n} has weight {a.weight}.")
        if a.embedding is not None:
            lines.append(f"{label}Node {n} has embedding [{', '.join(str(x) for x in a.embedding)}].")
    for e in g.edges:
        lines.append(_edge_line(f"{label}Edge", e, g.directed))
    return lines


def verbalize(task: StructuredTask) -> str:
    """Deterministic statement text. Never includes the reference answer."""
    lines = [f"Task: {task.family}.", f"Difficulty: {task.difficulty}.", f"Instance seed: {task.seed}."]
    lines += _graph_lines(task.graph, "")
    q, c = task.query, task.constraints
    if q.pattern is not None:
        lines += _graph_lines(q.pattern, "pattern")
    if q.source is not None:
        lines.append(f"Source: {q.source}.")
    if q.target is not None:
        lines.append(f"Target: {q.target}.")
    if q.start is not None:
        lines.append(f"Start: {q.start}.")
    if q.pair is not None:
        lines.append(f"Pair: {q.pair[0]}, {q.pair[1]}.")
    if q.rounds is not None:
        lines.append(f"Rounds: {q.rounds}.")
    if q.aggregation is not None:
        lines.append(f"Aggregation: {q.aggregation}.")
    if c.blocked_edges is not None:
        arrow = "->" if task.graph.directed else "--"
        if not c.blocked_edges:
            lines.append("Blocked edges: none.")
        for u, v in c.blocked_edges:
            lines.append(f"Blocked edge: {u} {arrow} {v}.")
    if c.max_cost is not None:
        lines.append(f"Maximum total cost: {c.max_cost}.")
    if c.max_colors is not None:
        lines.append(f"Maximum colors: {c.max_colors}.")
    if c.max_size is not None:
        lines.append(f"Maximum cover size: {c.max_size}.")
    lines.append(f"Question: {_question(task)}")
    return "\n".join(lines) + "\n"


_ID = r"([^\s,]+)"
_RE = {
    "family": re.compile(r"^Task: (\w+)\.$"),
    "difficulty": re.compile(r"^Difficulty: (D[1-4])\.$"),
    "seed": re.compile(r"^Instance seed: (\d+)\.$"),
    "directed": re.compile(r"^The (graph|pattern graph) is (directed|undirected)\.$"),
    "nodes": re.compile(r"^(Pattern )?Nodes: (.*)\.$"),
    "attr": re.compile(rf"^(Pattern )?Node {_ID} has (label|weight|embedding) (.+)\.$"),
    "edge": re.compile(rf"^(Pattern )?Edge {_ID} (--|->) {_ID}(?: with (.+))?\.$"),
    "source": re.compile(rf"^Source: {_ID}\.$"),
    "target": re.compile(rf"^Target: {_ID}\.$"),
    "start": re.compile(rf"^Start: {_ID}\.$"),
    "pair": re.compile(rf"^Pair: {_ID}, {_ID}\.$"),
    "rounds": re.compile(r"^Rounds: (\d+)\.$"),
    "aggregation": re.compile(r"^Aggregation: (\w+)\.$"),
    "blocked": re.compile(rf"^Blocked edge: {_ID} (--|->) {_ID}\.$"),
    "blocked_none": re.compile(r"^Blocked edges: none\.$"),
    "max_cost": re.compile(r"^Maximum total cost: (\d+)\.$"),
    "max_colors": re.compile(r"^Maximum colors: (\d+)\.$"),
    "max_size": re.compile(r"^Maximum cover size: (\d+)\.$"),
    "question": re.compile(r"^Question: (.+)$"),
}


class _GraphDraft:
    def __init__(self):
        self.directed: bool | None = None
        self.nodes: list[str] | None = None
        self.edges: list[Edge] = []
        self.attrs: dict[str, dict] = {}

    def build(self) -> Graph:
        attrs = {n: NodeAttr(a.get("label"), a.get("weight"), a.get("embedding")) for n, a in self.attrs.items()}
        return Graph(tuple(self.nodes or ()), tuple(self.edges), bool(self.directed), attrs)


def reference_parse(statement: str) -> StructuredTask:
    """Inverse of :func:`verbalize`; raises :class:`ParseError` on foreign text."""
    header: dict = {}
    host, pattern = _GraphDraft(), None
    qs: dict = {}
    cs: dict = {}
    question = None
    lines = statement.splitlines()
    if not lines:
        raise ParseError(0, "", "empty statement")
    for no, line in enumerate(lines, 1):
        if not line.strip():
            continue
        m = None
        for key, rx in _RE.items():
            m = rx.match(line)
            if m:
                break
        if m is None:
            raise ParseError(no, line)
        if question is not None:
            raise ParseError(no, line, "text after the question")
        try:
            if key == "family":
                if m.group(1) not in FAMILIES:
                    raise ParseError(no, line, "unknown task family")
                header["family"] = m.group(1)
            elif key == "difficulty":
                header["difficulty"] = m.group(1)
            elif key == "seed":
                header["seed"] = int(m.group(1))
            elif key == "directed":
                draft = host
                if m.group(1) == "pattern graph":
                    pattern = pattern or _GraphDraft()
                    draft = pattern
                draft.directed = m.group(2) == "directed"
            elif key == "nodes":
                draft = _pick(host, pattern, m.group(1), no, line)
                body = m.group(2)
                draft.nodes = [] if body == "none" else body.split(", ")
            elif key == "attr":
                draft = _pick(host, pattern, m.group(1), no, line)
                node, kind, raw = m.group(2), m.group(3), m.group(4)
                slot = draft.attrs.setdefault(node, {})
                if kind == "label":
                    slot["label"] = raw
                elif kind == "weight":
                    slot["weight"] = _int(raw, no, line)
                else:
                    if not (raw.startswith("[") and raw.endswith("]")):
                        raise ParseError(no, line, "embedding must be a bracketed list")
                    inner = raw[1:-1].strip()
                    slot["embedding"] = tuple(_int(x, no, line) for x in inner.split(", ")) if inner else ()
            elif key == "edge":
                draft = _pick(host, pattern, m.group(1), no, line)
                u, arrow, v, extra = m.group(2), m.group(3), m.group(4), m.group(5)
                if draft.directed is None or (arrow == "->") != draft.directed:
                    raise ParseError(no, line, "edge arrow disagrees with directedness")
                w = cap = None
                if extra:
                    for item in extra.split(", "):
                        name, _, val = item.partition(" ")
                        if name == "weight" and w is None:
                            w = _int(val, no, line)
                        elif name == "capacity" and cap is None:
                            cap = _int(val, no, line)
                        else:
                            raise ParseError(no, line, "unknown edge attribute")
                draft.edges.append(Edge(u, v, w, cap))
            elif key in ("source", "target", "start"):
                qs[key] = m.group(1)
            elif key == "pair":
                qs["pair"] = (m.group(1), m.group(2))
            elif key == "rounds":
                qs["rounds"] = int(m.group(1))
            elif key == "aggregation":
                qs["aggregation"] = m.group(1)
            elif key == "blocked":
                if (m.group(2) == "->") != bool(host.directed):
                    raise ParseError(no, line, "blocked edge arrow disagrees with directedness")
                cs.setdefault("blocked_edges", []).append((m.group(1), m.group(3)))
            elif key == "blocked_none":
                cs["blocked_edges"] = []
            elif key in ("max_cost", "max_colors", "max_size"):
                cs[key] = int(m.group(1))
            elif key == "question":
                question = (no, line, m.group(1))
        except ParseError:
            raise
        except ValueError as exc:
            raise ParseError(no, line, str(exc)) from exc
    for field_ in ("family", "difficulty", "seed"):
        if field_ not in header:
            raise ParseError(len(lines), lines[-1], f"missing {field_} header")
    if host.directed is None or host.nodes is None:
        raise ParseError(len(lines), lines[-1], "missing graph description")
    if question is None:
        raise ParseError(len(lines), lines[-1], "missing question")
    try:
        g = host.build()
        pat = pattern.build() if pattern is not None else None
        blocked = cs.get("blocked_edges")
        task = StructuredTask(
            header["family"],
            header["difficulty"],
            header["seed"],
            g,
            Query(pattern=pat, **qs),
            ConstraintSet(
                blocked_edges=tuple(blocked) if blocked is not None else None,
                max_cost=cs.get("max_cost"),
                max_colors=cs.get("max_colors"),
                max_size=cs.get("max_size"),
            ),
        )
    except GraphError as exc:
        raise ParseError(len(lines), lines[-1], f"inconsistent task: {exc}") from exc
    no, line, text = question
    try:
        expected = _question(task)
    except (TypeError, ValueError):
        expected = None
    if text != expected:
        raise ParseError(no, line, "question does not match the task")
    return task


def _pick(host: _GraphDraft, pattern: _GraphDraft | None, tag, no, line) -> _GraphDraft:
    if tag:
        if pattern is None:
            raise ParseError(no, line, "pattern line before pattern header")
        return pattern
    return host


def _int(raw: str, no: int, line: str) -> int:
    if not re.fullmatch(r"-?\d+", raw.strip()):
        raise ParseError(no, line, f"expected an integer, got {raw!r}")
    return int(raw)
