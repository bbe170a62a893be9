"""Reference algorithms for the 19 task families.

Each ``solve_*`` takes a canonical :class:`StructuredTask` and returns a
:class:`SolverResult`. Witnesses are deterministic: whenever several
optimal witnesses exist the lexicographically smallest node sequence (in
natural node order) is preferred, so golden tests can pin exact output.
The verifier accepts any valid witness.
"""
from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import (
    PATTERN_MEDIUM_CAP,
    Answer,
    Graph,
    StructuredTask,
    canonical_parse,
    canonical_serialize,
    edge_key,
    infeasible_answer,
    node_key,
    sort_nodes,
    task_exactness,
)

SOLVED, INFEASIBLE, OUT_OF_RANGE = "solved", "infeasible", "out_of_exact_range"
HAMILTON_BUDGET = 2_000_000
COLORING_BUDGET = 2_000_000


@dataclass(frozen=True)
class SolverResult:
    answer: Answer
    status: str


def _ok(family: str, value, witness=None) -> SolverResult:
    return SolverResult(Answer(family, value, witness), SOLVED)


def _infeasible(family: str) -> SolverResult:
    return SolverResult(infeasible_answer(family), INFEASIBLE)


def _out_of_range(family: str) -> SolverResult:
    return SolverResult(Answer(family, None, None), OUT_OF_RANGE)


def undirected_adjacency(g: Graph) -> dict[str, list[str]]:
    adj: dict[str, set[str]] = {n: set() for n in g.nodes}
    for e in g.edges:
        adj[e.u].add(e.v)
        adj[e.v].add(e.u)
    return {n: sorted(s, key=node_key) for n, s in adj.items()}


def usable_arcs(task: StructuredTask) -> dict[str, list[tuple[str, int]]]:
    """Out-arcs with weights (1 when unweighted), blocked edges removed."""
    g = task.graph
    blocked = task.blocked()
    arcs: dict[str, list[tuple[str, int]]] = {n: [] for n in g.nodes}
    for e in g.edges:
        if (e.u, e.v) in blocked:
            continue
        w = e.weight if e.weight is not None else 1
        arcs[e.u].append((e.v, w))
        if not g.directed:
            arcs[e.v].append((e.u, w))
    for n in arcs:
        arcs[n].sort(key=lambda t: node_key(t[0]))
    return arcs


def _dijkstra(arcs: dict[str, list[tuple[str, int]]], src: str) -> dict[str, int]:
    dist = {src: 0}
    heap = [(0, node_key(src), src)]
    done = set()
    while heap:
        d, _, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, w in arcs[u]:
            nd = d + w
            if nd < dist.get(v, nd + 1):
                dist[v] = nd
                heapq.heappush(heap, (nd, node_key(v), v))
    return dist


def _reverse(arcs: dict[str, list[tuple[str, int]]]) -> dict[str, list[tuple[str, int]]]:
    rev: dict[str, list[tuple[str, int]]] = {n: [] for n in arcs}
    for u, outs in arcs.items():
        for v, w in outs:
            rev[v].append((u, w))
    return rev


# ----------------------------------------------------------------------------
# paths


def shortest_path(task: StructuredTask) -> tuple[int, list[str]] | None:
    s, t = task.query.source, task.query.target
    if s == t:
        return 0, [s]
    arcs = usable_arcs(task)
    dist = _dijkstra(arcs, s)
    if t not in dist:
        return None
    to_t = _dijkstra(_reverse(arcs), t)
    best = dist[t]
    # walk forward taking the smallest next node that stays on an optimal path
    path, seen, u = [s], {s}, s
    while u != t:
        nxt = None
        for v, w in arcs[u]:
            if v in seen or v not in to_t:
                continue
            if dist[u] + w + to_t[v] == best and dist.get(v) == dist[u] + w:
                nxt = v
                break
        if nxt is None:  # zero-weight corner case; fall back to a parent tree
            return best, _parent_path(arcs, s, t, dist)
        path.append(nxt)
        seen.add(nxt)
        u = nxt
    return best, path


def _parent_path(arcs, s, t, dist) -> list[str]:
    parent = {}
    order = sorted(dist, key=lambda n: (dist[n], node_key(n)))
    for u in order:
        for v, w in arcs[u]:
            if v not in parent and v != s and dist.get(v) == dist[u] + w:
                parent[v] = u
    path = [t]
    while path[-1] != s:
        path.append(parent[path[-1]])
    return path[::-1]


def solve_path(task: StructuredTask) -> SolverResult:
    fam = task.family
    res = shortest_path(task)
    if res is None:
        return _infeasible(fam)
    cost, path = res
    if fam == "shortest_path_cost":
        return _ok(fam, cost)
    return _ok(fam, cost, {"path": path})


# ----------------------------------------------------------------------------
# routing


INF = np.int64(1) << np.int64(50)


def _cost_matrix(task: StructuredTask, order: list[str]) -> np.ndarray:
    idx = {n: i for i, n in enumerate(order)}
    n = len(order)
    W = np.full((n, n), INF, dtype=np.int64)
    for u, outs in usable_arcs(task).items():
        for v, w in outs:
            W[idx[u], idx[v]] = w
    return W


def tour_cost(task: StructuredTask, tour: list[str]) -> int | None:
    """Closed-tour cost over usable arcs, None if some step is unusable."""
    arcs = {u: dict(outs) for u, outs in usable_arcs(task).items()}
    total = 0
    for a, b in zip(tour, tour[1:] + tour[:1]):
        if len(tour) == 1:
            break
        w = arcs[a].get(b)
        if w is None:
            return None
        total += w
    return total


def held_karp(task: StructuredTask, start: str) -> tuple[int, list[str]] | None:
    """Exact minimum Hamiltonian cycle from ``start`` by DP over subsets."""
    others = [n for n in task.graph.nodes if n != start]
    m = len(others)
    if m == 0:
        return 0, [start]
    order = [start] + others
    W = _cost_matrix(task, order)
    Wo = W[1:, 1:]
    full = (1 << m) - 1
    dp = np.full((1 << m, m), INF, dtype=np.int64)
    for j in range(m):
        dp[1 << j, j] = W[0, j + 1]
    masks = np.arange(1 << m, dtype=np.int64)
    popcount = np.zeros(1 << m, dtype=np.int64)
    for j in range(m):
        popcount += (masks >> j) & 1
    for k in range(2, m + 1):
        layer = masks[popcount == k]
        for j in range(m):
            sel = layer[(layer >> j) & 1 == 1]
            prev = sel ^ (1 << j)
            cand = dp[prev] + Wo[:, j][None, :]
            dp[sel, j] = np.minimum(cand.min(axis=1), INF)
    closing = dp[full] + W[1:, 0]
    best = int(closing.min())
    if best >= INF:
        return None
    # reconstruct backwards, preferring the lowest index on ties
    j = int(np.argmin(closing))
    mask, rev = full, [j]
    while mask != (1 << j):
        prev = mask ^ (1 << j)
        cand = dp[prev] + Wo[:, j]
        i = int(np.argmin(np.where(((prev >> np.arange(m)) & 1) == 1, cand, INF)))
        rev.append(i)
        mask, j = prev, i
    tour = [start] + [others[i] for i in reversed(rev)]
    return best, tour


def _dfs_tour(task: StructuredTask, start: str, budget: int = 200_000) -> list[str] | None:
    """Nearest-first depth-first search for any Hamiltonian cycle."""
    arcs = usable_arcs(task)
    n = len(task.graph.nodes)
    back = {u for u, outs in arcs.items() if any(v == start for v, _ in outs)}
    path, seen = [start], {start}
    iters = [iter(sorted(arcs[start], key=lambda t: (t[1], node_key(t[0]))))]
    steps = 0
    while iters:
        steps += 1
        if steps > budget:
            return None
        if len(path) == n:
            if path[-1] in back:
                return path
            # dead end: pop
            iters.pop()
            seen.discard(path.pop())
            continue
        nxt = None
        for v, _ in iters[-1]:
            if v not in seen:
                nxt = v
                break
        if nxt is None:
            iters.pop()
            seen.discard(path.pop())
            continue
        path.append(nxt)
        seen.add(nxt)
        iters.append(iter(sorted(arcs[nxt], key=lambda t: (t[1], node_key(t[0])))))
    return None


def _two_opt(task: StructuredTask, tour: list[str]) -> list[str]:
    best = tour_cost(task, tour)
    improved = True
    while improved:
        improved = False
        for i in range(1, len(tour) - 1):
            for j in range(i + 1, len(tour)):
                cand = tour[:i] + tour[i:j + 1][::-1] + tour[j + 1:]
                c = tour_cost(task, cand)
                if c is not None and c < best:
                    tour, best, improved = cand, c, True
    return tour


def solve_routing(task: StructuredTask) -> SolverResult:
    fam = task.family
    if fam == "hamilton":
        return _solve_hamilton(task)
    start = task.query.start or task.graph.nodes[0]
    max_cost = task.constraints.max_cost
    if task_exactness(task) == "exact_small":
        res = held_karp(task, start)
        if res is None or (max_cost is not None and res[0] > max_cost):
            return _infeasible(fam)
        return _ok(fam, res[0], {"tour": res[1]})
    tour = _dfs_tour(task, start)
    if tour is None:
        return _infeasible(fam)
    if not task.graph.directed:
        tour = _two_opt(task, tour)
    cost = tour_cost(task, tour)
    if max_cost is not None and cost > max_cost:
        return _infeasible(fam)
    return _ok(fam, cost, {"tour": tour})


def hamilton_path(g: Graph, budget: int = HAMILTON_BUDGET) -> list[str] | None | str:
    """Backtracking Hamiltonian path; returns "budget" when the search gives up."""
    adj = g.adjacency() if g.directed else undirected_adjacency(g)
    n = len(g.nodes)
    if n == 0:
        return []
    steps = 0
    und = undirected_adjacency(g)

    def remaining_connected(seen: set[str], last: str) -> bool:
        rest = [v for v in g.nodes if v not in seen]
        if not rest:
            return True
        # every unvisited node must be reachable from `last` through unvisited nodes
        frontier, reach = [last], {last}
        while frontier:
            u = frontier.pop()
            for v in adj[u]:
                if v not in seen and v not in reach:
                    reach.add(v)
                    frontier.append(v)
        if len(reach) - 1 < len(rest):
            return False
        if not g.directed:
            return True
        return all(any(w in reach or w == last for w in und[v]) for v in rest)

    def extend(path: list[str], seen: set[str]):
        nonlocal steps
        steps += 1
        if steps > budget:
            raise TimeoutError
        if len(path) == n:
            return list(path)
        last = path[-1]
        options = [v for v in adj[last] if v not in seen]
        options.sort(key=lambda v: (sum(1 for w in adj[v] if w not in seen), node_key(v)))
        for v in options:
            path.append(v)
            seen.add(v)
            if remaining_connected(seen, v):
                got = extend(path, seen)
                if got is not None:
                    return got
            path.pop()
            seen.discard(v)
        return None

    try:
        for s in g.nodes:
            got = extend([s], {s})
            if got is not None:
                return got
    except TimeoutError:
        return "budget"
    except RecursionError:
        return "budget"
    return None


def _solve_hamilton(task: StructuredTask) -> SolverResult:
    got = hamilton_path(task.graph)
    if got == "budget":
        return _out_of_range(task.family)
    if got is None:
        return _infeasible(task.family)
    return _ok(task.family, True, {"path": got})


# ----------------------------------------------------------------------------
# covering


def _color_exact(adj: dict[str, list[str]], nodes: list[str], k: int, budget: int) -> dict[str, int] | None | str:
    order = sorted(nodes, key=lambda v: (-len(adj[v]), node_key(v)))
    colors: dict[str, int] = {}
    steps = 0

    def go(i: int, used: int):
        nonlocal steps
        steps += 1
        if steps > budget:
            raise TimeoutError
        if i == len(order):
            return True
        v = order[i]
        taken = {colors[u] for u in adj[v] if u in colors}
        # symmetry breaking: only open one new color at a time
        for c in range(min(k, used + 1)):
            if c not in taken:
                colors[v] = c
                if go(i + 1, max(used, c + 1)):
                    return True
                del colors[v]
        return False

    try:
        return dict(colors) if go(0, 0) else None
    except TimeoutError:
        return "budget"


def chromatic_coloring(g: Graph) -> tuple[int, dict[str, int]]:
    adj = undirected_adjacency(g)
    nodes = list(g.nodes)
    if not nodes:
        return 0, {}
    for k in range(1, len(nodes) + 1):
        col = _color_exact(adj, nodes, k, COLORING_BUDGET)
        if isinstance(col, dict):
            return k, _normalize_colors(col, nodes)
    raise AssertionError("unreachable")


def _normalize_colors(col: dict[str, int], nodes: list[str]) -> dict[str, int]:
    remap: dict[int, int] = {}
    out = {}
    for v in nodes:
        c = col[v]
        if c not in remap:
            remap[c] = len(remap)
        out[v] = remap[c]
    return out


def dsatur(g: Graph) -> dict[str, int]:
    adj = undirected_adjacency(g)
    colors: dict[str, int] = {}
    while len(colors) < len(g.nodes):
        def score(v):
            sat = len({colors[u] for u in adj[v] if u in colors})
            return (-sat, -len(adj[v]), node_key(v))
        v = min((v for v in g.nodes if v not in colors), key=score)
        taken = {colors[u] for u in adj[v] if u in colors}
        c = 0
        while c in taken:
            c += 1
        colors[v] = c
    return {v: colors[v] for v in g.nodes}


def solve_covering(task: StructuredTask) -> SolverResult:
    fam = task.family
    exact = task_exactness(task) == "exact_small"
    g = task.graph
    if fam == "coloring":
        k = task.constraints.max_colors
        if exact:
            chi, col = chromatic_coloring(g)
            if k is not None and chi > k:
                return _infeasible(fam)
            return _ok(fam, chi, {"colors": col})
        col = dsatur(g)
        used = len(set(col.values()))
        if k is not None and used > k:
            got = _color_exact(undirected_adjacency(g), list(g.nodes), k, COLORING_BUDGET)
            if got == "budget":
                return _out_of_range(fam)
            if got is None:
                return _infeasible(fam)
            col = _normalize_colors(got, list(g.nodes))
            used = len(set(col.values()))
        return _ok(fam, used, {"colors": col})
    # vertex cover
    budget = task.constraints.max_size
    if exact:
        cover = min_vertex_cover(g)
        if budget is not None and len(cover) > budget:
            return _infeasible(fam)
        return _ok(fam, len(cover), {"cover": cover})
    cover = greedy_vertex_cover(g)
    if budget is not None and len(cover) > budget:
        cover = min_vertex_cover(g)
        if len(cover) > budget:
            return _infeasible(fam)
    return _ok(fam, len(cover), {"cover": cover})


def min_vertex_cover(g: Graph) -> list[str]:
    """Exact branch and bound over edges: some endpoint of any uncovered edge is chosen."""
    edges = [(e.u, e.v) for e in g.edges]
    best = [sort_nodes(g.nodes)]

    def go(chosen: frozenset[str], remaining: list[tuple[str, str]]):
        if len(chosen) >= len(best[0]):
            return
        rest = [(u, v) for (u, v) in remaining if u not in chosen and v not in chosen]
        if not rest:
            best[0] = sort_nodes(chosen)
            return
        # lower bound from a greedy matching of the remaining edges
        lb, used = 0, set()
        for u, v in rest:
            if u not in used and v not in used:
                used |= {u, v}
                lb += 1
        if len(chosen) + lb >= len(best[0]):
            return
        u, v = rest[0]
        go(chosen | {u}, rest)
        go(chosen | {v}, rest)

    go(frozenset(), edges)
    return best[0]


def greedy_vertex_cover(g: Graph) -> list[str]:
    cover: set[str] = set()
    for e in g.edges:
        if e.u not in cover and e.v not in cover:
            cover |= {e.u, e.v}
    adj = undirected_adjacency(g)
    for v in sorted(cover, key=lambda x: (len(adj[x]), node_key(x))):
        if all(u in cover for u in adj[v]):
            cover.discard(v)
    return sort_nodes(cover)


# ----------------------------------------------------------------------------
# flow, matching, mst


def solve_flow_matching(task: StructuredTask) -> SolverResult:
    fam = task.family
    if fam == "mst":
        res = kruskal(task.graph)
        if res is None:
            return _infeasible(fam)
        return _ok(fam, res[0], {"edges": res[1]})
    if fam == "max_flow":
        value, flows = edmonds_karp(task.graph, task.query.source, task.query.target)
        return _ok(fam, value, {"flow": flows})
    matching = max_bipartite_matching(task.graph)
    return _ok(fam, len(matching), {"matching": matching})


def kruskal(g: Graph) -> tuple[int, list[list[str]]] | None:
    parent = {n: n for n in g.nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    total, chosen = 0, []
    for e in sorted(g.edges, key=lambda e: (e.weight or 0, node_key(e.u), node_key(e.v))):
        ru, rv = find(e.u), find(e.v)
        if ru != rv:
            parent[ru] = rv
            total += e.weight or 0
            chosen.append(list(edge_key(e.u, e.v, False)))
    if len(chosen) != max(len(g.nodes) - 1, 0):
        return None
    chosen.sort(key=lambda p: (node_key(p[0]), node_key(p[1])))
    return total, chosen


def edmonds_karp(g: Graph, s: str, t: str) -> tuple[int, list[list]]:
    """Shortest-augmenting-path max flow on an edge-indexed residual graph."""
    edges = g.edges
    flow = [0] * len(edges)
    # residual arcs: (edge index, +1 forward / -1 backward)
    out: dict[str, list[tuple[str, int, int]]] = {n: [] for n in g.nodes}
    for i, e in enumerate(edges):
        out[e.u].append((e.v, i, 1))
        out[e.v].append((e.u, i, -1))
    for n in out:
        out[n].sort(key=lambda a: (node_key(a[0]), a[1], -a[2]))

    def residual(i: int, sign: int) -> int:
        c = edges[i].capacity or 0
        if sign == 1:
            return c - flow[i]
        return c + flow[i] if not g.directed else flow[i]

    total = 0
    if s == t:
        return 0, [[e.u, e.v, 0] for e in edges]
    while True:
        prev: dict[str, tuple[str, int, int]] = {}
        q = deque([s])
        seen = {s}
        while q and t not in seen:
            u = q.popleft()
            for v, i, sign in out[u]:
                if v not in seen and residual(i, sign) > 0:
                    seen.add(v)
                    prev[v] = (u, i, sign)
                    q.append(v)
        if t not in seen:
            break
        bottleneck, v = None, t
        while v != s:
            u, i, sign = prev[v]
            r = residual(i, sign)
            bottleneck = r if bottleneck is None else min(bottleneck, r)
            v = u
        v = t
        while v != s:
            u, i, sign = prev[v]
            flow[i] += sign * bottleneck
            v = u
        total += bottleneck
    witness = []
    for e, f in zip(edges, flow):
        if f >= 0:
            witness.append([e.u, e.v, f])
        else:
            witness.append([e.v, e.u, -f])
    return total, witness


def bipartition(g: Graph) -> tuple[list[str], list[str]] | None:
    labels = {n: g.attr(n).label for n in g.nodes}
    if all(lab in ("L", "R") for lab in labels.values()):
        return ([n for n in g.nodes if labels[n] == "L"], [n for n in g.nodes if labels[n] == "R"])
    col = two_coloring(g)
    if col is None:
        return None
    return ([n for n in g.nodes if col[n] == 0], [n for n in g.nodes if col[n] == 1])


def max_bipartite_matching(g: Graph) -> list[list[str]]:
    parts = bipartition(g)
    if parts is None:
        return []
    left, right = parts
    rset = set(right)
    adj = undirected_adjacency(g)
    match_r: dict[str, str] = {}

    def augment(u: str, seen: set[str]) -> bool:
        for v in adj[u]:
            if v in rset and v not in seen:
                seen.add(v)
                if v not in match_r or augment(match_r[v], seen):
                    match_r[v] = u
                    return True
        return False

    for u in left:
        augment(u, set())
    pairs = sorted(([u, v] for v, u in match_r.items()), key=lambda p: (node_key(p[0]), node_key(p[1])))
    return pairs


# ----------------------------------------------------------------------------
# ordering and decomposition


def kahn_order(g: Graph) -> list[str] | None:
    if not g.directed:
        return list(g.nodes) if not g.edges else None
    indeg = {n: 0 for n in g.nodes}
    for e in g.edges:
        indeg[e.v] += 1
    adj = g.adjacency()
    heap = [(node_key(n), n) for n in g.nodes if indeg[n] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        _, u = heapq.heappop(heap)
        order.append(u)
        for v in adj[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(heap, (node_key(v), v))
    return order if len(order) == len(g.nodes) else None


def strongly_connected_components(g: Graph) -> list[list[str]]:
    adj = g.adjacency() if g.directed else undirected_adjacency(g)
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    comps: list[list[str]] = []
    counter = 0
    for root in g.nodes:
        if root in index:
            continue
        work = [(root, iter(adj[root]))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            u, it = work[-1]
            advanced = False
            for v in it:
                if v not in index:
                    index[v] = low[v] = counter
                    counter += 1
                    stack.append(v)
                    on_stack.add(v)
                    work.append((v, iter(adj[v])))
                    advanced = True
                    break
                if v in on_stack:
                    low[u] = min(low[u], index[v])
            if advanced:
                continue
            work.pop()
            if work:
                low[work[-1][0]] = min(low[work[-1][0]], low[u])
            if low[u] == index[u]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == u:
                        break
                comps.append(sort_nodes(comp))
    comps.sort(key=lambda c: node_key(c[0]))
    return comps


def find_bridges(g: Graph) -> list[list[str]]:
    adj = undirected_adjacency(g)
    disc: dict[str, int] = {}
    low: dict[str, int] = {}
    out = []
    timer = 0
    for root in g.nodes:
        if root in disc:
            continue
        disc[root] = low[root] = timer
        timer += 1
        work = [(root, None, iter(adj[root]))]
        while work:
            u, parent, it = work[-1]
            advanced = False
            for v in it:
                if v == parent:
                    continue
                if v in disc:
                    low[u] = min(low[u], disc[v])
                else:
                    disc[v] = low[v] = timer
                    timer += 1
                    work.append((v, u, iter(adj[v])))
                    advanced = True
                    break
            if advanced:
                continue
            work.pop()
            if parent is not None:
                low[parent] = min(low[parent], low[u])
                if low[u] > disc[parent]:
                    out.append(list(edge_key(parent, u, False)))
    out.sort(key=lambda p: (node_key(p[0]), node_key(p[1])))
    return out


def solve_order_decomp(task: StructuredTask) -> SolverResult:
    fam, g = task.family, task.graph
    if fam == "topological_sort":
        order = kahn_order(g)
        if order is None:
            return _infeasible(fam)
        return _ok(fam, None, {"order": order})
    if fam == "scc":
        comps = strongly_connected_components(g)
        return _ok(fam, len(comps), {"components": comps})
    br = find_bridges(g)
    return _ok(fam, len(br), {"bridges": br})


# ----------------------------------------------------------------------------
# checks


def bfs_path(adj: dict[str, list[str]], s: str, t: str) -> list[str] | None:
    prev = {s: None}
    q = deque([s])
    while q:
        u = q.popleft()
        if u == t:
            path = [t]
            while prev[path[-1]] is not None:
                path.append(prev[path[-1]])
            return path[::-1]
        for v in adj[u]:
            if v not in prev:
                prev[v] = u
                q.append(v)
    return None


def reachable(adj: dict[str, list[str]], s: str) -> list[str]:
    seen = {s}
    stack = [s]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return sort_nodes(seen)


def find_cycle(g: Graph) -> list[str] | None:
    """A closed walk [a, ..., a] on distinct nodes, or None if acyclic."""
    if g.directed:
        adj = g.adjacency()
        color = {n: 0 for n in g.nodes}
        for root in g.nodes:
            if color[root]:
                continue
            stack = [(root, iter(adj[root]))]
            path = [root]
            color[root] = 1
            while stack:
                u, it = stack[-1]
                nxt = next(it, None)
                if nxt is None:
                    color[u] = 2
                    stack.pop()
                    path.pop()
                    continue
                if color[nxt] == 1:
                    i = path.index(nxt)
                    return path[i:] + [nxt]
                if color[nxt] == 0:
                    color[nxt] = 1
                    path.append(nxt)
                    stack.append((nxt, iter(adj[nxt])))
        return None
    adj = undirected_adjacency(g)
    parent: dict[str, str | None] = {}
    depth: dict[str, int] = {}
    for root in g.nodes:
        if root in parent:
            continue
        parent[root], depth[root] = None, 0
        q = deque([root])
        while q:
            u = q.popleft()
            for v in adj[u]:
                if v not in parent:
                    parent[v], depth[v] = u, depth[u] + 1
                    q.append(v)
                elif parent[u] != v:
                    return _close_cycle(parent, depth, u, v)
    return None


def _close_cycle(parent, depth, u, v) -> list[str]:
    a, b = [u], [v]
    while depth[a[-1]] > depth[b[-1]]:
        a.append(parent[a[-1]])
    while depth[b[-1]] > depth[a[-1]]:
        b.append(parent[b[-1]])
    while a[-1] != b[-1]:
        a.append(parent[a[-1]])
        b.append(parent[b[-1]])
    cyc = a + b[-2::-1]
    return cyc + [cyc[0]]


def two_coloring(g: Graph) -> dict[str, int] | None:
    adj = undirected_adjacency(g)
    col: dict[str, int] = {}
    for root in g.nodes:
        if root in col:
            continue
        col[root] = 0
        q = deque([root])
        while q:
            u = q.popleft()
            for v in adj[u]:
                if v not in col:
                    col[v] = 1 - col[u]
                    q.append(v)
                elif col[v] == col[u]:
                    return None
    return {n: col[n] for n in g.nodes}


def odd_cycle(g: Graph) -> list[str] | None:
    adj = undirected_adjacency(g)
    parent: dict[str, str | None] = {}
    depth: dict[str, int] = {}
    for root in g.nodes:
        if root in parent:
            continue
        parent[root], depth[root] = None, 0
        q = deque([root])
        while q:
            u = q.popleft()
            for v in adj[u]:
                if v not in parent:
                    parent[v], depth[v] = u, depth[u] + 1
                    q.append(v)
                elif depth[v] % 2 == depth[u] % 2:
                    return _close_cycle(parent, depth, u, v)
    return None


def solve_checks(task: StructuredTask) -> SolverResult:
    fam, g = task.family, task.graph
    if fam == "connectivity":
        adj = g.adjacency()
        s, t = task.query.source, task.query.target
        path = bfs_path(adj, s, t)
        if path is not None:
            return _ok(fam, True, {"path": path})
        return _ok(fam, False, {"component": reachable(adj, s)})
    if fam == "cycle":
        cyc = find_cycle(g)
        if cyc is None:
            return _ok(fam, False)
        return _ok(fam, True, {"cycle": cyc})
    col = two_coloring(g)
    if col is not None:
        return _ok(fam, True, {"coloring": col})
    return _ok(fam, False, {"odd_cycle": odd_cycle(g)})


# ----------------------------------------------------------------------------
# local structure


def solve_local(task: StructuredTask) -> SolverResult:
    fam, g = task.family, task.graph
    if fam == "common_neighbors":
        a, b = task.query.pair
        adj = g.adjacency()
        common = sort_nodes((set(adj[a]) & set(adj[b])) - {a, b})
        return _ok(fam, len(common), {"nodes": common})
    adj = {n: set(v) for n, v in undirected_adjacency(g).items()}
    best = None
    for e in g.edges:
        u, v = e.u, e.v
        for w in adj[u] & adj[v]:
            tri = sort_nodes({u, v, w})
            score = sum(g.attr(x).weight or 0 for x in tri)
            key = (-score, [node_key(x) for x in tri])
            if best is None or key < best[0]:
                best = (key, score, tri)
    if best is None:
        return _infeasible(fam)
    return _ok(fam, best[1], {"triangle": best[2]})


# ----------------------------------------------------------------------------
# pattern


def find_pattern(host: Graph, pattern: Graph) -> dict[str, str] | None:
    """Edge-preserving injective map pattern -> host (monomorphism)."""
    directed = host.directed
    h_out = host.adjacency() if directed else undirected_adjacency(host)
    h_in = _reverse_adj(host) if directed else h_out
    p_out = pattern.adjacency() if directed else undirected_adjacency(pattern)
    p_in = _reverse_adj(pattern) if directed else p_out
    hset_out = {n: set(v) for n, v in h_out.items()}
    # most constrained pattern nodes first, keeping the order connected when possible
    order: list[str] = []
    remaining = set(pattern.nodes)
    while remaining:
        linked = [v for v in remaining if any(u in order for u in p_out[v] + p_in[v])]
        pool = linked or list(remaining)
        v = min(pool, key=lambda x: (-(len(p_out[x]) + len(p_in[x])), node_key(x)))
        order.append(v)
        remaining.discard(v)
    mapping: dict[str, str] = {}
    used: set[str] = set()

    def fits(p: str, h: str) -> bool:
        if len(h_out[h]) < len(p_out[p]) or len(h_in[h]) < len(p_in[p]):
            return False
        for q in p_out[p]:
            if q in mapping and mapping[q] not in hset_out[h]:
                return False
        for q in p_in[p]:
            if q in mapping and h not in hset_out[mapping[q]]:
                return False
        return True

    def go(i: int) -> bool:
        if i == len(order):
            return True
        p = order[i]
        for h in host.nodes:
            if h not in used and fits(p, h):
                mapping[p] = h
                used.add(h)
                if go(i + 1):
                    return True
                del mapping[p]
                used.discard(h)
        return False

    if go(0):
        return {p: mapping[p] for p in sort_nodes(mapping)}
    return None


def _reverse_adj(g: Graph) -> dict[str, list[str]]:
    rev: dict[str, list[str]] = {n: [] for n in g.nodes}
    for e in g.edges:
        rev[e.v].append(e.u)
    for n in rev:
        rev[n].sort(key=node_key)
    return rev


def solve_pattern(task: StructuredTask) -> SolverResult:
    fam = task.family
    pattern = task.query.pattern
    if pattern is None or len(pattern.nodes) > PATTERN_MEDIUM_CAP:
        return _out_of_range(fam)
    mapping = find_pattern(task.graph, pattern)
    if mapping is None:
        return _ok(fam, False)
    return _ok(fam, True, {"mapping": mapping})


# ----------------------------------------------------------------------------
# message passing


def message_passing(g: Graph, rounds: int) -> dict[str, list[int]]:
    """h'_v = h_v + sum of h_u over neighbours u (in-neighbours when directed)."""
    incoming = _reverse_adj(g) if g.directed else undirected_adjacency(g)
    state = {n: list(g.attr(n).embedding or ()) for n in g.nodes}
    for _ in range(rounds):
        nxt = {}
        for v in g.nodes:
            acc = list(state[v])
            for u in incoming[v]:
                acc = [a + b for a, b in zip(acc, state[u])]
            nxt[v] = acc
        state = nxt
    return state


def solve_message_passing(task: StructuredTask) -> SolverResult:
    return _ok(task.family, None, {"states": message_passing(task.graph, task.query.rounds or 0)})


# ----------------------------------------------------------------------------
# dispatch


FAMILY_SOLVERS = {
    "shortest_path": solve_path,
    "shortest_path_cost": solve_path,
    "tsp": solve_routing,
    "hamilton": solve_routing,
    "coloring": solve_covering,
    "vertex_cover": solve_covering,
    "mst": solve_flow_matching,
    "max_flow": solve_flow_matching,
    "bipartite_matching": solve_flow_matching,
    "topological_sort": solve_order_decomp,
    "scc": solve_order_decomp,
    "bridges": solve_order_decomp,
    "connectivity": solve_checks,
    "cycle": solve_checks,
    "bipartite_check": solve_checks,
    "triangle_max_sum": solve_local,
    "common_neighbors": solve_local,
    "substructure": solve_pattern,
    "gnn_sum": solve_message_passing,
}


@lru_cache(maxsize=8192)
def _solve_cached(blob: bytes) -> SolverResult:
    task = canonical_parse(blob)
    return FAMILY_SOLVERS[task.family](task)


def solve(task: StructuredTask) -> SolverResult:
    """Reference solution; memoized on the canonical bytes of the task."""
    return _solve_cached(canonical_serialize(task))

