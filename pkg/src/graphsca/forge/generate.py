"""Deterministic instance generation for every family and difficulty tier.

An instance is a pure function of ``(family, difficulty, seed)``: the RNG is
seeded from a sha256 digest of the triple, so no global state leaks in.
Infeasible instances are never emitted; structures that must exist (a
Hamiltonian chain, a TSP tour, a pattern occurrence) are planted first and
noise edges are added around them.
"""
from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass

from ..core import (
    FAMILIES,
    TIERS,
    Answer,
    ConstraintSet,
    Edge,
    Graph,
    NodeAttr,
    Query,
    StructuredTask,
    edge_key,
    interface_for,
)
from ..solvers import SOLVED, dsatur, greedy_vertex_cover, min_vertex_cover, solve, tour_cost


class GeneratorError(RuntimeError):
    """The oracle rejected a planted instance; indicates a generator bug."""


@dataclass(frozen=True)
class TaskInstance:
    task: StructuredTask
    statement: str
    reference: Answer


@dataclass(frozen=True)
class DifficultyProfile:
    tier: str
    nodes: tuple[int, int]
    density: tuple[float, float]
    constraints: tuple[str, ...]
    exactness: str


NODE_BANDS = {"D1": (4, 8), "D2": (8, 14), "D3": (12, 20), "D4": (18, 30)}
DENSITY_BANDS = {"D1": (0.25, 0.45), "D2": (0.2, 0.4), "D3": (0.15, 0.3), "D4": (0.1, 0.25)}
# routing and covering families keep exact search tractable at D2/D3
NODE_OVERRIDES = {
    ("tsp", "D2"): (8, 10),
    ("tsp", "D3"): (12, 15),
    ("coloring", "D2"): (8, 12),
    ("vertex_cover", "D2"): (8, 12),
}
_PATH_FAMILIES = ("shortest_path", "shortest_path_cost")


def _constraints_for(family: str, tier: str) -> tuple[str, ...]:
    if family in _PATH_FAMILIES and tier in ("D3", "D4"):
        return ("blocked_edges",)
    if family == "tsp" and tier in ("D3", "D4"):
        return ("blocked_edges", "max_cost")
    if family == "coloring":
        return ("max_colors",)
    if family == "vertex_cover":
        return ("max_size",)
    return ()


def profile(family: str, tier: str) -> DifficultyProfile:
    interface_for(family)
    if tier not in TIERS:
        raise ValueError(f"unknown difficulty {tier!r}")
    lo, hi = NODE_OVERRIDES.get((family, tier), NODE_BANDS[tier])
    if family == "tsp":
        strict = "exact_small" if hi <= 15 else "feasible_large"
    elif family in ("coloring", "vertex_cover"):
        strict = "exact_small" if hi <= 12 else ("feasible" if family == "coloring" else "feasible_large")
    elif family == "substructure":
        strict = "exact_medium" if tier == "D4" else "exact_small"
    else:
        strict = interface_for(family).exactness
    return DifficultyProfile(tier, (lo, hi), DENSITY_BANDS[tier], _constraints_for(family, tier), strict)


def derive_seed(*parts) -> int:
    """64-bit integer from a sha256 digest of the joined parts."""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def rng_for(family: str, tier: str, seed: int) -> random.Random:
    return random.Random(derive_seed(family, tier, seed))


# ----------------------------------------------------------------------------
# structure helpers


def _nodes(n: int, prefix: str = "n") -> list[str]:
    return [f"{prefix}{i}" for i in range(n)]


def _tree_pairs(rng: random.Random, nodes: list[str]) -> list[tuple[str, str]]:
    order = list(nodes)
    rng.shuffle(order)
    return [(order[rng.randrange(i)], order[i]) for i in range(1, len(order))]


def _add_random(rng, nodes, p, directed, pairs: set, allowed=None) -> None:
    for i, a in enumerate(nodes):
        for j, b in enumerate(nodes):
            if i == j or (not directed and j < i):
                continue
            key = edge_key(a, b, directed)
            if key in pairs:
                continue
            if allowed is not None and not allowed(a, b):
                continue
            if rng.random() < p:
                pairs.add(key)


def _keyed(pairs, directed) -> set[tuple[str, str]]:
    return {edge_key(a, b, directed) for a, b in pairs}


def _graph(nodes, pairs, directed, weights=None, capacities=None, attrs=None) -> Graph:
    edges = []
    for u, v in sorted(pairs):
        w = weights[(u, v)] if weights is not None else None
        c = capacities[(u, v)] if capacities is not None else None
        edges.append(Edge(u, v, w, c))
    return Graph(tuple(nodes), tuple(edges), directed, attrs or {})


def _sized(rng, family, tier) -> tuple[int, float]:
    prof = profile(family, tier)
    n = rng.randint(*prof.nodes)
    p = rng.uniform(*prof.density)
    return n, p


def _connected_pairs(rng, nodes, p, directed=False) -> set[tuple[str, str]]:
    pairs = _keyed(_tree_pairs(rng, nodes), directed)
    _add_random(rng, nodes, p, directed, pairs)
    return pairs


def _weights(rng, pairs, lo=1, hi=9) -> dict:
    return {k: rng.randint(lo, hi) for k in sorted(pairs)}


# ----------------------------------------------------------------------------
# per-family builders; each returns (graph, query, constraints)


def _gen_path(rng, family, tier):
    n, p = _sized(rng, family, tier)
    nodes = _nodes(n)
    directed = tier == "D4"
    s, t = rng.sample(nodes, 2)
    if directed:
        middle = [x for x in nodes if x not in (s, t)]
        rng.shuffle(middle)
        chain = [s] + middle[: rng.randint(1, max(1, n // 3))] + [t]
        pairs = set(zip(chain, chain[1:]))
        _add_random(rng, nodes, p, True, pairs)
    else:
        pairs = _connected_pairs(rng, nodes, p)
    w = _weights(rng, pairs)
    g = _graph(nodes, pairs, directed, weights=w)
    constraints = ConstraintSet()
    if tier in ("D3", "D4"):
        protected = set(zip(chain, chain[1:])) if directed else set()
        candidates = [k for k in sorted(pairs) if k not in protected]
        rng.shuffle(candidates)
        blocked, want = [], rng.randint(2, 3)
        for k in candidates:
            if len(blocked) >= want:
                break
            trial = ConstraintSet(blocked_edges=tuple(blocked + [k]))
            probe = StructuredTask(family, tier, 0, g, Query(source=s, target=t), trial)
            if solve(probe).status == SOLVED:
                blocked.append(k)
        constraints = ConstraintSet(blocked_edges=tuple(blocked))
    return g, Query(source=s, target=t), constraints


def _gen_tsp(rng, family, tier):
    n, p = _sized(rng, family, tier)
    nodes = _nodes(n)
    start = nodes[0]
    if tier in ("D1", "D2"):
        pairs = {edge_key(a, b, False) for i, a in enumerate(nodes) for b in nodes[i + 1:]}
        return _graph(nodes, pairs, False, weights=_weights(rng, pairs, 1, 20)), Query(start=start), ConstraintSet()
    order = list(nodes)
    rng.shuffle(order)
    cycle = _keyed(zip(order, order[1:] + order[:1]), tier == "D4")
    if tier == "D3":
        pairs = {edge_key(a, b, False) for i, a in enumerate(nodes) for b in nodes[i + 1:]}
        w = _weights(rng, pairs, 1, 20)
        extras = sorted(pairs - cycle)
        rng.shuffle(extras)
        blocked = tuple(extras[:3])
        g = _graph(nodes, pairs, False, weights=w)
        tmp = StructuredTask(family, tier, 0, g, Query(start=start), ConstraintSet(blocked_edges=blocked))
        planted = tour_cost(tmp, [start] + _rotate_after(order, start))
        return g, Query(start=start), ConstraintSet(blocked_edges=blocked, max_cost=planted)
    # D4: sparse directed host; cheap planted cycle keeps nearest-first search on it
    pairs = set(cycle)
    _add_random(rng, nodes, p, True, pairs)
    w = {k: (rng.randint(1, 3) if k in cycle else rng.randint(4, 20)) for k in sorted(pairs)}
    extras = sorted(pairs - cycle)
    rng.shuffle(extras)
    blocked = tuple(extras[:3])
    g = _graph(nodes, pairs, True, weights=w)
    tmp = StructuredTask(family, tier, 0, g, Query(start=start), ConstraintSet(blocked_edges=blocked))
    planted = tour_cost(tmp, [start] + _rotate_after(order, start))
    return g, Query(start=start), ConstraintSet(blocked_edges=blocked, max_cost=planted + rng.randint(0, 5))


def _rotate_after(order, start):
    i = order.index(start)
    return order[i + 1:] + order[:i]


def _gen_hamilton(rng, family, tier):
    n, p = _sized(rng, family, tier)
    nodes = _nodes(n)
    directed = tier in ("D3", "D4")
    chain = list(nodes)
    rng.shuffle(chain)
    pairs = _keyed(zip(chain, chain[1:]), directed)
    _add_random(rng, nodes, p / 2, directed, pairs)
    return _graph(nodes, pairs, directed), Query(), ConstraintSet()


_COLOR_CLASSES = {"D1": 2, "D2": 3, "D3": 3, "D4": 4}


def _gen_coloring(rng, family, tier):
    n, p = _sized(rng, family, tier)
    nodes = _nodes(n)
    k = _COLOR_CLASSES[tier]
    part = {v: i % k for i, v in enumerate(nodes)}
    shuffled = list(part.values())
    rng.shuffle(shuffled)
    part = dict(zip(nodes, shuffled))
    pairs: set = set()
    _add_random(rng, nodes, max(p, 0.3), False, pairs, allowed=lambda a, b: part[a] != part[b])
    if not pairs:
        a = nodes[0]
        b = next(v for v in nodes if part[v] != part[a])
        pairs.add(edge_key(a, b, False))
    g = _graph(nodes, pairs, False)
    if n <= 12:
        max_colors = k
    else:
        max_colors = max(k, len(set(dsatur(g).values())))
    return g, Query(), ConstraintSet(max_colors=max_colors)


def _gen_vertex_cover(rng, family, tier):
    n, p = _sized(rng, family, tier)
    nodes = _nodes(n)
    pairs = _connected_pairs(rng, nodes, p)
    g = _graph(nodes, pairs, False)
    if n <= 12:
        size = len(min_vertex_cover(g)) + rng.randint(0, 1)
    else:
        size = len(greedy_vertex_cover(g))
    return g, Query(), ConstraintSet(max_size=size)


def _gen_mst(rng, family, tier):
    n, p = _sized(rng, family, tier)
    nodes = _nodes(n)
    pairs = _connected_pairs(rng, nodes, p)
    return _graph(nodes, pairs, False, weights=_weights(rng, pairs, 1, 20)), Query(), ConstraintSet()


def _gen_max_flow(rng, family, tier):
    n, p = _sized(rng, family, tier)
    nodes = _nodes(n)
    s, t = rng.sample(nodes, 2)
    middle = [x for x in nodes if x not in (s, t)]
    rng.shuffle(middle)
    chain = [s] + middle[: rng.randint(1, max(1, n // 2))] + [t]
    pairs = set(zip(chain, chain[1:]))
    _add_random(rng, nodes, p, True, pairs, allowed=lambda a, b: b != s and a != t)
    caps = _weights(rng, pairs, 1, 10)
    return _graph(nodes, pairs, True, capacities=caps), Query(source=s, target=t), ConstraintSet()


def _gen_matching(rng, family, tier):
    n, p = _sized(rng, family, tier)
    if n % 2:
        n += 1
    nodes = _nodes(n)
    order = list(nodes)
    rng.shuffle(order)
    left = set(order[: n // 2])
    attrs = {v: NodeAttr(label="L" if v in left else "R") for v in nodes}
    pairs: set = set()
    _add_random(rng, nodes, max(p, 0.25), False, pairs, allowed=lambda a, b: (a in left) != (b in left))
    if not pairs:
        a = min(left)
        b = next(v for v in nodes if v not in left)
        pairs.add(edge_key(a, b, False))
    return _graph(nodes, pairs, False, attrs=attrs), Query(), ConstraintSet()


def _gen_topo(rng, family, tier):
    n, p = _sized(rng, family, tier)
    nodes = _nodes(n)
    order = list(nodes)
    rng.shuffle(order)
    rank = {v: i for i, v in enumerate(order)}
    pairs: set = set()
    _add_random(rng, nodes, p, True, pairs, allowed=lambda a, b: rank[a] < rank[b])
    if not pairs:
        pairs.add((order[0], order[1]))
    return _graph(nodes, pairs, True), Query(), ConstraintSet()


def _gen_scc(rng, family, tier):
    n, p = _sized(rng, family, tier)
    nodes = _nodes(n)
    pairs: set = set()
    _add_random(rng, nodes, p / 2, True, pairs)
    # plant one short directed cycle so at least one non-trivial component exists
    cyc = rng.sample(nodes, 3)
    pairs |= set(zip(cyc, cyc[1:] + cyc[:1]))
    return _graph(nodes, pairs, True), Query(), ConstraintSet()


def _gen_bridges(rng, family, tier):
    n, p = _sized(rng, family, tier)
    nodes = _nodes(n)
    pairs = _keyed(_tree_pairs(rng, nodes), False)
    _add_random(rng, nodes, p / 3, False, pairs)
    return _graph(nodes, pairs, False), Query(), ConstraintSet()


def _gen_connectivity(rng, family, tier):
    n, p = _sized(rng, family, tier)
    nodes = _nodes(n)
    directed = tier in ("D3", "D4")
    s, t = rng.sample(nodes, 2)
    yes = rng.random() < 0.5
    if yes:
        if directed:
            middle = [x for x in nodes if x not in (s, t)]
            rng.shuffle(middle)
            chain = [s] + middle[: rng.randint(0, max(1, n // 3))] + [t]
            pairs = set(zip(chain, chain[1:]))
            _add_random(rng, nodes, p / 2, True, pairs)
        else:
            pairs = _connected_pairs(rng, nodes, p / 2)
    else:
        rest = [x for x in nodes if x not in (s, t)]
        rng.shuffle(rest)
        cut = rng.randint(0, len(rest))
        side_a = set([s] + rest[:cut])
        pairs = set()
        if directed:
            # arcs inside either side, plus arcs from t's side back to s's side only
            _add_random(rng, nodes, p, True, pairs, allowed=lambda a, b: (a in side_a) == (b in side_a) or b in side_a)
        else:
            _add_random(rng, nodes, p, False, pairs, allowed=lambda a, b: (a in side_a) == (b in side_a))
        if not pairs:
            same = sorted(side_a) if len(side_a) >= 2 else sorted(set(nodes) - side_a)
            pairs.add(edge_key(same[0], same[1], directed))
    return _graph(nodes, pairs, directed), Query(source=s, target=t), ConstraintSet()


def _gen_cycle(rng, family, tier):
    n, p = _sized(rng, family, tier)
    nodes = _nodes(n)
    directed = tier in ("D3", "D4")
    yes = rng.random() < 0.5
    if directed:
        order = list(nodes)
        rng.shuffle(order)
        rank = {v: i for i, v in enumerate(order)}
        pairs: set = set()
        _add_random(rng, nodes, p, True, pairs, allowed=lambda a, b: rank[a] < rank[b])
        if not pairs:
            pairs.add((order[0], order[1]))
        if yes:
            # a forward chain closed by one back arc
            a, b = sorted(rng.sample(range(n), 2))
            for i in range(a, b):
                pairs.add((order[i], order[i + 1]))
            pairs.add((order[b], order[a]))
    else:
        pairs = _keyed(_tree_pairs(rng, nodes), False)
        if yes:
            candidates = [edge_key(a, b, False) for i, a in enumerate(nodes) for b in nodes[i + 1:]]
            candidates = [k for k in candidates if k not in pairs]
            pairs.add(rng.choice(candidates))
        elif n > 4:
            # forest: drop a random tree edge sometimes
            drop = sorted(pairs)[rng.randrange(len(pairs))]
            pairs.discard(drop)
    return _graph(nodes, pairs, directed), Query(), ConstraintSet()


def _gen_bipartite_check(rng, family, tier):
    n, p = _sized(rng, family, tier)
    nodes = _nodes(n)
    side = {v: rng.randint(0, 1) for v in nodes}
    side[nodes[0]], side[nodes[1]] = 0, 1
    pairs: set = set()
    _add_random(rng, nodes, max(p, 0.25), False, pairs, allowed=lambda a, b: side[a] != side[b])
    if rng.random() < 0.5:
        # an odd cycle: a triangle on fresh edges
        a, b, c = rng.sample(nodes, 3)
        pairs |= {edge_key(a, b, False), edge_key(b, c, False), edge_key(a, c, False)}
    if not pairs:
        pairs.add(edge_key(nodes[0], nodes[1], False))
    return _graph(nodes, pairs, False), Query(), ConstraintSet()


def _gen_triangle(rng, family, tier):
    n, p = _sized(rng, family, tier)
    nodes = _nodes(n)
    pairs = _connected_pairs(rng, nodes, p / 2)
    a, b, c = rng.sample(nodes, 3)
    pairs |= {edge_key(a, b, False), edge_key(b, c, False), edge_key(a, c, False)}
    attrs = {v: NodeAttr(weight=rng.randint(1, 20)) for v in nodes}
    return _graph(nodes, pairs, False, attrs=attrs), Query(), ConstraintSet()


def _gen_common_neighbors(rng, family, tier):
    n, p = _sized(rng, family, tier)
    nodes = _nodes(n)
    pairs = _connected_pairs(rng, nodes, p)
    a, b = rng.sample(nodes, 2)
    return _graph(nodes, pairs, False), Query(pair=(a, b)), ConstraintSet()


def _gen_substructure(rng, family, tier):
    n, p = _sized(rng, family, tier)
    nodes = _nodes(n)
    k = rng.randint(5, 6) if tier == "D4" else rng.randint(3, 4)
    pnodes = _nodes(k, "p")
    # pattern: a random DAG over a connected skeleton
    order = list(pnodes)
    rng.shuffle(order)
    rank = {v: i for i, v in enumerate(order)}
    ppairs = set()
    for i in range(1, k):
        j = rng.randrange(i)
        ppairs.add((order[j], order[i]))
    _add_random(rng, pnodes, 0.3, True, ppairs, allowed=lambda a, b: rank[a] < rank[b])
    pattern = _graph(pnodes, ppairs, True)
    pairs: set = set()
    _add_random(rng, nodes, p / 2, True, pairs)
    image = dict(zip(pnodes, rng.sample(nodes, k)))
    for a, b in ppairs:
        pairs.add((image[a], image[b]))
    return _graph(nodes, pairs, True), Query(pattern=pattern), ConstraintSet()


_GNN_ROUNDS = {"D1": (1, 1), "D2": (1, 2), "D3": (2, 3), "D4": (3, 3)}


def _gen_gnn(rng, family, tier):
    n, p = _sized(rng, family, tier)
    nodes = _nodes(n)
    pairs = _connected_pairs(rng, nodes, p / 2)
    dim = rng.randint(2, 4)
    attrs = {v: NodeAttr(embedding=tuple(rng.randint(0, 3) for _ in range(dim))) for v in nodes}
    rounds = rng.randint(*_GNN_ROUNDS[tier])
    return _graph(nodes, pairs, False, attrs=attrs), Query(rounds=rounds, aggregation="sum"), ConstraintSet()


_BUILDERS = {
    "shortest_path": _gen_path,
    "shortest_path_cost": _gen_path,
    "tsp": _gen_tsp,
    "hamilton": _gen_hamilton,
    "coloring": _gen_coloring,
    "vertex_cover": _gen_vertex_cover,
    "mst": _gen_mst,
    "max_flow": _gen_max_flow,
    "bipartite_matching": _gen_matching,
    "topological_sort": _gen_topo,
    "scc": _gen_scc,
    "bridges": _gen_bridges,
    "connectivity": _gen_connectivity,
    "cycle": _gen_cycle,
    "bipartite_check": _gen_bipartite_check,
    "triangle_max_sum": _gen_triangle,
    "common_neighbors": _gen_common_neighbors,
    "substructure": _gen_substructure,
    "gnn_sum": _gen_gnn,
}
assert set(_BUILDERS) == set(FAMILIES)


def generate_task(family: str, difficulty: str, seed: int) -> StructuredTask:
    interface_for(family)
    if difficulty not in TIERS:
        raise ValueError(f"unknown difficulty {difficulty!r}")
    rng = rng_for(family, difficulty, seed)
    g, q, c = _BUILDERS[family](rng, family, difficulty)
    return StructuredTask(family, difficulty, int(seed), g, q, c)


def generate(family: str, difficulty: str, seed: int) -> TaskInstance:
    from .text import verbalize

    task = generate_task(family, difficulty, seed)
    res = solve(task)
    if res.status != SOLVED:
        raise GeneratorError(f"{family}/{difficulty}/{seed}: oracle returned {res.status}")
    return TaskInstance(task, verbalize(task), res.answer)

