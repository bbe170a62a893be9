"""Niche keys: the four-part applicability tag attached to every tool.

A key renders as ``regime / constraints / exactness / tier``. Regimes come
from a closed vocabulary (see ``REGIMES``); a few names double as exactness
tags in the tool inventory this mirrors (``exact_small``, ``feasible_large``)
and are kept verbatim so manifests read the same way.
"""
from __future__ import annotations

from dataclasses import dataclass

from .core import EXACTNESS_TAGS, TIERS, StructuredTask, task_exactness
from .solvers import find_cycle, two_coloring

DENSE_THRESHOLD = 0.3
SMALL_HOST = 14

REGIMES = (
    "sparse_directed",
    "dense_directed",
    "sparse_undirected",
    "dense_undirected",
    "tree_like",
    "balanced_bipartite",
    "bipartite_easy",
    "weighted_base",
    "directed_blocked",
    "undirected_blocked",
    "chain_planted",
    "constraint_tight",
    "exact_small",
    "feasible_large",
    "small_dag_pattern",
    "planted_pattern_sparse_host",
    "planted_pattern_dense_host",
    "1_layer_sparse",
    "1_layer_dense",
    "2_layer_sparse",
    "2_layer_dense",
    "3_layer_sparse",
    "3_layer_dense",
)
CONSTRAINT_NAMES = ("blocked_edges", "max_cost", "max_colors", "max_size")


@dataclass(frozen=True)
class NicheKey:
    regime: str
    constraints: str
    exactness: str
    tier: str

    def __post_init__(self) -> None:
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.exactness not in EXACTNESS_TAGS:
            raise ValueError(f"unknown exactness {self.exactness!r}")
        if self.tier not in TIERS:
            raise ValueError(f"unknown tier {self.tier!r}")
        if self.constraints not in ("none", "pattern_graph"):
            parts = self.constraints.split("+")
            if any(p not in CONSTRAINT_NAMES for p in parts):
                raise ValueError(f"unknown constraint tag {self.constraints!r}")

    def render(self) -> str:
        return f"{self.regime} / {self.constraints} / {self.exactness} / {self.tier}"

    def __str__(self) -> str:
        return self.render()

    @classmethod
    def parse(cls, text: str) -> "NicheKey":
        parts = [p.strip() for p in text.split("/")]
        if len(parts) != 4:
            raise ValueError(f"niche must have four components: {text!r}")
        return cls(*parts)


def _sparse_or_dense(task: StructuredTask) -> str:
    return "dense" if task.graph.density() > DENSE_THRESHOLD else "sparse"


def constraint_tag(task: StructuredTask) -> str:
    if task.family == "substructure":
        return "pattern_graph"
    active = [
        name for name in CONSTRAINT_NAMES
        if getattr(task.constraints, name) not in (None, ())
    ]
    return "+".join(active) if active else "none"


def structural_regime(task: StructuredTask) -> str:
    g, fam = task.graph, task.family
    exactness = task_exactness(task)
    if fam == "hamilton":
        return "chain_planted"
    if fam == "substructure":
        if len(g.nodes) <= SMALL_HOST:
            return "small_dag_pattern"
        return f"planted_pattern_{_sparse_or_dense(task)}_host"
    if fam == "gnn_sum":
        rounds = max(1, min(3, task.query.rounds or 1))
        return f"{rounds}_layer_{_sparse_or_dense(task)}"
    if fam == "tsp":
        if exactness == "feasible_large":
            return "feasible_large"
        if task.constraints.blocked_edges and task.constraints.max_cost is not None:
            return "constraint_tight"
        return "exact_small"
    if fam == "vertex_cover":
        return "constraint_tight" if exactness == "feasible_large" else "exact_small"
    if task.constraints.blocked_edges:
        return "directed_blocked" if g.directed else "undirected_blocked"
    if fam == "bipartite_matching":
        return "balanced_bipartite"
    if fam == "coloring" and two_coloring(g) is not None:
        return "bipartite_easy"
    if fam in ("shortest_path", "shortest_path_cost") and g.weighted:
        return "weighted_base"
    if not g.directed and len(g.edges) <= len(g.nodes) - 1 and find_cycle(g) is None:
        return "tree_like"
    return f"{_sparse_or_dense(task)}_{'directed' if g.directed else 'undirected'}"


def niche_key(task: StructuredTask) -> NicheKey:
    return NicheKey(structural_regime(task), constraint_tag(task), task_exactness(task), task.difficulty)


@dataclass(frozen=True)
class ToolMeta:
    families: tuple[str, ...]
    niche: NicheKey


def compat(meta: ToolMeta, task: StructuredTask) -> float:
    """Fraction of matching niche components; zero across families."""
    if task.family not in meta.families:
        return 0.0
    key = niche_key(task)
    hits = [
        meta.niche.regime == key.regime,
        meta.niche.constraints == key.constraints,
        meta.niche.exactness == key.exactness,
        TIERS.index(meta.niche.tier) <= TIERS.index(key.tier),
    ]
    return sum(hits) / 4

