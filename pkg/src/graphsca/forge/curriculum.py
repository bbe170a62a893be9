"""Round-robin family sampling with pass-based tier promotion.

State is an immutable value; ``next_episode`` and ``record_result`` return
new states. Promotion counts cumulative passes at the current tier (two
passes promote, failures leave the counter alone).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

from ..core import FAMILIES, TIERS, interface_for

PROMOTE_AFTER = 2


@dataclass(frozen=True)
class CurriculumState:
    tiers: tuple[str, ...] = ("D1",) * len(FAMILIES)
    passes: tuple[int, ...] = (0,) * len(FAMILIES)
    first_seen: Mapping[str, Mapping[str, int]] = field(default_factory=dict)
    episode: int = 0
    cursor: int = 0
    fixed_tier: str | None = None

    def tier_of(self, family: str) -> str:
        if self.fixed_tier is not None:
            return self.fixed_tier
        return self.tiers[FAMILIES.index(family)]

    def to_record(self) -> dict:
        return {
            "tiers": dict(zip(FAMILIES, self.tiers)),
            "passes": dict(zip(FAMILIES, self.passes)),
            "first_seen": {f: dict(t) for f, t in self.first_seen.items()},
            "episode": self.episode,
            "cursor": self.cursor,
            "fixed_tier": self.fixed_tier,
        }


def initial_state(mode: str = "progressive") -> CurriculumState:
    """``progressive`` or ``fixed:D4`` (any tier accepted after the colon)."""
    if mode == "progressive":
        return CurriculumState()
    if mode.startswith("fixed:"):
        tier = mode.split(":", 1)[1]
        if tier not in TIERS:
            raise ValueError(f"unknown fixed tier {tier!r}")
        return CurriculumState(tiers=(tier,) * len(FAMILIES), fixed_tier=tier)
    raise ValueError(f"unknown curriculum mode {mode!r}")


def next_episode(state: CurriculumState) -> tuple[str, str, CurriculumState]:
    family = FAMILIES[state.cursor]
    tier = state.tier_of(family)
    episode = state.episode + 1
    seen = {f: dict(t) for f, t in state.first_seen.items()}
    seen.setdefault(family, {}).setdefault(tier, episode)
    new = replace(state, first_seen=seen, episode=episode, cursor=(state.cursor + 1) % len(FAMILIES))
    return family, tier, new


def record_result(state: CurriculumState, family: str, passed: bool) -> CurriculumState:
    interface_for(family)
    if not passed or state.fixed_tier is not None:
        return state
    i = FAMILIES.index(family)
    tiers, passes = list(state.tiers), list(state.passes)
    passes[i] += 1
    if passes[i] >= PROMOTE_AFTER:
        passes[i] = 0
        level = TIERS.index(tiers[i])
        tiers[i] = TIERS[min(level + 1, len(TIERS) - 1)]
    return replace(state, tiers=tuple(tiers), passes=tuple(passes))


def first_seen_by_tier(state: CurriculumState) -> dict[str, int | None]:
    """Earliest episode at which any family was emitted at each tier."""
    out: dict[str, int | None] = {}
    for tier in TIERS:
        eps = [t[tier] for t in state.first_seen.values() if tier in t]
        out[tier] = min(eps) if eps else None
    return out
