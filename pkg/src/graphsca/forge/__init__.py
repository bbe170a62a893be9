from __future__ import annotations

from .curriculum import CurriculumState, first_seen_by_tier, initial_state, next_episode, record_result
from .generate import (
    DifficultyProfile,
    GeneratorError,
    TaskInstance,
    derive_seed,
    generate,
    generate_task,
    profile,
)
from .text import ParseError, reference_parse, verbalize

__all__ = [
    "CurriculumState",
    "DifficultyProfile",
    "GeneratorError",
    "ParseError",
    "TaskInstance",
    "derive_seed",
    "first_seen_by_tier",
    "generate",
    "generate_task",
    "initial_state",
    "next_episode",
    "profile",
    "record_result",
    "reference_parse",
    "verbalize",
]
