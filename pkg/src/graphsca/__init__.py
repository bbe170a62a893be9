"""Verifier-centric graph-reasoning environment with a dual-space
(instruction genome + toolbox) self-improvement loop."""
from __future__ import annotations

__version__ = "0.1.0"
