"""Tool registry: niche metadata, retrieval, verifier-gated acceptance, reuse stats.

The only way into the registry is :meth:`Toolbox.accept_candidate`, which
runs hidden probes and registers the tool only if every probe passes.
Loading a manifest goes through the same gate.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .bodies import ToolInputError, body_families, make_body, split_body_id
from .core import StructuredTask
from .niche import NicheKey, ToolMeta, compat
from .verifier import DEFAULT_PROBES, PROBE_TIMEOUT_S, HiddenTestReport, probe_candidate, run_with_timeout

REUSE_WINDOW = 50


@dataclass
class Tool:
    id: str
    body_id: str
    families: tuple[str, ...]
    niche: NicheKey
    provenance: dict = field(default_factory=dict)
    reuse_count: int = 0
    passes: int = 0

    @property
    def activated(self) -> bool:
        return self.reuse_count > 0

    @property
    def meta(self) -> ToolMeta:
        return ToolMeta(self.families, self.niche)

    def manifest_entry(self) -> dict:
        return {
            "id": self.id,
            "body": self.body_id,
            "families": list(self.families),
            "niche": self.niche.render(),
            "provenance": dict(self.provenance),
            "reuse_count": self.reuse_count,
        }

    def describe(self) -> dict:
        """What an agent is allowed to see about a tool."""
        return {"id": self.id, "families": list(self.families), "niche": self.niche.render()}


@dataclass(frozen=True)
class Rejection:
    reason: str
    report: HiddenTestReport | None = None

    def to_record(self) -> dict:
        return {"reason": self.reason, "report": self.report.to_record() if self.report else None}


@dataclass(frozen=True)
class RetrievalResult:
    ranked: tuple[tuple[str, float], ...] = ()

    @property
    def top(self) -> tuple[str, float] | None:
        return self.ranked[0] if self.ranked else None

    def to_record(self) -> list:
        return [[tid, score] for tid, score in self.ranked]


class Toolbox:
    def __init__(
        self,
        run_seed: int = 0,
        n_probes: int = DEFAULT_PROBES,
        probe_timeout: float = PROBE_TIMEOUT_S,
        reuse_window: int = REUSE_WINDOW,
    ):
        self.run_seed = run_seed
        self.n_probes = n_probes
        self.probe_timeout = probe_timeout
        self._tools: dict[str, Tool] = {}
        self._window: deque[bool] = deque(maxlen=reuse_window)
        self.rejections: list[dict] = []

    # read side ---------------------------------------------------------------
    def __contains__(self, tool_id: str) -> bool:
        return tool_id in self._tools

    def __len__(self) -> int:
        return len(self._tools)

    def get(self, tool_id: str) -> Tool:
        try:
            return self._tools[tool_id]
        except KeyError:
            raise KeyError(f"unknown tool id {tool_id!r}") from None

    def tools(self) -> list[Tool]:
        return [self._tools[k] for k in sorted(self._tools)]

    def ids(self) -> list[str]:
        return sorted(self._tools)

    def manifest(self, view: Iterable[str] | None = None) -> list[dict]:
        ids = sorted(view) if view is not None else self.ids()
        return [self._tools[i].describe() for i in ids if i in self._tools]

    def retrieve(self, recovered: StructuredTask, view: Iterable[str]) -> RetrievalResult:
        scored = []
        for tid in set(view):
            tool = self._tools.get(tid)
            if tool is None:
                continue
            s = compat(tool.meta, recovered)
            if s > 0:
                scored.append((tid, s, tool.reuse_count))
        scored.sort(key=lambda t: (-t[1], -t[2], t[0]))
        return RetrievalResult(tuple((tid, s) for tid, s, _ in scored))

    # execution -------------------------------------------------------------
    def execute(self, tool_id: str, payload: Mapping | None) -> tuple[Any, str | None]:
        """Run a registered tool. Refuses payload-less calls before running anything."""
        if payload is None:
            return None, "execution refused: missing task_input payload"
        tool = self._tools.get(tool_id)
        if tool is None:
            return None, f"unknown tool id {tool_id!r}"
        return execute_body(tool.body_id, payload, self.probe_timeout)

    # write side ------------------------------------------------------------
    def _fresh_id(self, base: str) -> str:
        if base not in self._tools:
            return base
        k = 2
        while f"{base}_{k}" in self._tools:
            k += 1
        return f"{base}_{k}"

    def accept_candidate(
        self,
        body_id: str,
        niche: NicheKey,
        families: Iterable[str] | None = None,
        episode: int | None = None,
        parent: str | None = None,
        tool_id: str | None = None,
    ) -> Tool | Rejection:
        try:
            kind, fams = split_body_id(body_id)
        except KeyError as exc:
            return self._reject(Rejection(f"unknown body: {exc}"))
        fams = tuple(families) if families is not None else fams
        for t in self._tools.values():
            if t.body_id == body_id and t.niche == niche and t.families == fams:
                return self._reject(Rejection(f"redundant: identical body and niche already registered as {t.id}"))
        if tool_id is None:
            base = f"{parent}_mut" if parent else "_x_".join(f"{f}_solver" for f in fams)
            tool_id = self._fresh_id(base)
        elif tool_id in self._tools:
            return self._reject(Rejection(f"duplicate tool id {tool_id}"))
        try:
            body = make_body(body_id)
        except KeyError as exc:
            return self._reject(Rejection(f"unknown body: {exc}"))
        reports = [
            probe_candidate(body, fam, niche, self.n_probes, self.run_seed, tool_id, self.probe_timeout)
            for fam in fams
        ]
        report = HiddenTestReport(
            sum(r.probes_run for r in reports),
            sum(r.probes_passed for r in reports),
            tuple(m for r in reports for m in r.messages),
            tuple(s for r in reports for s in r.seeds),
        )
        if not report.all_passed:
            return self._reject(Rejection("hidden probes failed", report))
        prov = {"episode": episode, "parent": parent, "probes": report.to_record()}
        tool = Tool(tool_id, body_id, fams, niche, prov)
        self._tools[tool_id] = tool
        return tool

    def _reject(self, rej: Rejection) -> Rejection:
        self.rejections.append(rej.to_record())
        return rej

    def record_use(self, tool_id: str, passed: bool) -> Tool:
        tool = self.get(tool_id)
        tool.reuse_count += 1
        if passed:
            tool.passes += 1
        return tool

    def note_episode(self, reused: bool) -> None:
        self._window.append(bool(reused))

    def rolling_reuse_rate(self) -> float:
        return sum(self._window) / len(self._window) if self._window else 0.0

    def activation_rate(self) -> float:
        tools = list(self._tools.values())
        return sum(t.activated for t in tools) / len(tools) if tools else 0.0

    # persistence -----------------------------------------------------------
    def dump(self) -> str:
        return json.dumps({"tools": [t.manifest_entry() for t in self.tools()]}, sort_keys=True, indent=1)

    @classmethod
    def load(cls, text: str | Mapping, run_seed: int = 0, **kw) -> "Toolbox":
        """Rebuild a registry from a manifest; every tool is re-probed."""
        data = json.loads(text) if isinstance(text, str) else text
        box = cls(run_seed=run_seed, **kw)
        for entry in data.get("tools", []):
            niche = NicheKey.parse(entry["niche"])
            prov = entry.get("provenance") or {}
            got = box.accept_candidate(
                entry["body"], niche, entry.get("families"), prov.get("episode"), prov.get("parent"), entry["id"]
            )
            if isinstance(got, Rejection):
                raise ValueError(f"manifest tool {entry['id']} rejected: {got.reason}")
            got.provenance = prov
            got.reuse_count = int(entry.get("reuse_count", 0))
        return box


def execute_body(body_id: str, payload: Mapping | None, timeout: float = PROBE_TIMEOUT_S) -> tuple[Any, str | None]:
    if payload is None:
        return None, "execution refused: missing task_input payload"
    try:
        body = make_body(body_id)
    except KeyError as exc:
        return None, f"unknown body: {exc}"
    out, err = run_with_timeout(body, payload, timeout)
    if err and err.startswith(ToolInputError.__name__):
        err = "tool input error: " + err.split(": ", 1)[1]
    return out, err


__all__ = [
    "REUSE_WINDOW",
    "Rejection",
    "RetrievalResult",
    "Tool",
    "Toolbox",
    "body_families",
    "execute_body",
]
