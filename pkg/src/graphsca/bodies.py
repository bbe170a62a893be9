"""Bank of executable tool bodies.

A body id names a procedure ``payload -> answer record``, where the payload
is a canonical ``task_input`` object. Ids have the form ``kind:family``
(``composite:fam1+fam2`` for cross-family tools):

    oracle   reference solver behind a required-slot check
    fixed    the repaired variant of a buggy/fragile body (same behaviour as oracle)
    buggy    deterministic corruption of the oracle output; always fails verification
    fragile  correct on graphs with at most ``FRAGILE_CUTOFF`` nodes, corrupted above
    const    a constant answer

Other prefixes can be routed to an external executor with
:func:`register_executor`; that is the hook for running generated code.
"""
from __future__ import annotations

import copy
from typing import Any, Callable, Mapping

from .core import (
    FAMILIES,
    GraphError,
    UnknownFamilyError,
    interface_for,
    task_from_payload,
    validate_structure,
)
from .solvers import solve

BODY_KINDS = ("oracle", "fixed", "buggy", "fragile", "const", "composite")
FRAGILE_CUTOFF = 10
Body = Callable[[Mapping], dict]

_EXECUTORS: dict[str, Callable[[str], Body]] = {}


class ToolInputError(ValueError):
    """The payload does not satisfy the tool's typed interface."""


class UnknownBodyError(KeyError):
    pass


def register_executor(prefix: str, factory: Callable[[str], Body]) -> None:
    """Route body ids ``prefix:...`` to ``factory(body_id)``."""
    if prefix in BODY_KINDS:
        raise ValueError(f"{prefix!r} is a built-in body kind")
    _EXECUTORS[prefix] = factory


def unregister_executor(prefix: str) -> None:
    _EXECUTORS.pop(prefix, None)


def split_body_id(body_id: str) -> tuple[str, tuple[str, ...]]:
    kind, sep, rest = body_id.partition(":")
    if not sep or not rest:
        raise UnknownBodyError(f"malformed body id {body_id!r}")
    fams = tuple(rest.split("+")) if kind == "composite" else (rest,)
    if kind in BODY_KINDS:
        for f in fams:
            if f not in FAMILIES:
                raise UnknownBodyError(f"unknown family in body id {body_id!r}")
    return kind, fams


def body_families(body_id: str) -> tuple[str, ...]:
    return split_body_id(body_id)[1]


def _checked_task(family: str, payload: Any):
    if not isinstance(payload, Mapping):
        raise ToolInputError("task_input payload must be an object")
    report = validate_structure(payload, interface_for(family))
    if report.missing_slots or report.mismatched_slots:
        parts = [f"missing {s}" for s in report.missing_slots] + [f"{s}: {m}" for s, m in report.mismatched_slots]
        raise ToolInputError("; ".join(parts))
    try:
        return task_from_payload(family, payload)
    except (GraphError, UnknownFamilyError) as exc:
        raise ToolInputError(str(exc)) from exc


def _oracle(family: str) -> Body:
    def body(payload: Mapping) -> dict:
        task = _checked_task(family, payload)
        return solve(task).answer.to_record()

    return body


def corrupt(answer: dict) -> dict:
    """Deterministic corruption that no verifier accepts."""
    out = copy.deepcopy(answer)
    fam = out.get("family")
    val = out.get("value")
    wit = out.get("witness")
    if isinstance(wit, Mapping) and wit.get("infeasible"):
        out["value"], out["witness"] = 0, None
    elif isinstance(val, bool):
        out["value"] = not val
    elif isinstance(val, int):
        out["value"] = val + 1
    elif fam == "topological_sort":
        out["witness"]["order"] = out["witness"]["order"][::-1]
    elif fam == "gnn_sum":
        states = out["witness"]["states"]
        first = sorted(states)[0] if states else None
        if first is not None and states[first]:
            states[first][0] += 1
        else:
            out["witness"] = None
    else:
        out["value"] = -1
    return out


def _buggy(family: str) -> Body:
    inner = _oracle(family)

    def body(payload: Mapping) -> dict:
        return corrupt(inner(payload))

    return body


def _fragile(family: str) -> Body:
    inner = _oracle(family)

    def body(payload: Mapping) -> dict:
        out = inner(payload)
        nodes = payload.get("graph", {}).get("nodes", [])
        return out if len(nodes) <= FRAGILE_CUTOFF else corrupt(out)

    return body


def _const(family: str) -> Body:
    def body(payload: Mapping) -> dict:
        value: Any = False if interface_for(family).exactness == "boolean_with_witness" else 0
        return {"family": family, "value": value, "witness": None}

    return body


def _composite(families: tuple[str, ...]) -> Body:
    members = {f: _oracle(f) for f in families}

    def body(payload: Mapping) -> dict:
        # dispatch to the first member whose interface the payload satisfies exactly
        for fam in families:
            if isinstance(payload, Mapping) and validate_structure(payload, interface_for(fam)).empty:
                return members[fam](payload)
        raise ToolInputError(f"payload matches none of {', '.join(families)}")

    return body


def make_body(body_id: str) -> Body:
    kind, fams = split_body_id(body_id)
    if kind in _EXECUTORS:
        return _EXECUTORS[kind](body_id)
    if kind in ("oracle", "fixed"):
        return _oracle(fams[0])
    if kind == "buggy":
        return _buggy(fams[0])
    if kind == "fragile":
        return _fragile(fams[0])
    if kind == "const":
        return _const(fams[0])
    if kind == "composite":
        return _composite(fams)
    raise UnknownBodyError(f"no executor for body kind {kind!r}")


def repair_target(body_id: str) -> str | None:
    """The corrected bank variant for a defective body, if the bank has one."""
    try:
        kind, fams = split_body_id(body_id)
    except UnknownBodyError:
        return None
    if kind in ("buggy", "fragile", "const"):
        return f"fixed:{fams[0]}"
    return None


def grow_target(family: str) -> str | None:
    """Oracle-derived body for an uncovered niche of ``family``."""
    return f"oracle:{family}" if family in FAMILIES else None
