"""Command-line entry point: ``graphsca {train,evaluate,rollup,inspect-toolbox,diff-genome,make-benchmark}``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .core import FAMILIES, TIERS
from .evolve import Genome, diff_genomes
from .harness import (
    DEFAULT_SEED,
    BenchmarkError,
    LogError,
    RunConfig,
    evaluate,
    load_pair,
    make_benchmark,
    read_benchmark,
    read_log,
    rollup,
    train,
    write_artifacts,
    write_benchmark,
)
from .toolbox import Toolbox


def _dump(obj) -> None:
    json.dump(obj, sys.stdout, indent=1, sort_keys=True)
    sys.stdout.write("\n")


def cmd_train(args) -> int:
    cfg = RunConfig(
        episodes=args.episodes,
        seed=args.seed,
        curriculum=args.curriculum,
        agent=args.agent,
        attempts=args.attempts,
        propose_tool=not args.no_propose_tool,
        workers=args.workers,
        routing=args.routing,
        updates=not args.no_updates,
        instruction_updates=not args.no_instruction_updates,
    )
    box = None
    if args.toolbox:
        box = Toolbox.load(Path(args.toolbox).read_text(), run_seed=cfg.seed)
    result = train(cfg, toolbox=box)
    paths = write_artifacts(result, args.out)
    _dump({"summary": result.summary, "artifacts": {k: str(v) for k, v in paths.items()}})
    return 0


def cmd_evaluate(args) -> int:
    try:
        pair = load_pair(args.pair)
        box = Toolbox.load(Path(args.toolbox).read_text(), run_seed=args.seed)
        cases = read_benchmark(args.benchmark)
    except (BenchmarkError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    report = evaluate(pair, box, cases, args.agent, args.workers, args.seed)
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    _dump(report)
    return 0


def cmd_rollup(args) -> int:
    try:
        records = read_log(args.log)
    except (LogError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _dump(rollup(records, args.window))
    return 0


def cmd_inspect(args) -> int:
    data = json.loads(Path(args.manifest).read_text())
    tools = data.get("tools", [])
    if args.json:
        _dump(tools)
        return 0
    width = max([len(t["id"]) for t in tools] + [4])
    print(f"{'tool':<{width}}  reuse  niche")
    for t in tools:
        print(f"{t['id']:<{width}}  {t.get('reuse_count', 0):>5}  {t['niche']}")
    used = sum(1 for t in tools if t.get("reuse_count", 0) > 0)
    print(f"packaged {len(tools)}, used {used}")
    return 0


def _genome(ref: str, manifest: str | None) -> Genome:
    p = Path(ref)
    if p.exists():
        rec = json.loads(p.read_text())
        return Genome.from_record(rec.get("genome", rec))
    if manifest is None:
        raise SystemExit(f"error: {ref!r} is not a file and no --manifest was given")
    for rec in json.loads(Path(manifest).read_text()).get("genomes", []):
        if rec["id"] == ref:
            return Genome.from_record(rec)
    raise SystemExit(f"error: genome {ref!r} not in {manifest}")


def cmd_diff(args) -> int:
    a, b = _genome(args.a, args.manifest), _genome(args.b, args.manifest)
    _dump({"from": a.id, "to": b.id, "sections": diff_genomes(a, b)})
    return 0


def cmd_make_benchmark(args) -> int:
    families = args.families.split(",") if args.families else list(FAMILIES)
    tiers = args.tiers.split(",")
    for t in tiers:
        if t not in TIERS:
            raise SystemExit(f"error: unknown tier {t!r}")
    tasks = make_benchmark(families, tiers, args.per_family, args.seed)
    write_benchmark(tasks, args.out)
    print(f"wrote {len(tasks)} cases to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="graphsca", description="Verifier-centric graph-reasoning harness")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run the self-improvement loop")
    t.add_argument("--episodes", type=int, default=300)
    t.add_argument("--seed", type=int, default=DEFAULT_SEED)
    t.add_argument("--curriculum", default="progressive", help="progressive or fixed:D1..D4")
    t.add_argument("--agent", default="oracle", help="oracle, fault:MODE:RATE or external:ENDPOINT")
    t.add_argument("--attempts", type=int, default=2)
    t.add_argument("--no-propose-tool", action="store_true")
    t.add_argument("--no-updates", action="store_true", help="diagnose and route but never mutate")
    t.add_argument("--no-instruction-updates", action="store_true")
    t.add_argument("--routing", choices=("sca", "blind"), default="sca")
    t.add_argument("--toolbox", help="start from this toolbox manifest")
    t.add_argument("--workers", type=int, default=1)
    t.add_argument("--out", default="runs/latest")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score a frozen pair on a benchmark file")
    e.add_argument("--pair", required=True)
    e.add_argument("--toolbox", required=True)
    e.add_argument("--benchmark", required=True)
    e.add_argument("--agent", default="oracle")
    e.add_argument("--seed", type=int, default=DEFAULT_SEED)
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("rollup", help="recompute the run summary from an episode log")
    r.add_argument("log")
    r.add_argument("--window", type=int, default=50)
    r.set_defaults(func=cmd_rollup)

    i = sub.add_parser("inspect-toolbox", help="list tools in a manifest")
    i.add_argument("manifest")
    i.add_argument("--json", action="store_true")
    i.set_defaults(func=cmd_inspect)

    d = sub.add_parser("diff-genome", help="per-section rule diff between two genomes")
    d.add_argument("a")
    d.add_argument("b")
    d.add_argument("--manifest", help="genomes.json to resolve ids against")
    d.set_defaults(func=cmd_diff)

    b = sub.add_parser("make-benchmark", help="write a benchmark file of generated cases")
    b.add_argument("--out", required=True)
    b.add_argument("--families")
    b.add_argument("--tiers", default="D1")
    b.add_argument("--per-family", type=int, default=1)
    b.add_argument("--seed", type=int, default=DEFAULT_SEED)
    b.set_defaults(func=cmd_make_benchmark)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
