"""Command line entry: ``run``, ``replay`` and ``srr``.

    python3 -m skillnet run --config cfg.json --seed 3 --out runs/s3
    python3 -m skillnet replay --log runs/s3/metrics.jsonl
    python3 -m skillnet srr --metrics runs/s3/metrics.jsonl
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .harness import ConfigError, ReplayDivergence, RunConfig, replay, run_curriculum, srr_from_log

# process exit codes
OK, USAGE, DIVERGED, FAILED = 0, 2, 3, 1


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="skillnet", description="continual skill-network runs")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run the curriculum")
    r.add_argument("--config", required=True, type=Path, help="JSON run configuration")
    r.add_argument("--seed", type=int)
    r.add_argument("--no-optimizer", action="store_true")
    r.add_argument("--no-gating", action="store_true")
    r.add_argument("--no-refactor", action="store_true")
    r.add_argument("--always-new-skill", action="store_true")
    r.add_argument("--operator", help="oracle or http:URL")
    r.add_argument("--curriculum", help="curriculum file (default: bundled)")
    r.add_argument("--recipes", help="recipe table (default: bundled)")
    r.add_argument("--out", type=Path, help="output directory (default runs/seed<N>)")

    p = sub.add_parser("replay", help="re-run a log and check it episode by episode")
    p.add_argument("--log", required=True, type=Path)

    s = sub.add_parser("srr", help="skill retention series from a metrics log")
    s.add_argument("--metrics", required=True, type=Path)
    return ap


def _config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config).to_dict()
    if args.seed is not None:
        cfg["seed"] = args.seed
    for flag in ("no_optimizer", "no_gating", "no_refactor", "always_new_skill"):
        if getattr(args, flag):
            cfg[flag] = True
    for key in ("operator", "curriculum", "recipes"):
        if getattr(args, key):
            cfg[key] = getattr(args, key)
    return RunConfig.from_dict(cfg)


def cmd_run(args) -> int:
    cfg = _config(args)
    out = args.out or Path("runs") / f"seed{cfg.seed}"
    m = run_curriculum(cfg, out)
    print(json.dumps({"out": str(out), "mastered": len(m.mastered), "of": len(m.iterations),
                      "srr": m.srr[-1] if m.srr else None,
                      "library_size": m.library_size[-1] if m.library_size else None}))
    return OK


def cmd_replay(args) -> int:
    try:
        m = replay(args.log)
    except ReplayDivergence as exc:
        print(f"diverged at {exc}", file=sys.stderr)
        return DIVERGED
    print(f"replay ok: {len(m.episodes)} episodes, digest {m.network_digest}")
    return OK


def cmd_srr(args) -> int:
    series = srr_from_log(args.metrics)
    for i, v in enumerate(series, 1):
        print(f"{i}\t{v:.4f}")
    if not series:
        print("no re-evaluations in log", file=sys.stderr)
    return OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": cmd_run, "replay": cmd_replay, "srr": cmd_srr}[args.cmd]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return USAGE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FAILED


if __name__ == "__main__":
    sys.exit(main())
