"""tarot-sim: single sessions and experiment sweeps from the command line."""

from __future__ import annotations

import argparse
import sys

from .controller import Hyperparameters
from .loss import LossProfile
from .report import SweepSpec, emit, run_sweep
from .simulator import STRATEGIES, SessionConfig, load_manifest, load_trace, run_session


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tarot-sim", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one session")
    run.add_argument("--manifest", required=True)
    run.add_argument("--trace", required=True)
    run.add_argument("--mode", choices=("vod", "lll"), default="vod")
    run.add_argument("--abr", choices=("throughput", "dynamic"), default="throughput")
    run.add_argument("--fec", choices=STRATEGIES, default="none")
    run.add_argument("--loss", default="none", help="none | const:L | var:lo:hi")
    run.add_argument("--gamma", type=float, default=0.5)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", required=True, help="output path (.json or .csv)")
    run.add_argument("--format", choices=("json", "csv"))
    run.add_argument("--per-segment", action="store_true")
    run.add_argument("--hp", help="JSON file overriding controller hyperparameters")

    sw = sub.add_parser("sweep", help="run an experiment grid")
    sw.add_argument("--spec", required=True)
    sw.add_argument("--out", required=True)
    sw.add_argument("--format", choices=("json", "csv"))
    sw.add_argument("--workers", type=int, default=1)
    sw.add_argument("--hp", help="JSON file overriding controller hyperparameters")
    return p


def _cmd_run(args) -> int:
    hp = Hyperparameters.from_json(args.hp) if args.hp else Hyperparameters()
    cfg = SessionConfig(mode=args.mode, abr=args.abr, fec=args.fec,
                        loss=LossProfile.parse(args.loss, seed=args.seed),
                        gamma=args.gamma, seed=args.seed, hp=hp)
    report = run_session(load_manifest(args.manifest), load_trace(args.trace), cfg)
    emit(report, args.out, args.format, per_segment=args.per_segment)
    return 0


def _cmd_sweep(args) -> int:
    spec = SweepSpec.from_json(args.spec)
    if args.hp:
        from dataclasses import replace
        spec = replace(spec, hp=Hyperparameters.from_json(args.hp))
    result = run_sweep(spec, workers=args.workers)
    for cell in result.errors:
        print(f"cell {'/'.join(map(str, cell.key))}: {cell.error}", file=sys.stderr)
    emit(result, args.out, args.format)
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _cmd_run(args) if args.command == "run" else _cmd_sweep(args)
    except (ValueError, OSError) as e:
        print(f"tarot-sim: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
