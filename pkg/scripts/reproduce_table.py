"""Run the mode x loss x strategy x ABR grid and print the summary table."""

import argparse
import sys
from pathlib import Path

from tarot.report import SweepSpec, emit, run_sweep
from tarot.scenarios import all_traces, make_manifest


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--spec", type=Path, help="sweep spec JSON (default: synthetic inputs in memory)")
    ap.add_argument("--out", type=Path, help="also write the table (.csv or .json)")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    if args.spec:
        spec = SweepSpec.from_json(args.spec)
    else:
        spec = SweepSpec(traces=all_traces(),
                         manifests={m: make_manifest(m) for m in ("vod", "lll")},
                         abrs=("throughput", "dynamic"))
    result = run_sweep(spec, workers=args.workers)
    for cell in result.errors:
        print(f"skipped {cell.key}: {cell.error}", file=sys.stderr)

    print(f"{'mode':4} {'loss':11} {'strategy':9} {'abr':10} {'quality':>8} "
          f"{'rebuf s':>8} {'rebuf %':>8} {'ovh %':>7} {'dec us':>7}")
    for r in result.rows:
        print(f"{r.mode:4} {r.loss:11} {r.strategy:9} {r.abr:10} {r.quality:8.2f} "
              f"{r.rebuffer_s:8.2f} {r.rebuffer_pct:8.2f} {r.overhead_pct:7.2f} {r.decision_us_mean:7.1f}")
    if args.out:
        emit(result, args.out)


if __name__ == "__main__":
    main()
