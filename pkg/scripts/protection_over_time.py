"""Per-segment protection chosen by the controller on one trace, as CSV on stdout."""

import argparse
import sys

from tarot.loss import LossProfile
from tarot.report import segments_csv
from tarot.scenarios import ARCHETYPES, make_manifest, make_trace
from tarot.simulator import SessionConfig, run_session


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trace", choices=sorted(ARCHETYPES), default="netflix5g")
    ap.add_argument("--mode", choices=("vod", "lll"), default="vod")
    ap.add_argument("--fec", default="rq-tarot")
    ap.add_argument("--loss", default="var:0:0.05")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cfg = SessionConfig(mode=args.mode, fec=args.fec, seed=args.seed,
                        loss=LossProfile.parse(args.loss, seed=args.seed))
    report = run_session(make_manifest(args.mode), make_trace(args.trace), cfg)
    sys.stdout.write(segments_csv(report))


if __name__ == "__main__":
    main()
