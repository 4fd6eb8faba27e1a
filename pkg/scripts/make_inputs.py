"""Write the synthetic manifests, traces and a default sweep spec under data/."""

import argparse
import json
from pathlib import Path

from tarot.scenarios import ARCHETYPES, make_manifest, make_trace


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default=Path(__file__).resolve().parent.parent / "data", type=Path)
    ap.add_argument("--seconds", type=float, default=600.0, help="trace length before looping")
    args = ap.parse_args()
    out = args.out_dir
    (out / "traces").mkdir(parents=True, exist_ok=True)
    for mode in ("vod", "lll"):
        (out / f"manifest_{mode}.json").write_text(json.dumps(make_manifest(mode).to_json()))
    for name in ARCHETYPES:
        trace = make_trace(name, args.seconds)
        (out / "traces" / f"{name}.json").write_text(json.dumps(trace.to_json()))
    spec = {
        "manifests": {"vod": "manifest_vod.json", "lll": "manifest_lll.json"},
        "traces": {name: f"traces/{name}.json" for name in ARCHETYPES},
        "modes": ["lll", "vod"],
        "losses": ["none", "const:0.01", "const:0.05", "var:0:0.05"],
        "strategies": ["none", "rq", "rs", "rq-tarot", "rs-tarot"],
        "abrs": ["throughput", "dynamic"],
        "seeds": [0],
        "lll_throughput_only": True,
    }
    (out / "sweep.json").write_text(json.dumps(spec, indent=1))
    print(f"wrote inputs to {out}")


if __name__ == "__main__":
    main()
