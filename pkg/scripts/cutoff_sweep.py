"""Rate and fidelity against the memory cut-off on a short abstract path."""

import argparse
import json

from _paths import symmetric_chain

from repeaterforge.engine import ProtocolConfig, compute_metrics, run_simulation
from repeaterforge.hardware import load_baseline


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cutoffs", type=float, nargs="+", default=[0.5, 0.2, 0.1, 0.05, 0.02])
    ap.add_argument("--pairs", type=int, default=200)
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--km", type=float, default=20.0)
    args = ap.parse_args()
    hw = load_baseline("abstract-cc").with_values(p_det=0.05, T2=0.05, swap_quality=0.99)
    for c in args.cutoffs:
        recs = run_simulation(symmetric_chain(args.km), hw, ProtocolConfig(n_pairs=args.pairs, seed=args.seed, cutoff_time=c))
        m = compute_metrics(recs)
        print(json.dumps({"cutoff": c, **m.to_json()}))


if __name__ == "__main__":
    main()
