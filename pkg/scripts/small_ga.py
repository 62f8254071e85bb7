"""Reduced genetic search on the 20 km abstract path."""

import argparse
import json

from _paths import symmetric_chain

from repeaterforge.engine import ProtocolConfig
from repeaterforge.hardware import load_baseline
from repeaterforge.optimizer import GAConfig, SimulationScenario, genetic_optimize
from repeaterforge.targetmetric import TARGET_HIGH_RATE, TARGET_LOW_RATE


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--population", type=int, default=20)
    ap.add_argument("--generations", type=int, default=30)
    ap.add_argument("--runs", type=int, default=100)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--target", choices=("low", "high"), default="low")
    ap.add_argument("--var", type=float, default=None, help="VAR tolerance, e.g. 0.01")
    ap.add_argument("--history", default=None)
    args = ap.parse_args()
    target = TARGET_LOW_RATE if args.target == "low" else TARGET_HIGH_RATE
    sc = SimulationScenario(symmetric_chain(), load_baseline("abstract-cc"), ProtocolConfig(), target_rate=target.rate)
    cfg = GAConfig(args.population, args.generations, n_runs=args.runs, seed=args.seed, var_tolerance=args.var)
    res = genetic_optimize(sc, target, cfg, history_path=args.history)
    for row in res.history:
        print(row["generation"], f"{row['best_cost']:.4g}")
    print(json.dumps({"generations": res.generations, "stopped_by_var": res.stopped_by_var, "best": res.best.to_json()}, indent=2))


if __name__ == "__main__":
    main()
