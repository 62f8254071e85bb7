"""Wall-clock time of the simulator against the number of delivered pairs."""

import argparse
import time

import numpy as np
from _paths import symmetric_chain

from repeaterforge.engine import ProtocolConfig, run_simulation
from repeaterforge.hardware import load_baseline


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pairs", type=int, nargs="+", default=[100, 200, 400, 800, 1600])
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    hw = load_baseline("abstract-cc")
    topo = symmetric_chain()
    sizes, times = np.array(args.pairs), []
    for n in sizes:
        best = min(_timed(topo, hw, int(n), s) for s in range(args.repeats))
        times.append(best)
        print(f"{n:6d} pairs  {best:8.3f} s")
    times = np.array(times)
    slope, icpt = np.polyfit(sizes, times, 1)
    resid = times - (slope * sizes + icpt)
    r2 = 1 - resid @ resid / np.sum((times - times.mean()) ** 2)
    print(f"{slope * 1e3:.3f} ms per pair, offset {icpt:.3f} s, R^2 {r2:.4f}")


def _timed(topo, hw, n, seed):
    t0 = time.perf_counter()
    run_simulation(topo, hw, ProtocolConfig(n_pairs=n, seed=seed))
    return time.perf_counter() - t0


if __name__ == "__main__":
    main()
