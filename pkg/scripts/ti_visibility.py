"""Trapped-ion visibility and coincidence probabilities against the window."""

import argparse

import numpy as np

from repeaterforge.hardware import load_baseline
from repeaterforge.timewindows import WindowConfig, coincidence_factors, shape_from_half_lives, visibility


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=12)
    args = ap.parse_args()
    ti = load_baseline("ti-baseline")
    shape = shape_from_half_lives(ti["hl_wavefunction"], ti["hl_emission"])
    T = ti["detection_window"]
    print(f"{'tau (us)':>9} {'V':>7} {'p_ph_ph':>8} {'p_ph_dc':>8} {'p_dc_dc':>8}")
    for tau in np.geomspace(0.05e-6, T, args.points):
        w = WindowConfig(T, tau)
        c = coincidence_factors(shape, w)
        print(f"{tau * 1e6:9.3f} {visibility(shape, w):7.4f} {c.p_ph_ph:8.4f} {c.p_ph_dc:8.4f} {c.p_dc_dc:8.4f}")


if __name__ == "__main__":
    main()
