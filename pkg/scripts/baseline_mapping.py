"""Abstract parameter sets derived from the platform baselines."""

import json

from repeaterforge.engine import ProtocolConfig, build_link_physics
from repeaterforge.hardware import load_baseline, map_to_abstract, move_duration, swap_quality
from _paths import symmetric_chain


def main():
    for name in ("cc-baseline", "ti-baseline"):
        params = load_baseline(name)
        sq, duration = swap_quality(params)
        mapped = map_to_abstract(params)
        print(f"== {name}: swap quality {sq:.5f}, swap duration {duration * 1e6:.1f} us")
        print(json.dumps(mapped.to_dict()["values"], indent=2))
        physics = build_link_physics(symmetric_chain(), params, ProtocolConfig())
        for link, ph in physics.items():
            print(f"   link {link}: success {ph.outcome.success_prob:.3e} per attempt of {ph.attempt_duration * 1e6:.1f} us")
    print(f"color-center move to memory: {move_duration(load_baseline('cc-baseline')) * 1e3:.3f} ms")


if __name__ == "__main__":
    main()
