"""Shared topology helper for the scripts."""

from repeaterforge.engine import NetworkTopology, Node, Segment


def symmetric_chain(total_km: float = 20.0, attenuation: float = 0.2) -> NetworkTopology:
    names = ["A", "H1", "R", "H2", "B"]
    roles = ["end", "station", "repeater", "station", "end"]
    quarter = total_km / 4
    return NetworkTopology(
        tuple(Node(n, r) for n, r in zip(names, roles)),
        tuple(Segment(a, b, quarter, attenuation) for a, b in zip(names, names[1:])),
    )
