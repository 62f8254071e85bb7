"""Rate and fidelity targets for verifiable delegated computing on a server.

A client prepares qubits on a remote server through teleportation over the
delivered entangled pairs. The server keeps qubits in a depolarizing memory
with coherence time ``T``. Two-qubit test rounds then stay below the
tolerable failure rate of 1/4 exactly when the teleportation fidelity exceeds
a bound that grows as the delivery rate drops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .qstate import DensityMatrix, teleportation_channel_apply

FIDELITY_FLOOR = 0.5 * (1 + 1 / math.sqrt(2))


@dataclass(frozen=True)
class PerformanceTarget:
    fidelity: float  # average teleportation fidelity
    rate: float  # Hz
    server_T: float = 100.0  # s

    def __post_init__(self):
        if not 0.5 < self.fidelity <= 1:
            raise ValueError("target fidelity must lie in (0.5, 1]")
        if not self.rate > 0:
            raise ValueError("target rate must be positive")
        if not self.server_T > 0:
            raise ValueError("server coherence time must be positive")


TARGET_LOW_RATE = PerformanceTarget(0.8717, 0.1)
TARGET_HIGH_RATE = PerformanceTarget(0.8571, 0.5)


def vbqc_min_fidelity(rate: float, T: float) -> float:
    """Smallest teleportation fidelity that supports two-qubit verification
    at delivery rate ``rate`` with server memory coherence time ``T``."""
    if not (rate > 0 and T > 0):
        raise ValueError("rate and T must be positive")
    x = 1 / (2 * rate * T)
    if x > 700:
        return math.inf
    return 0.5 * (1 + math.exp(x) / math.sqrt(2))


def test_round_failure_prob(f_dummy: float, f_trap: float) -> float:
    for name, v in (("f_dummy", f_dummy), ("f_trap", f_trap)):
        if not 0 <= v <= 1:
            raise ValueError(f"{name} must lie in [0, 1]")
    return f_dummy * (1 - f_trap) + f_trap * (1 - f_dummy)


def avg_failure_bound(f_dummy: float, f_trap: float, rate: float, T: float) -> float:
    """Upper bound on the mean test-round failure probability.

    Only valid while the single-round failure term is at most 1/2.
    """
    if not (rate > 0 and T > 0):
        raise ValueError("rate and T must be positive")
    p = test_round_failure_prob(f_dummy, f_trap)
    if p > 0.5:
        raise ValueError("bound inapplicable: single-round failure probability exceeds 1/2")
    decay = math.exp(-1 / (rate * T))
    return decay * p + 0.5 * (1 - decay)


def _plus_theta(theta: float) -> DensityMatrix:
    return DensityMatrix.from_ket(np.array([1, np.exp(1j * theta)]) / math.sqrt(2))


def dummy_and_trap_fidelities(sigma: DensityMatrix) -> tuple[float, float]:
    """Teleportation fidelity averaged over {|0>, |1>} and over the eight
    equatorial states |+_theta>, theta = k pi/4."""

    def f(psi: DensityMatrix) -> float:
        out = teleportation_channel_apply(sigma, psi)
        return float(np.real(np.trace(out.matrix @ psi.matrix)))

    zero = DensityMatrix.from_ket([1, 0])
    one = DensityMatrix.from_ket([0, 1])
    dummy = 0.5 * (f(zero) + f(one))
    trap = float(np.mean([f(_plus_theta(k * math.pi / 4)) for k in range(8)]))
    return dummy, trap


@dataclass(frozen=True)
class TargetCheck:
    met: bool
    fidelity_margin: float  # achieved minus target
    rate_margin: float


def targets_met(rate: float, fidelity: float, target: PerformanceTarget) -> TargetCheck:
    fm = fidelity - target.fidelity
    rm = rate - target.rate
    return TargetCheck(fm >= 0 and rm >= 0, fm, rm)
