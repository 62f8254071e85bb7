"""Heralded elementary-link models.

Both schemes return the total heralding probability together with the
normalized two-qubit state for each of the two heralding branches. Qubit
order is (node A, node B). For the double-click scheme the "plus" branch is
a click pair behind the same polarizing beam splitter, for the single-click
scheme it is a click in the first detector.

The closed forms are paired with brute-force oracles that build the photonic
Fock space explicitly, mix it on a beam splitter with partially
distinguishable photons and project on dark-count-modified POVM elements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Optional

import numpy as np

from .qstate import BellIndex, DensityMatrix, Dephasing, apply_channel
from .timewindows import CoincidenceFactors

PSI_PLUS_INDEX = BellIndex(1, 0)
PSI_MINUS_INDEX = BellIndex(1, 1)


class DetectorMode(str, Enum):
    NR = "NR"  # number resolving
    NNR = "NNR"  # non number resolving


def _unit(name, v, lo=0.0, hi=1.0):
    if not lo <= v <= hi or math.isnan(v):
        raise ValueError(f"{name}={v} outside [{lo}, {hi}]")


@dataclass(frozen=True)
class DoubleClickParams:
    p_A: float
    p_B: float
    V: float
    p_dc: float
    F_em_A: float = 1.0
    F_em_B: float = 1.0
    detector_mode: DetectorMode = DetectorMode.NR
    coincidence: Optional[CoincidenceFactors] = None

    def __post_init__(self):
        for name in ("p_A", "p_B", "V"):
            _unit(name, getattr(self, name))
        if not 0 <= self.p_dc < 1:
            raise ValueError("p_dc must lie in [0, 1)")
        _unit("F_em_A", self.F_em_A, 0.25)
        _unit("F_em_B", self.F_em_B, 0.25)
        object.__setattr__(self, "detector_mode", DetectorMode(self.detector_mode))

    @property
    def q_em(self) -> float:
        return (4 * self.F_em_A - 1) * (4 * self.F_em_B - 1) / 9


@dataclass(frozen=True)
class SingleClickParams:
    alpha_A: float
    alpha_B: float
    p_A: float
    p_B: float
    V: float
    p_dc: float
    p_dexc: float = 0.0
    sigma_phase: float = 0.0
    detector_mode: DetectorMode = DetectorMode.NR

    def __post_init__(self):
        for name in ("alpha_A", "alpha_B", "p_A", "p_B", "V", "p_dexc"):
            _unit(name, getattr(self, name))
        if not 0 <= self.p_dc < 1:
            raise ValueError("p_dc must lie in [0, 1)")
        if self.sigma_phase < 0:
            raise ValueError("sigma_phase must be nonnegative")
        object.__setattr__(self, "detector_mode", DetectorMode(self.detector_mode))

    @property
    def p_phase(self) -> float:
        return 0.5 * (1 - math.exp(-self.sigma_phase**2 / 2))


@dataclass(frozen=True)
class LinkOutcome:
    success_prob: float
    state_plus: DensityMatrix
    state_minus: DensityMatrix

    def __iter__(self):
        return iter((self.success_prob, self.state_plus, self.state_minus))


@dataclass(frozen=True)
class LinkSample:
    n_attempts: int
    delay: float
    state: DensityMatrix
    bell_index: BellIndex


# ---------------------------------------------------------------- double click


def double_click_cases(p: DoubleClickParams) -> dict[str, float]:
    """Probabilities of the five heralding cases, coincidence factors included."""
    pa, pb, v, d = p.p_A, p.p_B, p.V, p.p_dc
    both = 0.5 * pa * pb
    one = 2 * (pa * (1 - pb) + (1 - pa) * pb)
    none = 4 * (1 - pa) * (1 - pb)
    if p.detector_mode is DetectorMode.NR:
        quiet = (1 - d) ** 4
        cases = {
            "T": both * v * quiet,
            "F1": both * (1 - v) * quiet,
            "F2": 0.0,
            "F3": one * d * (1 - d) ** 3,
        }
    else:
        quiet = (1 - d) ** 2
        cases = {
            "T": both * v * quiet,
            "F1": both * (1 - v) * quiet,
            "F2": both * (1 + v) * d * quiet,
            "F3": one * d * quiet,
        }
    cases["F4"] = none * d**2 * (1 - d) ** 2
    c = p.coincidence
    if c is not None:
        cases["T"] *= c.p_ph_ph
        cases["F1"] *= c.p_ph_ph
        cases["F2"] *= c.p_ph_dc
        cases["F3"] *= c.p_ph_dc
        cases["F4"] *= c.p_dc_dc
    return cases


def _psi(sign: int) -> np.ndarray:
    v = np.array([0, 1, sign, 0], dtype=complex) / math.sqrt(2)
    return np.outer(v, v.conj())


def double_click_outcome(p: DoubleClickParams) -> LinkOutcome:
    cases = double_click_cases(p)
    q = p.q_em
    total = sum(cases.values())
    if total <= 0:
        raise ValueError("double-click heralding probability is zero")
    odd = np.diag([0, 1, 1, 0]).astype(complex) / 2
    even = np.diag([1, 0, 0, 1]).astype(complex) / 2
    noise = (1 - q) * (cases["T"] + cases["F1"] + cases["F2"]) + cases["F3"] + cases["F4"]
    states = []
    for sign in (1, -1):
        rho = q * (cases["T"] * _psi(sign) + cases["F1"] * odd + cases["F2"] * even)
        rho = rho + noise * np.eye(4) / 4
        states.append(DensityMatrix.from_unnormalized(rho))
    return LinkOutcome(total, states[0], states[1])


# ---------------------------------------------------------------- single click


def single_click_cases(p: SingleClickParams) -> dict[str, float]:
    aa, ab, pa, pb, d = p.alpha_A, p.alpha_B, p.p_A, p.p_B, p.p_dc
    nr = p.detector_mode is DetectorMode.NR
    quiet = (1 - d) ** 2 if nr else 1 - d
    p_same = 1 - (1 - p.V) / 2
    return {
        "1a": aa * ab * quiet * (pa * (1 - pb) + pb * (1 - pa)),
        "1b": 2 * aa * ab * (1 - pa) * (1 - pb) * (1 - d) * d,
        "1c": 0.0 if nr else aa * ab * pa * pb * p_same * (1 - d),
        "2a": aa * (1 - ab) * quiet * pa,
        "2b": 2 * aa * (1 - ab) * (1 - pa) * (1 - d) * d,
        "3a": ab * (1 - aa) * quiet * pb,
        "3b": 2 * ab * (1 - aa) * (1 - pb) * (1 - d) * d,
        "4": 2 * (1 - aa) * (1 - ab) * (1 - d) * d,
    }


def single_click_unnormalized(p: SingleClickParams, sign: int) -> np.ndarray:
    """Heralded state summed over both detectors, with the coherence sign of
    one of them. Basis |0> is the bright state."""
    c = single_click_cases(p)
    p1 = c["1a"] + c["1b"] + c["1c"]
    p2 = c["2a"] + c["2b"]
    p3 = c["3a"] + c["3b"]
    coh = sign * math.sqrt(p.V * p2 * p3)
    return np.array(
        [[p1, 0, 0, 0], [0, p2, coh, 0], [0, coh, p3, 0], [0, 0, 0, c["4"]]],
        dtype=complex,
    )


def single_click_outcome(p: SingleClickParams) -> LinkOutcome:
    states = []
    total = 0.0
    for sign in (1, -1):
        rho = single_click_unnormalized(p, sign)
        total = np.trace(rho).real
        if total <= 0:
            raise ValueError("single-click heralding probability is zero")
        s = DensityMatrix.from_unnormalized(rho)
        if p.p_dexc > 0:
            s = apply_channel(s, Dephasing(p.p_dexc / 2), [0, 1])
        if p.p_phase > 0:
            s = apply_channel(s, Dephasing(p.p_phase), [0])
        states.append(s)
    return LinkOutcome(float(total), states[0], states[1])


# ------------------------------------------------------------------ sampling


def sample_link(success_prob: float, attempt_duration: float, rng: np.random.Generator) -> int:
    """Number of attempts until the first heralded success."""
    if not 0 < success_prob <= 1:
        raise ValueError("success probability must lie in (0, 1]")
    if not attempt_duration > 0:
        raise ValueError("attempt duration must be positive")
    return int(rng.geometric(success_prob))


def draw_link(
    outcome: LinkOutcome,
    attempt_duration: float,
    rng: np.random.Generator,
) -> LinkSample:
    """Magic link generation: attempt count, delay and the heralded branch."""
    n = sample_link(outcome.success_prob, attempt_duration, rng)
    plus = rng.random() < 0.5
    return LinkSample(
        n_attempts=n,
        delay=n * attempt_duration,
        state=outcome.state_plus if plus else outcome.state_minus,
        bell_index=PSI_PLUS_INDEX if plus else PSI_MINUS_INDEX,
    )


# ------------------------------------------------------------------- oracles

FOCK = 3  # photon-number cutoff: 0, 1 or 2 photons per mode


@lru_cache(maxsize=64)
def beam_splitter_povm(visibility: float) -> dict[tuple[int, int], np.ndarray]:
    """Photon-number POVM behind a 50:50 beam splitter on two input modes.

    The photon from the second input has overlap sqrt(visibility) with the
    first in an internal (temporal) degree of freedom, so partially
    distinguishable photons only partially interfere. Keys are photon counts
    at the two output ports; operators act on the 9-dim two-mode input space.
    """
    mu = math.sqrt(visibility)
    nu = math.sqrt(max(0.0, 1 - visibility))
    s = 1 / math.sqrt(2)
    # output modes: (port c, internal 0), (c, 1), (port d, 0), (d, 1)
    a_dag = {(1, 0, 0, 0): s, (0, 0, 1, 0): s}
    b_dag = {(1, 0, 0, 0): s * mu, (0, 1, 0, 0): s * nu, (0, 0, 1, 0): -s * mu, (0, 0, 0, 1): -s * nu}

    def create(state, op):
        out: dict = {}
        for occ, amp in state.items():
            for mode_vec, c in op.items():
                m = mode_vec.index(1)
                new = list(occ)
                new[m] += 1
                new = tuple(new)
                out[new] = out.get(new, 0) + amp * c * math.sqrt(new[m])
        return out

    outputs = []
    for na in range(FOCK):
        for nb in range(FOCK):
            st = {(0, 0, 0, 0): 1.0}
            for _ in range(na):
                st = create(st, a_dag)
            for _ in range(nb):
                st = create(st, b_dag)
            norm = math.sqrt(math.factorial(na) * math.factorial(nb))
            outputs.append({k: v / norm for k, v in st.items()})
    basis = sorted({k for o in outputs for k in o})
    vecs = np.array([[o.get(k, 0.0) for k in basis] for o in outputs])
    povm = {}
    for i in range(2 * (FOCK - 1) + 1):
        for j in range(2 * (FOCK - 1) + 1 - i):
            mask = np.array([(k[0] + k[1] == i) and (k[2] + k[3] == j) for k in basis])
            v = vecs[:, mask]
            povm[(i, j)] = v @ v.conj().T
    return povm


def _dark_povm(visibility: float, p_dc: float) -> dict[tuple[int, int], list[tuple[str, np.ndarray]]]:
    """Click patterns with dark counts; each element lists (origin, operator)
    pieces where origin tells whether the clicking detector saw a photon."""
    m = beam_splitter_povm(visibility)
    d = p_dc
    return {
        (1, 0): [("ph", m[(1, 0)] * (1 - d) ** 2), ("dc", m[(0, 0)] * d * (1 - d))],
        (0, 1): [("ph", m[(0, 1)] * (1 - d) ** 2), ("dc", m[(0, 0)] * d * (1 - d))],
        (2, 0): [("ph", m[(2, 0)] * (1 - d)), ("ph", m[(1, 0)] * d * (1 - d))],
        (0, 2): [("ph", m[(0, 2)] * (1 - d)), ("ph", m[(0, 1)] * d * (1 - d))],
    }


def _loss_kraus(transmission: float) -> list[np.ndarray]:
    ops = []
    for k in range(FOCK):
        op = np.zeros((FOCK, FOCK))
        for n in range(k, FOCK):
            op[n - k, n] = math.sqrt(math.comb(n, k) * transmission ** (n - k) * (1 - transmission) ** k)
        ops.append(op)
    return ops


def _lossy(rho: np.ndarray, dims: list[int], modes: list[int], transmission: float) -> np.ndarray:
    for mode in modes:
        out = np.zeros_like(rho)
        for k in _loss_kraus(transmission):
            ops = [np.eye(dd) for dd in dims]
            ops[mode] = k
            big = ops[0]
            for o in ops[1:]:
                big = np.kron(big, o)
            out += big @ rho @ big.T
        rho = out
    return rho


def _fock(n: int) -> np.ndarray:
    v = np.zeros(FOCK)
    v[n] = 1
    return v


def _node_state(q: float, transmission: float) -> np.ndarray:
    """Emitter (x) H mode (x) V mode after emission noise and loss."""
    h = np.kron(_fock(1), _fock(0))
    v = np.kron(_fock(0), _fock(1))
    zero, one = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    ket = (np.kron(zero, h) + np.kron(one, v)) / math.sqrt(2)
    pure = np.outer(ket, ket)
    support = [np.kron(e, ph) for e in (zero, one) for ph in (h, v)]
    mixed = sum(np.outer(s, s) for s in support) / 4
    rho = q * pure + (1 - q) * mixed
    return _lossy(rho, [2, FOCK, FOCK], [1, 2], transmission)


def _double_click_elements(p: DoubleClickParams) -> tuple[np.ndarray, np.ndarray]:
    dark = _dark_povm(p.V, p.p_dc)
    counts = (1,) if p.detector_mode is DetectorMode.NR else (1, 2)
    c = p.coincidence
    weight = {
        ("ph", "ph"): c.p_ph_ph if c else 1.0,
        ("ph", "dc"): c.p_ph_dc if c else 1.0,
        ("dc", "ph"): c.p_ph_dc if c else 1.0,
        ("dc", "dc"): c.p_dc_dc if c else 1.0,
    }

    def pair(h_key, v_key):
        out = np.zeros((81, 81))
        for th, mh in dark[h_key]:
            for tv, mv in dark[v_key]:
                out += weight[(th, tv)] * np.kron(mh, mv)
        return out

    same = np.zeros((81, 81))
    different = np.zeros((81, 81))
    for n in counts:
        for m in counts:
            same += pair((n, 0), (m, 0)) + pair((0, n), (0, m))
            different += pair((n, 0), (0, m)) + pair((0, n), (m, 0))
    return same, different


def _double_click_branches(p: DoubleClickParams) -> list[np.ndarray]:
    qa = (4 * p.F_em_A - 1) / 3
    qb = (4 * p.F_em_B - 1) / 3
    rho = np.kron(_node_state(qa, p.p_A), _node_state(qb, p.p_B))
    # (eA, HA, VA, eB, HB, VB) -> (eA, eB, HA, HB, VA, VB)
    dims = [2, FOCK, FOCK, 2, FOCK, FOCK]
    perm = [0, 3, 1, 4, 2, 5]
    t = rho.reshape(dims + dims).transpose(perm + [6 + k for k in perm])
    t = t.reshape(4, 81, 4, 81)
    return [np.einsum("aibj,ji->ab", t, e) for e in _double_click_elements(p)]


def double_click_oracle(p: DoubleClickParams) -> LinkOutcome:
    branches = _double_click_branches(p)
    total = sum(np.trace(b).real for b in branches)
    if total <= 0:
        raise ValueError("double-click heralding probability is zero")
    states = [DensityMatrix.from_unnormalized(b) for b in branches]
    return LinkOutcome(float(total), states[0], states[1])


def double_click_branch_probabilities(p: DoubleClickParams) -> tuple[float, float]:
    """Oracle probabilities of the same-PBS and different-PBS branches."""
    same, different = _double_click_branches(p)
    return float(np.trace(same).real), float(np.trace(different).real)


def single_click_oracle_unnormalized(p: SingleClickParams) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalized heralded emitter states for a click in the first and in the
    second detector, before the double-excitation and phase-drift dephasing."""

    def node(alpha, transmission):
        ket = math.sqrt(alpha) * np.kron([1.0, 0.0], _fock(1)) + math.sqrt(1 - alpha) * np.kron([0.0, 1.0], _fock(0))
        return _lossy(np.outer(ket, ket), [2, FOCK], [1], transmission)

    rho = np.kron(node(p.alpha_A, p.p_A), node(p.alpha_B, p.p_B))
    dims = [2, FOCK, 2, FOCK]
    perm = [0, 2, 1, 3]
    t = rho.reshape(dims + dims).transpose(perm + [4 + k for k in perm]).reshape(4, 9, 4, 9)
    dark = _dark_povm(p.V, p.p_dc)
    keys = [[(1, 0)], [(0, 1)]]
    if p.detector_mode is DetectorMode.NNR:
        keys = [[(1, 0), (2, 0)], [(0, 1), (0, 2)]]
    out = []
    for branch in keys:
        e = sum(op for k in branch for _, op in dark[k])
        out.append(np.einsum("aibj,ji->ab", t, e))
    return out[0], out[1]
