"""Processing-node models: parameter sets, gate circuits and memory noise.

Three platforms are supported. Color-center nodes hold an electron spin
(communication qubit) and a carbon spin (memory qubit); the only two-qubit
gate is the electron-controlled carbon X rotation. Trapped-ion nodes hold two
ions in one trap that share a collective dephasing environment. Abstract
nodes replace all local operations by a perfect Bell-state measurement
followed by depolarizing noise set by the swap quality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Mapping, Optional

import numpy as np
import yaml
from scipy.linalg import expm

from .qstate import (
    BELL_INDICES,
    CNOT,
    H,
    I2,
    X,
    Y,
    Z,
    AmplitudeDamping,
    BellIndex,
    CollectiveGaussian,
    DensityMatrix,
    Dephasing,
    Depolarizing,
    PhaseDamping,
    apply_channel,
    apply_kraus,
    bell_state,
    embed_operator,
    fidelity,
    partial_trace,
)


class PlatformKind(str, Enum):
    COLOR_CENTER = "color_center"
    TRAPPED_ION = "trapped_ion"
    ABSTRACT = "abstract"


# parameter name -> no-imperfection kind; names absent here are not improvable
PARAMETER_KINDS: dict[str, str] = {
    "visibility": "probability",
    "p_det": "probability",
    "swap_quality": "probability",
    "p_dc": "error_probability",
    "p_dexc": "error_probability",
    "n_1e": "n_1e",
    "sigma_phase": "phase_std",
    "emission_fidelity": "emission_fidelity",
    "T1": "t1",
    "T2": "t2",
    "electron_T1": "t1",
    "electron_T2": "t2",
    "carbon_T1": "t1",
    "carbon_T2": "t2",
    "coherence_time": "ion_tc",
    "electron_readout_f0": "probability",
    "electron_readout_f1": "probability",
    "carbon_init_fidelity": "probability",
    "carbon_z_fidelity": "probability",
    "cx_fidelity": "probability",
    "electron_init_fidelity": "probability",
    "electron_gate_fidelity": "probability",
    "readout_f0": "probability",
    "readout_f1": "probability",
    "init_fidelity": "probability",
    "z_fidelity": "probability",
    "ms_fidelity": "probability",
}

REQUIRED: dict[PlatformKind, frozenset[str]] = {
    PlatformKind.COLOR_CENTER: frozenset(
        """visibility p_dexc n_1e p_dc sigma_phase p_det emission_fidelity
        emission_duration electron_readout_f0 electron_readout_f1
        electron_readout_duration carbon_init_fidelity carbon_init_duration
        carbon_z_fidelity carbon_z_duration cx_fidelity cx_duration
        electron_init_fidelity electron_init_duration electron_gate_fidelity
        electron_gate_duration electron_T1 electron_T2 carbon_T1
        carbon_T2""".split()
    ),
    PlatformKind.TRAPPED_ION: frozenset(
        """visibility p_dc p_det emission_fidelity emission_duration readout_f0
        readout_f1 readout_duration init_fidelity init_duration z_fidelity
        z_duration ms_fidelity ms_duration coherence_time hl_wavefunction
        hl_emission detection_window reference_coincidence_window""".split()
    ),
    PlatformKind.ABSTRACT: frozenset(
        """visibility p_dc p_det emission_fidelity emission_duration
        swap_quality swap_duration T1 T2""".split()
    ),
}

OPTIONAL = frozenset({"p_ph_ph", "p_ph_dc", "p_dc_dc"})


@dataclass(frozen=True)
class HardwareParams:
    platform: PlatformKind
    values: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        platform = PlatformKind(self.platform)
        object.__setattr__(self, "platform", platform)
        values = {k: float(v) for k, v in self.values.items()}
        missing = REQUIRED[platform] - values.keys()
        if missing:
            raise ValueError(f"missing {platform.value} parameters: {sorted(missing)}")
        unknown = values.keys() - REQUIRED[platform] - OPTIONAL
        if unknown:
            raise ValueError(f"unknown {platform.value} parameters: {sorted(unknown)}")
        for k, v in values.items():
            _check_value(k, v)
        object.__setattr__(self, "values", dict(sorted(values.items())))

    def __getitem__(self, key: str) -> float:
        return self.values[key]

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def with_values(self, **updates: float) -> "HardwareParams":
        return replace(self, values={**self.values, **updates})

    def to_dict(self) -> dict:
        return {"platform": self.platform.value, "values": dict(self.values)}


def _check_value(name: str, v: float) -> None:
    kind = PARAMETER_KINDS.get(name)
    if name.endswith("_fidelity") and name != "emission_fidelity" or kind == "probability":
        ok = 0 <= v <= 1
    elif kind == "emission_fidelity":
        ok = 0.25 <= v <= 1
    elif kind == "error_probability" or name in OPTIONAL:
        ok = 0 <= v <= 1
    elif kind == "phase_std":
        ok = v >= 0
    else:
        ok = v > 0
    if not ok or math.isnan(v):
        raise ValueError(f"parameter {name}={v} out of range")


BASELINES = ("cc-baseline", "ti-baseline", "abstract-cc", "abstract-ti")


def load_baseline(name: str) -> HardwareParams:
    if name not in BASELINES:
        raise KeyError(f"unknown baseline {name!r}; choose from {BASELINES}")
    text = resources.files("repeaterforge.data").joinpath(f"{name}.yaml").read_text()
    data = yaml.safe_load(text)
    return HardwareParams(PlatformKind(data["platform"]), data["values"])


# ------------------------------------------------------------------- gates


def rx(theta: float) -> np.ndarray:
    return expm(-0.5j * theta * X)


def ry(theta: float) -> np.ndarray:
    return expm(-0.5j * theta * Y)


def rz(theta: float) -> np.ndarray:
    return expm(-0.5j * theta * Z)


def controlled_x_rotation(theta: float) -> np.ndarray:
    """Electron-controlled carbon rotation: Rx(theta) if the electron is |0>,
    Rx(-theta) if it is |1>. Electron is the first qubit."""
    return expm(-0.5j * theta * np.kron(Z, X))


def molmer_sorensen(phi: float = math.pi / 4) -> np.ndarray:
    axis = math.cos(phi) * X + math.sin(phi) * Y
    return expm(-0.25j * math.pi * np.kron(axis, axis))


@dataclass(frozen=True)
class Step:
    """One circuit step on a local register.

    ``kind`` is "gate", "measure" or "init". Gates are followed by
    depolarizing noise with p = 1 - F on every participating qubit.
    """

    kind: str
    qubits: tuple[int, ...]
    duration: str
    unitary: Optional[np.ndarray] = None
    fidelity: Optional[str] = None
    readout: Optional[tuple[str, str]] = None


def _gate(u, qubits, fid, dur):
    return Step("gate", tuple(qubits), dur, unitary=u, fidelity=fid)


# Color center, qubit 0 = electron, qubit 1 = carbon.
CC_BSM = (
    _gate(controlled_x_rotation(math.pi / 2), (0, 1), "cx_fidelity", "cx_duration"),
    _gate(rx(math.pi / 2), (0,), "electron_gate_fidelity", "electron_gate_duration"),
    _gate(rz(math.pi / 2), (1,), "carbon_z_fidelity", "carbon_z_duration"),
    Step("measure", (0,), "electron_readout_duration", readout=("electron_readout_f0", "electron_readout_f1")),
    Step("init", (0,), "electron_init_duration", fidelity="electron_init_fidelity"),
    _gate(rx(math.pi / 2), (0,), "electron_gate_fidelity", "electron_gate_duration"),
    _gate(controlled_x_rotation(math.pi / 2), (0, 1), "cx_fidelity", "cx_duration"),
    _gate(ry(math.pi / 2), (0,), "electron_gate_fidelity", "electron_gate_duration"),
    Step("measure", (0,), "electron_readout_duration", readout=("electron_readout_f0", "electron_readout_f1")),
)

CC_MOVE = (
    Step("init", (1,), "carbon_init_duration", fidelity="carbon_init_fidelity"),
    _gate(ry(math.pi / 2), (0,), "electron_gate_fidelity", "electron_gate_duration"),
    _gate(controlled_x_rotation(-math.pi / 2), (0, 1), "cx_fidelity", "cx_duration"),
    _gate(rx(math.pi / 2), (0,), "electron_gate_fidelity", "electron_gate_duration"),
    _gate(rz(math.pi / 2), (1,), "carbon_z_fidelity", "carbon_z_duration"),
    _gate(controlled_x_rotation(-math.pi / 2), (0, 1), "cx_fidelity", "cx_duration"),
    _gate(ry(math.pi / 2), (0,), "electron_gate_fidelity", "electron_gate_duration"),
    _gate(rx(math.pi), (0,), "electron_gate_fidelity", "electron_gate_duration"),
)

TI_BSM = (
    _gate(rz(math.pi / 4), (0,), "z_fidelity", "z_duration"),
    _gate(rz(-math.pi / 4), (1,), "z_fidelity", "z_duration"),
    _gate(molmer_sorensen(), (0, 1), "ms_fidelity", "ms_duration"),
    Step("measure", (0,), "readout_duration", readout=("readout_f0", "readout_f1")),
    Step("measure", (1,), "zero", readout=("readout_f0", "readout_f1")),
)

ABSTRACT_BSM = (
    _gate(CNOT, (0, 1), None, "zero"),
    _gate(H, (0,), None, "zero"),
    Step("measure", (0,), "zero"),
    Step("measure", (1,), "zero"),
)

BSM_CIRCUITS = {
    PlatformKind.COLOR_CENTER: CC_BSM,
    PlatformKind.TRAPPED_ION: TI_BSM,
    PlatformKind.ABSTRACT: ABSTRACT_BSM,
}


def _lookup(params: Optional[HardwareParams], key: Optional[str], default: float) -> float:
    if key is None or key == "zero" or params is None:
        return default
    return params[key]


def circuit_duration(steps, params: HardwareParams) -> float:
    return sum(_lookup(params, s.duration, 0.0) for s in steps)


def _reset(m: np.ndarray, qubit: int, n: int, excited: float) -> np.ndarray:
    """Trace out ``qubit`` and put it back in diag(1 - excited, excited)."""
    keep = [q for q in range(n) if q != qubit]
    rest = partial_trace(m, n, keep)
    fresh = np.diag([1 - excited, excited]).astype(complex)
    out = np.kron(rest, fresh).reshape([2] * (2 * n))
    # fresh qubit sits last; move it to position ``qubit``
    order = keep + [qubit]
    perm = list(np.argsort(order))
    return out.transpose(perm + [n + p for p in perm]).reshape(2**n, 2**n)


def run_circuit(
    m: np.ndarray,
    n: int,
    steps,
    params: Optional[HardwareParams],
    noisy: bool = True,
) -> dict[tuple[int, ...], np.ndarray]:
    """Run ``steps`` on the (possibly unnormalized) matrix ``m``.

    Returns the unnormalized post-circuit matrix for every raw measurement
    record. Readout flips are not applied here.
    """
    branches = {(): np.asarray(m, dtype=complex)}
    for s in steps:
        new = {}
        for record, rho in branches.items():
            if s.kind == "gate":
                big = embed_operator(s.unitary, s.qubits, n)
                rho = big @ rho @ big.conj().T
                f = _lookup(params, s.fidelity, 1.0) if noisy else 1.0
                if f < 1:
                    kraus = Depolarizing(1 - f).kraus()
                    for q in s.qubits:
                        rho = apply_kraus(rho, kraus, [q], n)
                new[record] = rho
            elif s.kind == "init":
                f = _lookup(params, s.fidelity, 1.0) if noisy else 1.0
                new[record] = _reset(rho, s.qubits[0], n, 1 - f)
            elif s.kind == "measure":
                q = s.qubits[0]
                for bit in (0, 1):
                    proj = embed_operator(np.diag([1 - bit, bit]).astype(complex), [q], n)
                    new[record + (bit,)] = proj @ rho @ proj
            else:
                raise ValueError(f"unknown step kind {s.kind!r}")
        branches = new
    return branches


def _readout_matrix(steps, params, noisy) -> list[np.ndarray]:
    """Per measurement, P(reported | raw) as a 2x2 matrix [reported, raw]."""
    out = []
    for s in steps:
        if s.kind != "measure":
            continue
        if s.readout is None or not noisy:
            out.append(np.eye(2))
        else:
            f0, f1 = params[s.readout[0]], params[s.readout[1]]
            out.append(np.array([[f0, 1 - f1], [1 - f0, f1]]))
    return out


def effective_povm(platform: PlatformKind, params: Optional[HardwareParams], noisy: bool = True):
    """Two-qubit POVM element for every reported outcome of the BSM circuit."""
    steps = BSM_CIRCUITS[platform]
    key = None if params is None or not noisy else tuple(sorted(params.values.items()))
    return _effective_povm_cached(platform, key, noisy)


@lru_cache(maxsize=256)
def _effective_povm_cached(platform, key, noisy):
    steps = BSM_CIRCUITS[platform]
    params = HardwareParams(platform, dict(key)) if key is not None else None
    raw: dict[tuple[int, ...], np.ndarray] = {}
    for i in range(4):
        for j in range(4):
            basis = np.zeros((4, 4), dtype=complex)
            basis[i, j] = 1
            for record, rho in run_circuit(basis, 2, steps, params, noisy).items():
                e = raw.setdefault(record, np.zeros((4, 4), dtype=complex))
                e[j, i] += np.trace(rho)
    flips = _readout_matrix(steps, params, noisy)
    reported = {}
    for record, e in raw.items():
        for out in raw:
            w = math.prod(flips[k][out[k], record[k]] for k in range(len(record)))
            if w:
                reported.setdefault(out, np.zeros((4, 4), dtype=complex))
                reported[out] = reported[out] + w * e
    return reported


def _project(left: np.ndarray, right: np.ndarray, e: np.ndarray, first_left: bool) -> np.ndarray:
    """Unnormalized (A, B) state after measuring left[1] and right[0] with e.

    ``first_left`` says whether the left pair's qubit is circuit qubit 0.
    """
    l = left.reshape(2, 2, 2, 2)  # a r1 a' r1'
    r = right.reshape(2, 2, 2, 2)  # r2 b r2' b'
    if first_left:
        ee = e.reshape(2, 2, 2, 2)  # r1' r2' r1 r2 as operator rows x cols
        out = np.einsum("awcx,ybzd,xzwy->abcd", l, r, ee)
    else:
        ee = e.reshape(2, 2, 2, 2)  # r2' r1' r2 r1
        out = np.einsum("awcx,ybzd,zxyw->abcd", l, r, ee)
    return out.reshape(4, 4)


@lru_cache(maxsize=8)
def frame_table(platform: PlatformKind, first_left: bool = True) -> dict:
    """Bell frame of the swapped pair for ideal inputs and noiseless circuit.

    Maps (left frame, right frame, reported bits) to the frame of (A, B).
    """
    povm = effective_povm(platform, None, noisy=False)
    table = {}
    for bl in BELL_INDICES:
        for br in BELL_INDICES:
            for bits, e in povm.items():
                rho = _project(bell_state(bl).matrix, bell_state(br).matrix, e, first_left)
                p = np.trace(rho).real
                if p < 1e-12:
                    continue
                state = DensityMatrix.from_unnormalized(rho)
                hits = [b for b in BELL_INDICES if fidelity(state, bell_state(b)) > 1 - 1e-9]
                if len(hits) != 1:
                    raise RuntimeError(f"{platform.value} circuit is not a Bell-state measurement")
                table[(bl, br, bits)] = hits[0]
    return table


@dataclass(frozen=True)
class SwapResult:
    bits: tuple[int, ...]
    frame: BellIndex
    duration: float
    state: DensityMatrix


def bell_state_measurement(
    left: DensityMatrix,
    left_frame: BellIndex,
    right: DensityMatrix,
    right_frame: BellIndex,
    params: HardwareParams,
    rng: np.random.Generator,
    first_left: bool = True,
) -> SwapResult:
    """Entanglement swap on the local halves left[1] and right[0].

    Returns the uncorrected (A, B) state and the Bell frame it should be in,
    as inferred from the reported bits.
    """
    platform = params.platform
    povm = effective_povm(platform, params, noisy=platform is not PlatformKind.ABSTRACT)
    outcomes = sorted(povm)
    states = [_project(left.matrix, right.matrix, povm[o], first_left) for o in outcomes]
    probs = np.array([max(np.trace(s).real, 0.0) for s in states])
    k = int(rng.choice(len(outcomes), p=probs / probs.sum()))
    bits = outcomes[k]
    state = DensityMatrix.from_unnormalized(states[k])
    if platform is PlatformKind.ABSTRACT:
        state = apply_channel(state, Depolarizing(1 - params["swap_quality"]), [1])
        duration = params["swap_duration"]
    else:
        duration = circuit_duration(BSM_CIRCUITS[platform], params)
    frame = frame_table(platform, first_left)[(left_frame, right_frame, bits)]
    return SwapResult(bits, frame, duration, state)


def move_to_memory(state: DensityMatrix, qubit: int, params: HardwareParams) -> tuple[DensityMatrix, float]:
    """Move ``qubit`` of a two-qubit pair from the electron to a fresh carbon."""
    if params.platform is not PlatformKind.COLOR_CENTER:
        raise ValueError("move_to_memory applies to color-center nodes only")
    n = 3
    # register: the pair, then the carbon; the circuit sees (electron, carbon)
    m = np.kron(state.matrix, np.diag([1.0, 0.0]))
    steps = [replace(s, qubits=tuple(qubit if q == 0 else 2 for q in s.qubits)) for s in CC_MOVE]
    (rho,) = run_circuit(m, n, steps, params).values()
    # trace out the electron, keep the carbon in the electron's slot
    t = rho.reshape([2] * 6)
    t = np.trace(t, axis1=qubit, axis2=qubit + 3)
    out = t.reshape(4, 4)
    if qubit == 0:
        # remaining order is (other, carbon); restore (carbon, other)
        out = out.reshape(2, 2, 2, 2).transpose(1, 0, 3, 2).reshape(4, 4)
    return DensityMatrix(out), circuit_duration(CC_MOVE, params)


def move_duration(params: HardwareParams) -> float:
    return circuit_duration(CC_MOVE, params)


# ------------------------------------------------------------------- noise


def emit_entangled_photon_state(params: HardwareParams) -> tuple[DensityMatrix, float]:
    """Matter-photon state after one emission, and the emission duration.

    A perfect Phi+ with the matter qubit depolarized by p = 4(1 - F)/3, which
    leaves fidelity F to Phi+.
    """
    f = params["emission_fidelity"]
    state = apply_channel(bell_state(), Depolarizing(4 * (1 - f) / 3), [0])
    return state, params["emission_duration"]


def induced_dephasing_probability(k_attempts: int, alpha: float, n_1e: float) -> float:
    p_single = (1 - alpha) * (1 - math.exp(-1 / n_1e))
    return (1 - (1 - 2 * p_single) ** k_attempts) / 2


def apply_induced_dephasing(
    state: DensityMatrix,
    qubit: int,
    k_attempts: int,
    alpha: float,
    params: HardwareParams,
    repeats: int = 1,
) -> DensityMatrix:
    """Dephasing of a stored carbon while the electron keeps attempting."""
    if params.platform is not PlatformKind.COLOR_CENTER:
        raise ValueError("induced dephasing applies to color-center nodes only")
    p = induced_dephasing_probability(k_attempts, alpha, params["n_1e"])
    for _ in range(repeats):
        state = apply_channel(state, Dephasing(p), [qubit])
    return state


def decohere_idle(
    state: DensityMatrix,
    qubit: int,
    elapsed: float,
    params: HardwareParams,
    role: str = "communication",
    trap_rate: float = 0.0,
) -> DensityMatrix:
    """Memory noise on one qubit of a pair for ``elapsed`` seconds.

    ``trap_rate`` is the standard-normal sample shared by all ions of a
    trapped-ion node since its last reset.
    """
    if elapsed < 0:
        raise ValueError("elapsed time must be nonnegative")
    if elapsed == 0:
        return state
    if params.platform is PlatformKind.TRAPPED_ION:
        ch = CollectiveGaussian(trap_rate, elapsed, params["coherence_time"])
        return apply_channel(state, ch, [qubit])
    if params.platform is PlatformKind.COLOR_CENTER:
        prefix = "carbon" if role == "memory" else "electron"
        t1, t2 = params[f"{prefix}_T1"], params[f"{prefix}_T2"]
    else:
        t1, t2 = params["T1"], params["T2"]
    state = apply_channel(state, AmplitudeDamping(elapsed, t1), [qubit])
    return apply_channel(state, PhaseDamping(elapsed, t1, t2), [qubit])


# ----------------------------------------------------------- abstract mapping


def _readout_quality(f0: float, f1: float) -> float:
    return f0 + f1 - 1


def swap_quality(params: HardwareParams) -> tuple[float, float]:
    """Swap quality and duration of the abstract stand-in for a platform.

    The product runs over the error-bearing operations of the swap; readout
    enters through f0 + f1 - 1 for each measured qubit.
    """
    p = params
    if p.platform is PlatformKind.ABSTRACT:
        return p["swap_quality"], p["swap_duration"]
    if p.platform is PlatformKind.COLOR_CENTER:
        r = _readout_quality(p["electron_readout_f0"], p["electron_readout_f1"])
        return p["cx_fidelity"] * r**2, p["cx_duration"] + p["electron_readout_duration"]
    r = _readout_quality(p["readout_f0"], p["readout_f1"])
    sq = p["z_fidelity"] * p["ms_fidelity"] * r**2
    return sq, p["z_duration"] + p["ms_duration"] + p["readout_duration"]


def map_to_abstract(params: HardwareParams, coincidence: Optional[Mapping[str, float]] = None) -> HardwareParams:
    """Abstract parameter set equivalent to a platform baseline."""
    if params.platform is PlatformKind.ABSTRACT:
        raise ValueError("parameters are already abstract")
    sq, duration = swap_quality(params)
    values = {k: params[k] for k in ("visibility", "p_dc", "p_det", "emission_fidelity")}
    values["emission_duration"] = params["emission_duration"]
    values["swap_quality"] = sq
    values["swap_duration"] = duration
    if params.platform is PlatformKind.COLOR_CENTER:
        values["T1"] = params["carbon_T1"]
        values["T2"] = params["carbon_T2"]
    else:
        values["T1"] = math.inf
        values["T2"] = params["coherence_time"]
        values["emission_duration"] += params["init_duration"]
    if coincidence:
        values.update(coincidence)
    return HardwareParams(PlatformKind.ABSTRACT, values)


# -------------------------------------------------------------- registers


@dataclass
class QubitRegister:
    """Occupancy bookkeeping for one node.

    Slots map a role to the (pair id, position) stored there. A color-center
    node has one communication and one memory slot; a trapped-ion node has two
    equivalent ion slots; an abstract node is treated like a trapped ion
    without the shared environment.
    """

    platform: PlatformKind
    slots: dict[str, Optional[tuple[int, int]]] = field(default_factory=dict)
    last_touched: dict[str, float] = field(default_factory=dict)
    trap_rate: float = 0.0

    def __post_init__(self):
        if not self.slots:
            roles = ("communication", "memory") if self.platform is PlatformKind.COLOR_CENTER else ("ion0", "ion1")
            self.slots = {r: None for r in roles}

    def free_slot(self, prefer: str = "communication") -> str:
        if self.platform is PlatformKind.COLOR_CENTER:
            if self.slots[prefer] is not None:
                raise RuntimeError(f"{prefer} qubit busy")
            return prefer
        for role, held in self.slots.items():
            if held is None:
                return role
        raise RuntimeError("no free qubit")

    def occupy(self, role: str, ref: tuple[int, int], now: float) -> None:
        if self.slots[role] is not None:
            raise RuntimeError(f"{role} qubit busy")
        self.slots[role] = ref
        self.last_touched[role] = now

    def release(self, role: str) -> None:
        self.slots[role] = None
        self.last_touched.pop(role, None)

    def move(self, src: str, dst: str, now: float) -> None:
        if self.slots[dst] is not None:
            raise RuntimeError(f"{dst} qubit occupied")
        self.slots[dst], self.slots[src] = self.slots[src], None
        self.last_touched[dst] = now
        self.last_touched.pop(src, None)

    def is_empty(self) -> bool:
        return all(v is None for v in self.slots.values())

    def reset_trap(self, rng: np.random.Generator) -> None:
        if self.platform is PlatformKind.TRAPPED_ION:
            self.trap_rate = float(rng.standard_normal())
