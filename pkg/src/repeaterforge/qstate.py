"""Dense density matrices on up to three qubits, noise channels and
teleportation-fidelity functionals.

Qubit 0 is the most significant bit of the computational-basis index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cache
from typing import NamedTuple, Sequence, Union

import numpy as np

MAX_QUBITS = 3
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)
PAULIS = (I2, X, Y, Z)


class InvalidStateError(ValueError):
    pass


class BellIndex(NamedTuple):
    """Pauli frame X^i Z^j relating a Bell state to Phi+."""

    i: int
    j: int

    def pauli(self) -> np.ndarray:
        return np.linalg.matrix_power(X, self.i) @ np.linalg.matrix_power(Z, self.j)

    def compose(self, other: "BellIndex") -> "BellIndex":
        return BellIndex(self.i ^ other.i, self.j ^ other.j)


BELL_INDICES = tuple(BellIndex(i, j) for i in (0, 1) for j in (0, 1))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """An immutable, validated density matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidStateError(f"density matrix must be square, got {m.shape}")
        dim = m.shape[0]
        n = dim.bit_length() - 1
        if dim < 2 or 2**n != dim or n > MAX_QUBITS:
            raise InvalidStateError(f"dimension {dim} is not 2, 4 or 8")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL * max(1.0, np.max(np.abs(m))):
            raise InvalidStateError("density matrix is not Hermitian")
        if abs(np.trace(m).real - 1.0) > TRACE_TOL:
            raise InvalidStateError(f"trace {np.trace(m).real!r} differs from 1")
        m = 0.5 * (m + m.conj().T)
        if np.linalg.eigvalsh(m)[0] < -PSD_TOL:
            raise InvalidStateError("density matrix is not positive semidefinite")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_unnormalized(cls, m: np.ndarray) -> "DensityMatrix":
        m = np.asarray(m, dtype=complex)
        tr = np.trace(m).real
        if tr <= 0:
            raise InvalidStateError("cannot normalize a matrix with nonpositive trace")
        return cls(m / tr)

    @classmethod
    def from_ket(cls, ket: Sequence[complex]) -> "DensityMatrix":
        v = np.asarray(ket, dtype=complex)
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))

    @classmethod
    def maximally_mixed(cls, n_qubits: int) -> "DensityMatrix":
        d = 2**n_qubits
        return cls(np.eye(d) / d)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_qubits(self) -> int:
        return self.dim.bit_length() - 1

    def tensor(self, other: "DensityMatrix") -> "DensityMatrix":
        return DensityMatrix(np.kron(self.matrix, other.matrix))

    def partial_trace(self, keep: Sequence[int]) -> "DensityMatrix":
        return DensityMatrix(partial_trace(self.matrix, self.n_qubits, keep))

    def allclose(self, other: "DensityMatrix", atol: float = 1e-12) -> bool:
        return self.dim == other.dim and np.allclose(self.matrix, other.matrix, atol=atol)

    def to_json(self) -> dict:
        flat = self.matrix.ravel()
        return {"dim": self.dim, "entries": [[float(z.real), float(z.imag)] for z in flat]}

    @classmethod
    def from_json(cls, data: dict) -> "DensityMatrix":
        dim = int(data["dim"])
        flat = np.array([complex(re, im) for re, im in data["entries"]])
        return cls(flat.reshape(dim, dim))


def partial_trace(m: np.ndarray, n_qubits: int, keep: Sequence[int]) -> np.ndarray:
    keep = sorted(keep)
    t = m.reshape([2] * (2 * n_qubits))
    traced = [q for q in range(n_qubits) if q not in keep]
    for shift, q in enumerate(traced):
        axis = q - shift
        t = np.trace(t, axis1=axis, axis2=axis + t.ndim // 2)
    d = 2 ** len(keep)
    return t.reshape(d, d)


def _check_indices(n_qubits: int, qubits: Sequence[int]) -> None:
    if len(set(qubits)) != len(qubits):
        raise ValueError(f"qubit indices must be distinct: {qubits}")
    for q in qubits:
        if not 0 <= q < n_qubits:
            raise ValueError(f"qubit index {q} out of range for {n_qubits} qubits")


def embed_operator(op: np.ndarray, qubits: Sequence[int], n_qubits: int) -> np.ndarray:
    """Lift an operator on ``qubits`` (in the given order) to the full register."""
    rest = [q for q in range(n_qubits) if q not in qubits]
    full = np.kron(op, np.eye(2 ** len(rest)))
    order = list(qubits) + rest
    perm = np.argsort(order)
    t = full.reshape([2] * (2 * n_qubits))
    t = t.transpose(list(perm) + [n_qubits + p for p in perm])
    return t.reshape(2**n_qubits, 2**n_qubits)


def _act_left(op: np.ndarray, t: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Contract ``op`` into tensor ``t`` along ``axes`` (op rows replace them)."""
    k = len(axes)
    r = np.tensordot(op.reshape([2] * (2 * k)), t, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(r, list(range(k)), list(axes))


def apply_kraus(m: np.ndarray, kraus: Sequence[np.ndarray], qubits: Sequence[int], n_qubits: int) -> np.ndarray:
    if len(qubits) == 1:
        q = qubits[0]
        a, b = 2**q, 2 ** (n_qubits - q - 1)
        ks = np.asarray(kraus)
        t = m.reshape(a, 2, b, a, 2, b)
        return np.einsum("rxi,aibcjd,ryj->axbcyd", ks, t, ks.conj(), optimize=False).reshape(m.shape)
    t = m.reshape([2] * (2 * n_qubits))
    cols = [n_qubits + q for q in qubits]
    out = np.zeros_like(t)
    for k in kraus:
        out += _act_left(k.conj(), _act_left(k, t, qubits), cols)
    return out.reshape(m.shape)


def apply_unitary(state: DensityMatrix, u: np.ndarray, qubits: Sequence[int]) -> DensityMatrix:
    _check_indices(state.n_qubits, qubits)
    big = embed_operator(u, qubits, state.n_qubits)
    return DensityMatrix(big @ state.matrix @ big.conj().T)


# ---------------------------------------------------------------- channels


def _prob(name: str, p: float) -> None:
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise ValueError(f"{name} must lie in [0, 1], got {p}")


def _time(name: str, t: float) -> None:
    if not t > 0:
        raise ValueError(f"{name} must be positive, got {t}")


@dataclass(frozen=True)
class Depolarizing:
    """rho -> (1 - p) rho + p I/2 on each target qubit."""

    p: float

    def __post_init__(self):
        _prob("p", self.p)

    def kraus(self):
        p = self.p
        return [math.sqrt(1 - 3 * p / 4) * I2] + [math.sqrt(p / 4) * s for s in (X, Y, Z)]


@dataclass(frozen=True)
class Dephasing:
    """rho -> (1 - p) rho + p Z rho Z on each target qubit."""

    p: float

    def __post_init__(self):
        _prob("p", self.p)

    def kraus(self):
        return [math.sqrt(1 - self.p) * I2, math.sqrt(self.p) * Z]


@dataclass(frozen=True)
class AmplitudeDamping:
    t: float
    T1: float

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("t must be nonnegative")
        _time("T1", self.T1)

    def kraus(self):
        keep = math.exp(-self.t / self.T1)
        k0 = np.array([[1, 0], [0, math.sqrt(keep)]], dtype=complex)
        k1 = np.array([[0, math.sqrt(1 - keep)], [0, 0]], dtype=complex)
        return [k0, k1]


@dataclass(frozen=True)
class PhaseDamping:
    """Z error with probability (1 - e^{-t/T2} e^{-t/(2 T1)}) / 2."""

    t: float
    T1: float
    T2: float

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("t must be nonnegative")
        _time("T1", self.T1)
        _time("T2", self.T2)

    @property
    def p(self) -> float:
        return 0.5 * (1 - math.exp(-self.t / self.T2) * math.exp(-self.t / (2 * self.T1)))

    def kraus(self):
        return Dephasing(self.p).kraus()


@dataclass(frozen=True)
class CollectiveGaussian:
    """One sample of collective dephasing: exp(-i r t/tau sum_j Z_j).

    ``r`` is a standard-normal draw shared by every ion of a trap.
    """

    r: float
    t: float
    tau: float

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("t must be nonnegative")
        _time("tau", self.tau)

    def unitary(self, n: int) -> np.ndarray:
        phi = self.r * self.t / self.tau
        u = np.array([1.0 + 0j])
        for _ in range(n):
            u = np.kron(u, np.array([np.exp(-1j * phi), np.exp(1j * phi)]))
        return np.diag(u)


@dataclass(frozen=True)
class CollectiveGaussianAveraged:
    """Collective dephasing averaged over r ~ N(0, 1).

    An element |x><y| is damped by exp(-(t/tau)^2 (s_x - s_y)^2 / 2), with
    s the eigenvalue of sum_j Z_j.
    """

    t: float
    tau: float

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("t must be nonnegative")
        _time("tau", self.tau)

    def damping(self, n: int) -> np.ndarray:
        idx = np.arange(2**n)
        s = np.array([n - 2 * bin(k).count("1") for k in idx], dtype=float)
        diff = s[:, None] - s[None, :]
        return np.exp(-((self.t / self.tau) ** 2) * diff**2 / 2)


@dataclass(frozen=True)
class BitflipReadout:
    """Classical readout error: a 0 (1) is reported wrongly with prob 1 - f0 (1 - f1)."""

    f0: float
    f1: float

    def __post_init__(self):
        _prob("f0", self.f0)
        _prob("f1", self.f1)

    def flip(self, bit: int, rng: np.random.Generator) -> int:
        keep = self.f0 if bit == 0 else self.f1
        return bit if rng.random() < keep else 1 - bit


ChannelSpec = Union[
    Depolarizing,
    Dephasing,
    AmplitudeDamping,
    PhaseDamping,
    CollectiveGaussian,
    CollectiveGaussianAveraged,
    BitflipReadout,
]


def apply_channel(state: DensityMatrix, ch: ChannelSpec, qubits: Sequence[int]) -> DensityMatrix:
    """Apply ``ch`` to ``qubits`` of ``state``.

    Single-qubit channels act independently on every listed qubit; the
    collective channels act jointly on the listed qubits.
    """
    qubits = list(qubits)
    _check_indices(state.n_qubits, qubits)
    n = state.n_qubits
    m = state.matrix
    if isinstance(ch, BitflipReadout):
        raise TypeError("readout errors act on classical outcomes, use BitflipReadout.flip")
    if isinstance(ch, CollectiveGaussian):
        return apply_unitary(state, ch.unitary(len(qubits)), qubits)
    if isinstance(ch, CollectiveGaussianAveraged):
        k = len(qubits)
        d = ch.damping(k)
        rest = [q for q in range(n) if q not in qubits]
        perm = qubits + rest
        t = m.reshape([2] * (2 * n)).transpose(perm + [n + p for p in perm])
        t = t.reshape(2**k, 2 ** (n - k), 2**k, 2 ** (n - k)) * d[:, None, :, None]
        inv = np.argsort(perm)
        t = t.reshape([2] * (2 * n)).transpose(list(inv) + [n + p for p in inv])
        return DensityMatrix(t.reshape(2**n, 2**n))
    kraus = ch.kraus()
    for q in qubits:
        m = apply_kraus(m, kraus, [q], n)
    return DensityMatrix(m)


# ------------------------------------------------------------ Bell states


@cache
def _bell_ket(i: int, j: int) -> np.ndarray:
    phi = np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2)
    return np.kron(BellIndex(i, j).pauli(), I2) @ phi


def bell_ket(idx: BellIndex) -> np.ndarray:
    return _bell_ket(idx[0], idx[1]).copy()


def bell_state(idx: BellIndex = BellIndex(0, 0)) -> DensityMatrix:
    """(X^i Z^j (x) 1)|Phi+> as a density matrix."""
    i, j = idx
    if i not in (0, 1) or j not in (0, 1):
        raise ValueError(f"invalid Bell index {idx}")
    return DensityMatrix.from_ket(_bell_ket(i, j))


def werner_state(bell_fidelity: float, idx: BellIndex = BellIndex(0, 0)) -> DensityMatrix:
    """Mixture of a Bell state with weight F and the other three at (1 - F)/3."""
    f = bell_fidelity
    m = np.zeros((4, 4), dtype=complex)
    for b in BELL_INDICES:
        w = f if b == tuple(idx) else (1 - f) / 3
        m += w * bell_state(b).matrix
    return DensityMatrix(m)


def fidelity(a: DensityMatrix, b_pure: DensityMatrix) -> float:
    """Overlap <phi|a|phi> with the pure reference b_pure = |phi><phi|."""
    if a.dim != b_pure.dim:
        raise ValueError("dimension mismatch")
    w, v = np.linalg.eigh(b_pure.matrix)
    if abs(w[-1] - 1) > 1e-9:
        raise ValueError("reference state is not pure")
    phi = v[:, -1]
    return float(np.real(phi.conj() @ a.matrix @ phi))


def teleportation_channel_apply(sigma: DensityMatrix, psi: DensityMatrix) -> DensityMatrix:
    """Teleport ``psi`` through the resource ``sigma``.

    The input sits next to the second qubit of ``sigma``; the pair (second
    qubit, input) is projected on each Bell state and the matching Pauli
    correction lands on the first qubit, which carries the output.
    """
    if sigma.dim != 4 or psi.dim != 2:
        raise ValueError("sigma must be a two-qubit and psi a one-qubit state")
    joint = np.kron(sigma.matrix, psi.matrix)
    out = np.zeros((2, 2), dtype=complex)
    for idx in BELL_INDICES:
        op = np.kron(idx.pauli(), bell_ket(idx).conj()[None, :])
        out += op @ joint @ op.conj().T
    return DensityMatrix(out)


def pauli_eigenstates() -> list[DensityMatrix]:
    kets = [
        [1, 0],
        [0, 1],
        [1, 1],
        [1, -1],
        [1, 1j],
        [1, -1j],
    ]
    return [DensityMatrix.from_ket(k) for k in kets]


def avg_teleportation_fidelity(sigma: DensityMatrix) -> float:
    """Haar-averaged fidelity of the teleportation channel, via the six
    Pauli eigenstates (a 2-design)."""
    if sigma.dim != 4:
        raise ValueError("sigma must be a two-qubit state")
    total = 0.0
    for psi in pauli_eigenstates():
        total += fidelity(teleportation_channel_apply(sigma, psi), psi)
    return total / 6


def pauli_correct(state: DensityMatrix, idx: BellIndex, qubit: int = 0) -> DensityMatrix:
    """Undo the frame X^i Z^j on ``qubit``, mapping bell_state(idx) to Phi+."""
    return apply_unitary(state, idx.pauli().conj().T, [qubit])
