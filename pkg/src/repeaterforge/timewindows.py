"""Detection and coincidence statistics for double-exponential photons.

A photon is emitted at a time drawn from ``a e^{-a t}`` and its wavefunction
decays as ``e^{-b t}`` after emission, so the click-time density inside an
unbounded window is ``p(t) = 2ab eta/(a - 2b) (e^{-2bt} - e^{-at})``.

The closed forms below have removable singularities at ``a = 2b`` (and at
``a = b`` for the visibility). Close to those lines the functions are
evaluated as the mean over a small circle in the complex ``a`` plane, which
equals the value at the centre for an analytic function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

_NEAR = 0.05  # relative distance to a singular line that triggers the circle
_RADIUS = 0.25  # circle radius, relative to b
_POINTS = 32


@dataclass(frozen=True)
class PhotonShape:
    a: float  # emission-time rate, 1/s
    b: float  # wavefunction amplitude decay rate, 1/s
    eta: float = 1.0  # detector efficiency

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("rates a and b must be positive")
        if not 0 <= self.eta <= 1:
            raise ValueError("eta must lie in [0, 1]")

    @property
    def half_lives(self) -> tuple[float, float]:
        """(wavefunction amplitude half-life, emission-time half-life)."""
        return math.log(2) / self.b, math.log(2) / self.a


@dataclass(frozen=True)
class WindowConfig:
    T: float  # detection window, s
    tau: float  # coincidence window, s

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("detection window T must be positive")
        if not 0 <= self.tau <= self.T:
            raise ValueError("coincidence window must satisfy 0 <= tau <= T")


def shape_from_half_lives(hl_wavefunction: float, hl_emission: float, eta: float = 1.0) -> PhotonShape:
    """Rates from half-lives.

    ``hl_emission`` is the half-life of the emission-time density and
    ``hl_wavefunction`` the half-life of the wavefunction amplitude |psi|,
    so that |psi|^2 halves after hl_wavefunction / 2.
    """
    if hl_wavefunction <= 0 or hl_emission <= 0:
        raise ValueError("half-lives must be positive")
    return PhotonShape(a=math.log(2) / hl_emission, b=math.log(2) / hl_wavefunction, eta=eta)


def _regularized(f: Callable, a: float, b: float, singular: tuple[float, ...]) -> float:
    if any(abs(a - s) < _NEAR * b for s in singular):
        ring = a + _RADIUS * b * np.exp(2j * np.pi * np.arange(_POINTS) / _POINTS)
        return float(np.mean(f(ring)).real)
    return float(np.real(f(a)))


def click_density(shape: PhotonShape, t):
    """p(t), the unconditioned click-time density."""
    a, b = shape.a, shape.b
    f = lambda a: 2 * a * b / (a - 2 * b) * (np.exp(-2 * b * t) - np.exp(-a * t))
    return shape.eta * _regularized(f, a, b, (2 * b,))


def _p_det_unit(a, b, T):
    d = a - 2 * b
    return 1 - a / d * np.exp(-2 * b * T) + 2 * b / d * np.exp(-a * T)


def detection_probability(shape: PhotonShape, T: float) -> float:
    """Probability that the photon is detected within [0, T]."""
    if T < 0:
        raise ValueError("T must be nonnegative")
    if T == 0:
        return 0.0
    if math.isinf(T):
        return shape.eta
    b = shape.b
    return shape.eta * _regularized(lambda a: _p_det_unit(a, b, T), shape.a, b, (2 * b,))


def _ph_ph_raw(a, b, T, t):
    e = np.exp
    d = a - 2 * b
    s = a + 2 * b
    return (
        a * a / (d * s) * (1 - e(-2 * b * t))
        - 4 * b * b / (d * s) * (1 - e(-a * t))
        + a * a / d**2 * (e(-4 * b * T) - e(2 * b * t - 4 * b * T))
        + 4 * b * b / d**2 * (e(-2 * a * T) - e(a * t - 2 * a * T))
        - 4 * a * b / d**2 * (e(-s * T) - (a * e(2 * b * t - s * T) + 2 * b * e(a * t - s * T)) / s)
    )


def _ph_dc_raw(a, b, T, t):
    e = np.exp
    d = a - 2 * b
    return a / (2 * b * d * T) * (
        1 + 2 * b * t - e(-2 * b * t) + e(-2 * b * T) * (1 - 2 * b * t) - e(2 * b * t - 2 * b * T)
    ) - 2 * b / (a * d * T) * (1 + a * t - e(-a * t) + e(-a * T) * (1 - a * t) - e(a * t - a * T))


def _visibility_raw(a, b, T, t):
    e = np.exp
    d = a - 2 * b
    s = a + 2 * b
    return (
        a / s * (1 - e(-2 * b * t))
        + 2 * a * b * b / (d**2 * (a - b)) * (e(-2 * a * T) - e(2 * (a - b) * t - 2 * a * T))
        + a * a / d**2 * (e(-4 * b * T) - e(2 * b * t - 4 * b * T))
        - 16 * a * b * b / (d**2 * s) * (e(-s * T) - e(a * t - s * T))
    )


def _unit_window(shape: PhotonShape, w: WindowConfig, raw) -> float:
    b = shape.b
    return _regularized(lambda a: raw(a, b, w.T, w.tau), shape.a, b, (2 * b, b))


def coincidence_prob_ph_ph(shape: PhotonShape, w: WindowConfig) -> float:
    """P(|t1 - t2| <= tau) for two photons, both detected within [0, T]."""
    if w.tau == 0:
        return 0.0
    norm = detection_probability(shape, w.T) / shape.eta
    return float(np.clip(_unit_window(shape, w, _ph_ph_raw) / norm**2, 0.0, 1.0))


def coincidence_prob_dc_dc(w: WindowConfig) -> float:
    """P(|t1 - t2| <= tau) for two dark counts uniform on [0, T]."""
    return 1 - ((w.T - w.tau) / w.T) ** 2


def coincidence_prob_ph_dc(shape: PhotonShape, w: WindowConfig) -> float:
    """P(|t1 - t2| <= tau) for a detected photon and a uniform dark count."""
    if w.tau == 0:
        return 0.0
    norm = detection_probability(shape, w.T) / shape.eta
    return float(np.clip(_unit_window(shape, w, _ph_dc_raw) / norm, 0.0, 1.0))


def visibility(shape: PhotonShape, w: WindowConfig) -> float:
    """Two-photon interference visibility for clicks at different detectors
    within the coincidence window."""
    php = _unit_window(shape, w, _ph_ph_raw)
    if php <= 0:
        raise ValueError("visibility undefined: zero coincidence probability")
    return float(np.clip(_unit_window(shape, w, _visibility_raw) / php, 0.0, 1.0))


@dataclass(frozen=True)
class CoincidenceFactors:
    p_ph_ph: float
    p_ph_dc: float
    p_dc_dc: float

    def __post_init__(self):
        for name in ("p_ph_ph", "p_ph_dc", "p_dc_dc"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")


def coincidence_factors(shape: PhotonShape, w: WindowConfig) -> CoincidenceFactors:
    return CoincidenceFactors(
        p_ph_ph=coincidence_prob_ph_ph(shape, w),
        p_ph_dc=coincidence_prob_ph_dc(shape, w),
        p_dc_dc=coincidence_prob_dc_dc(w),
    )
