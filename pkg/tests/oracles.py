"""Independent numerical references used by the tests.

Nothing here calls the closed forms under test. The click-time density is
re-derived from its defining convolution and integrated numerically.
"""

import math

import numpy as np
from scipy import integrate


def click_density(a, b, t):
    """p(t) = int_0^t a e^{-a s} 2b e^{-2b (t - s)} ds, by quadrature."""
    if t <= 0:
        return 0.0
    f = lambda s: a * math.exp(-a * s) * 2 * b * math.exp(-2 * b * (t - s))
    return integrate.quad(f, 0, t, epsabs=0, epsrel=1e-13)[0]


def _density_grid(a, b):
    # the convolution has a closed antiderivative-free form only through the
    # theorem, so tabulate by quadrature on demand with caching
    cache = {}

    def p(t):
        key = float(t)
        if key not in cache:
            cache[key] = click_density(a, b, key)
        return cache[key]

    return p


def detection_probability(a, b, T):
    p = _density_grid(a, b)
    return integrate.quad(p, 0, T, epsabs=1e-15, epsrel=1e-12)[0]


def coincidence_ph_ph(a, b, T, tau):
    p = _density_grid(a, b)
    num = integrate.dblquad(
        lambda t2, t1: p(t1) * p(t2),
        0,
        T,
        lambda t1: max(0.0, t1 - tau),
        lambda t1: min(T, t1 + tau),
        epsabs=1e-15,
        epsrel=1e-10,
    )[0]
    return num / detection_probability(a, b, T) ** 2


def coincidence_ph_dc(a, b, T, tau):
    p = _density_grid(a, b)
    pts = [x for x in (tau, T - tau) if 0 < x < T]
    num = integrate.quad(
        lambda t1: p(t1) * (min(T, t1 + tau) - max(0.0, t1 - tau)) / T,
        0,
        T,
        epsabs=1e-15,
        epsrel=1e-12,
        points=pts or None,
    )[0]
    return num / detection_probability(a, b, T)


def coincidence_dc_dc(T, tau, n=200_000, rng=None):
    """Monte Carlo over two uniform dark-count times."""
    rng = np.random.default_rng(0) if rng is None else rng
    t = rng.uniform(0, T, size=(n, 2))
    return float(np.mean(np.abs(t[:, 0] - t[:, 1]) <= tau))


def visibility(a, b, T, tau):
    """Interference term over coincidence term for clicks at t1 < t2 <= t1 + tau.

    Emission at s ~ a e^{-a s}; the photon amplitude after emission is
    sqrt(2b) e^{-b (t - s)}. Two photons interfere through the overlap of
    their amplitudes at the two click times.
    """

    def overlap(t1, t2):
        m = min(t1, t2)
        f = lambda s: a * math.exp(-a * s) * 2 * b * math.exp(-b * (t1 - s)) * math.exp(-b * (t2 - s))
        return integrate.quad(f, 0, m, epsabs=0, epsrel=1e-12)[0] ** 2

    p = _density_grid(a, b)
    opts = dict(epsabs=1e-14, epsrel=1e-9)
    inter = integrate.dblquad(lambda t2, t1: overlap(t1, t2), 0, T, lambda x: x, lambda x: min(x + tau, T), **opts)[0]
    coinc = integrate.dblquad(lambda t2, t1: p(t1) * p(t2), 0, T, lambda x: x, lambda x: min(x + tau, T), **opts)[0]
    return inter / coinc


def haar_teleportation_fidelity(channel, n=100_000, rng=None):
    """Mean <psi|channel(psi)|psi> over Haar-random pure states, with SEM."""
    rng = np.random.default_rng(1) if rng is None else rng
    z = rng.normal(size=(n, 2)) + 1j * rng.normal(size=(n, 2))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    vals = np.array([np.real(np.conj(v) @ channel(np.outer(v, np.conj(v))) @ v) for v in z])
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n))


def bloch_average(fn):
    """Uniform average of fn(rho) over pure qubit states, by quadrature on
    the Bloch sphere."""

    def f(phi, theta):
        v = np.array([math.cos(theta / 2), np.exp(1j * phi) * math.sin(theta / 2)])
        return fn(np.outer(v, np.conj(v))) * math.sin(theta) / (4 * math.pi)

    return integrate.dblquad(f, 0, math.pi, 0, 2 * math.pi, epsabs=1e-12, epsrel=1e-10)[0]


def coincidence_dc_dc_quad(T, tau):
    """Two uniform dark-count times within tau of each other, by quadrature."""
    return integrate.dblquad(
        lambda t2, t1: 1.0 / T**2,
        0,
        T,
        lambda t1: max(0.0, t1 - tau),
        lambda t1: min(T, t1 + tau),
        epsabs=1e-15,
        epsrel=1e-12,
    )[0]
