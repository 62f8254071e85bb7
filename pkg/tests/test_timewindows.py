import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
import oracles

from repeaterforge.timewindows import (
    PhotonShape,
    WindowConfig,
    coincidence_factors,
    coincidence_prob_dc_dc,
    coincidence_prob_ph_dc,
    coincidence_prob_ph_ph,
    detection_probability,
    shape_from_half_lives,
    visibility,
)


def _check(a, b, T, tau, rel=1e-6, rel_v=1e-5):
    s, w = PhotonShape(a, b), WindowConfig(T, tau)
    assert detection_probability(s, T) == pytest.approx(oracles.detection_probability(a, b, T), rel=rel)
    assert coincidence_prob_ph_ph(s, w) == pytest.approx(oracles.coincidence_ph_ph(a, b, T, tau), rel=rel)
    assert coincidence_prob_ph_dc(s, w) == pytest.approx(oracles.coincidence_ph_dc(a, b, T, tau), rel=rel)
    assert visibility(s, w) == pytest.approx(oracles.visibility(a, b, T, tau), rel=rel_v)


@pytest.mark.parametrize(
    "a, b, T, tau",
    [
        (1.0, 1.0, 2.0, 0.5),
        (3.0, 1.0, 4.0, 4.0),
        (0.2, 1.0, 1.0, 0.1),
        (2.0, 1.0, 3.0, 1.0),  # a = 2b
        (2.0 + 1e-9, 1.0, 3.0, 1.0),
        (1.0 + 1e-7, 1.0, 3.0, 0.7),  # a = b
    ],
)
def test_against_quadrature_including_singular_lines(a, b, T, tau):
    _check(a, b, T, tau)


def test_dark_count_coincidence_against_monte_carlo():
    T, tau = 2.0, 0.3
    mc = oracles.coincidence_dc_dc(T, tau, n=400_000)
    assert coincidence_prob_dc_dc(WindowConfig(T, tau)) == pytest.approx(mc, abs=4 * math.sqrt(mc * (1 - mc) / 400_000))


def test_trapped_ion_visibility_reproduces_baseline():
    shape = shape_from_half_lives(3.01e-6, 6.79e-6)
    v = visibility(shape, WindowConfig(17.5e-6, 0.5e-6))
    assert abs(v - 0.89) <= 0.01


def test_half_life_round_trip():
    s = shape_from_half_lives(2.0, 5.0)
    assert s.half_lives == pytest.approx((2.0, 5.0))


def test_full_window_limits():
    s = PhotonShape(1.0, 1.0)
    w = WindowConfig(50.0, 50.0)
    assert detection_probability(s, 50.0) == pytest.approx(1.0, abs=1e-12)
    f = coincidence_factors(s, w)
    assert (f.p_ph_ph, f.p_ph_dc, f.p_dc_dc) == pytest.approx((1.0, 1.0, 1.0), abs=1e-12)
    # with an unbounded window distinguishability comes from the emission jitter only
    assert visibility(s, w) < 1


def test_efficiency_scales_detection_only():
    a, b, T, tau = 1.0, 2.0, 3.0, 0.4
    full, half = PhotonShape(a, b), PhotonShape(a, b, eta=0.5)
    w = WindowConfig(T, tau)
    assert detection_probability(half, T) == pytest.approx(0.5 * detection_probability(full, T))
    assert coincidence_prob_ph_ph(half, w) == pytest.approx(coincidence_prob_ph_ph(full, w))
    assert visibility(half, w) == pytest.approx(visibility(full, w))


def test_invalid_windows():
    with pytest.raises(ValueError):
        WindowConfig(1.0, 2.0)
    with pytest.raises(ValueError):
        WindowConfig(0.0, 0.0)
    with pytest.raises(ValueError):
        PhotonShape(-1.0, 1.0)


pos = st.floats(0.05, 20)


@given(pos, pos, st.floats(0.1, 10), st.floats(0.001, 1))
@settings(max_examples=80, deadline=None)
def test_probabilities_are_bounded_and_monotone_in_tau(a, b, T, frac):
    s = PhotonShape(a, b)
    w = WindowConfig(T, frac * T)
    wider = WindowConfig(T, min(T, 1.5 * frac * T))
    f = coincidence_factors(s, w)
    for v in (f.p_ph_ph, f.p_ph_dc, f.p_dc_dc, visibility(s, w), detection_probability(s, T)):
        assert -1e-12 <= v <= 1 + 1e-12
    assert coincidence_prob_ph_ph(s, wider) >= f.p_ph_ph - 1e-10
    assert coincidence_prob_dc_dc(wider) >= f.p_dc_dc


@given(st.floats(0.05, 20), st.floats(0.1, 10))
@settings(max_examples=40, deadline=None)
def test_visibility_decreases_with_window(a, T):
    s = PhotonShape(a, 1.0)
    narrow = visibility(s, WindowConfig(T, 0.05 * T))
    wide = visibility(s, WindowConfig(T, T))
    assert narrow >= wide - 1e-9
