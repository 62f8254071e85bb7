import math
from dataclasses import replace

import numpy as np
import pytest
from conftest import perfect, random_density, seeds
from hypothesis import given, settings
from hypothesis import strategies as st

from repeaterforge import hardware as hw
from repeaterforge.hardware import (
    BASELINES,
    BSM_CIRCUITS,
    CC_BSM,
    CC_MOVE,
    HardwareParams,
    PlatformKind,
    QubitRegister,
    apply_induced_dephasing,
    bell_state_measurement,
    circuit_duration,
    decohere_idle,
    effective_povm,
    emit_entangled_photon_state,
    frame_table,
    induced_dephasing_probability,
    load_baseline,
    map_to_abstract,
    move_duration,
    move_to_memory,
    run_circuit,
    swap_quality,
)
from repeaterforge.qstate import BELL_INDICES, DensityMatrix, bell_state, fidelity, partial_trace, pauli_correct

PLATFORMS = list(PlatformKind)
PLATFORM_BASELINE = {
    PlatformKind.COLOR_CENTER: "cc-baseline",
    PlatformKind.TRAPPED_ION: "ti-baseline",
    PlatformKind.ABSTRACT: "abstract-cc",
}


@pytest.mark.parametrize("name", BASELINES)
def test_baselines_load(name):
    params = load_baseline(name)
    assert params.to_dict()["values"] == dict(params.values)


def test_parameter_validation():
    cc = load_baseline("cc-baseline")
    with pytest.raises(ValueError, match="missing"):
        HardwareParams("abstract", {"p_det": 0.1})
    with pytest.raises(ValueError, match="unknown"):
        cc.with_values(bogus=1.0)
    with pytest.raises(ValueError, match="out of range"):
        cc.with_values(p_det=1.5)
    with pytest.raises(ValueError, match="out of range"):
        cc.with_values(carbon_T2=-1.0)
    with pytest.raises(ValueError, match="out of range"):
        cc.with_values(emission_fidelity=0.1)
    with pytest.raises(KeyError):
        load_baseline("nope")
    ab = load_baseline("abstract-cc").with_values(p_ph_ph=0.9, p_ph_dc=0.5, p_dc_dc=0.1)
    assert ab["p_ph_ph"] == 0.9


def _brute_force_swap(left, right, params, first_left):
    """Run the BSM circuit on the full four-qubit register (A, r1, r2, B),
    apply readout flips to the records and trace out the repeater."""
    steps = BSM_CIRCUITS[params.platform]
    qmap = {0: 1, 1: 2} if first_left else {0: 2, 1: 1}
    steps4 = [replace(s, qubits=tuple(qmap[q] for q in s.qubits)) for s in steps]
    big = np.kron(left, right)
    # four qubits exceed the validated state size, so run on raw matrices
    branches = run_circuit(big, 4, steps4, params, noisy=params.platform is not PlatformKind.ABSTRACT)
    flips = hw._readout_matrix(steps, params, params.platform is not PlatformKind.ABSTRACT)
    out = {}
    for raw, rho in branches.items():
        ab = partial_trace(rho, 4, [0, 3])
        for rep in branches:
            w = math.prod(flips[k][rep[k], raw[k]] for k in range(len(raw)))
            out[rep] = out.get(rep, 0) + w * ab
    return out


@pytest.mark.parametrize("platform", PLATFORMS)
@pytest.mark.parametrize("first_left", [True, False])
def test_effective_povm_matches_full_register_simulation(platform, first_left, rng):
    params = load_baseline(PLATFORM_BASELINE[platform])
    left, right = random_density(rng, 2).matrix, random_density(rng, 2).matrix
    brute = _brute_force_swap(left, right, params, first_left)
    povm = effective_povm(platform, params, noisy=platform is not PlatformKind.ABSTRACT)
    assert set(povm) == set(brute)
    for bits, e in povm.items():
        assert np.allclose(hw._project(left, right, e, first_left), brute[bits], atol=1e-13)


@pytest.mark.parametrize("platform", PLATFORMS)
def test_povm_is_complete_and_positive(platform):
    params = load_baseline(PLATFORM_BASELINE[platform])
    povm = effective_povm(platform, params)
    assert np.allclose(sum(povm.values()), np.eye(4), atol=1e-12)
    for e in povm.values():
        assert np.linalg.eigvalsh(e).min() > -1e-12


@pytest.mark.parametrize("platform", PLATFORMS)
@pytest.mark.parametrize("first_left", [True, False])
def test_noiseless_swap_recovers_phi_plus_after_correction(platform, first_left):
    params = perfect(PLATFORM_BASELINE[platform])
    rng = np.random.default_rng(3)
    table = frame_table(platform, first_left)
    assert len(table) == 16 * 4
    for lf in BELL_INDICES:
        for rf in BELL_INDICES:
            res = bell_state_measurement(bell_state(lf), lf, bell_state(rf), rf, params, rng, first_left)
            assert fidelity(pauli_correct(res.state, res.frame), bell_state()) == pytest.approx(1, abs=1e-12)


def test_abstract_swap_applies_swap_quality():
    sq = 0.9
    params = perfect("abstract-cc").with_values(swap_quality=sq)
    phi = BELL_INDICES[0]
    res = bell_state_measurement(bell_state(), phi, bell_state(), phi, params, np.random.default_rng(0))
    f = fidelity(pauli_correct(res.state, res.frame), bell_state())
    assert f == pytest.approx(1 - 3 * (1 - sq) / 4, abs=1e-12)
    assert res.duration == params["swap_duration"]


@pytest.mark.parametrize("name", ["cc-baseline", "ti-baseline"])
def test_swap_outcomes_are_uniform_on_bell_inputs(name):
    params = load_baseline(name)
    rng = np.random.default_rng(11)
    counts = {}
    for _ in range(4000):
        r = bell_state_measurement(bell_state(), BELL_INDICES[0], bell_state(), BELL_INDICES[0], params, rng)
        counts[r.bits] = counts.get(r.bits, 0) + 1
    assert len(counts) == 4
    assert all(abs(c / 4000 - 0.25) < 0.035 for c in counts.values())


@pytest.mark.parametrize("qubit", [0, 1])
def test_noiseless_move_preserves_state(qubit, rng):
    params = perfect("cc-baseline")
    rho = random_density(rng, 2)
    out, d = move_to_memory(rho, qubit, params)
    assert out.allclose(rho, 1e-12)
    assert d == pytest.approx(move_duration(params))
    assert d == pytest.approx(circuit_duration(CC_MOVE, params))


def test_noisy_move_lowers_fidelity():
    out, _ = move_to_memory(bell_state(), 1, load_baseline("cc-baseline"))
    assert 0.5 < fidelity(out, bell_state()) < 1


def test_move_is_color_center_only():
    with pytest.raises(ValueError):
        move_to_memory(bell_state(), 0, load_baseline("abstract-cc"))
    with pytest.raises(ValueError):
        apply_induced_dephasing(bell_state(), 0, 10, 0.5, load_baseline("ti-baseline"))


def test_emission_fidelity():
    params = load_baseline("abstract-cc").with_values(emission_fidelity=0.9)
    state, d = emit_entangled_photon_state(params)
    assert fidelity(state, bell_state()) == pytest.approx(0.9, abs=1e-12)
    assert d == params["emission_duration"]


@given(st.integers(0, 10_000), st.floats(0, 1), st.floats(1, 5000))
@settings(max_examples=80, deadline=None)
def test_induced_dephasing_probability_bounds(k, alpha, n1e):
    p = induced_dephasing_probability(k, alpha, n1e)
    assert -1e-15 <= p <= 0.5 + 1e-15
    assert induced_dephasing_probability(k + 1, alpha, n1e) >= p - 1e-15


def test_induced_dephasing_matches_repeated_single_attempts():
    params = load_baseline("cc-baseline")
    k, alpha = 37, 0.3
    plus = DensityMatrix.from_ket([1, 1, 0, 0])
    once = apply_induced_dephasing(plus, 1, 1, alpha, params)
    step = plus
    for _ in range(k):
        step = apply_induced_dephasing(step, 1, 1, alpha, params)
    assert apply_induced_dephasing(plus, 1, k, alpha, params).allclose(step, 1e-12)
    assert not once.allclose(plus)


def test_idle_noise_by_platform():
    t = 0.01
    cc = load_baseline("cc-baseline")
    electron = decohere_idle(bell_state(), 0, t, cc, role="communication")
    carbon = decohere_idle(bell_state(), 0, t, cc, role="memory")
    assert fidelity(electron, bell_state()) < fidelity(carbon, bell_state())
    ti = load_baseline("ti-baseline")
    assert decohere_idle(bell_state(), 0, t, ti, trap_rate=0.0).allclose(bell_state())
    assert not decohere_idle(bell_state(), 0, t, ti, trap_rate=1.0).allclose(bell_state())
    ab = load_baseline("abstract-cc")
    out = decohere_idle(bell_state(), 1, t, ab)
    # amplitude damping, then the extra pure dephasing on top of it
    decay = math.exp(-t / ab["T1"])
    expected = 0.25 * (1 + decay) + 0.5 * decay * math.exp(-t / ab["T2"])
    assert fidelity(out, bell_state()) == pytest.approx(expected, abs=1e-12)
    with pytest.raises(ValueError):
        decohere_idle(bell_state(), 0, -1.0, ab)


@pytest.mark.parametrize("name", ["cc-baseline", "ti-baseline"])
def test_abstract_mapping(name):
    params = load_baseline(name)
    ab = map_to_abstract(params)
    sq, d = swap_quality(params)
    assert ab.platform is PlatformKind.ABSTRACT
    assert ab["swap_quality"] == sq and ab["swap_duration"] == d
    assert 0 < sq < 1
    with pytest.raises(ValueError):
        map_to_abstract(ab)


def test_shipped_abstract_cc_is_the_mapped_color_center():
    mapped = map_to_abstract(load_baseline("cc-baseline"))
    shipped = load_baseline("abstract-cc")
    for k in shipped.values:
        assert shipped[k] == pytest.approx(mapped[k], rel=1e-3), k


def test_register_bookkeeping():
    reg = QubitRegister(PlatformKind.COLOR_CENTER)
    slot = reg.free_slot()
    reg.occupy(slot, (0, 1), 0.0)
    with pytest.raises(RuntimeError):
        reg.free_slot()
    reg.move("communication", "memory", 1.0)
    assert reg.slots["memory"] == (0, 1) and reg.free_slot() == "communication"
    reg.release("memory")
    assert reg.is_empty()
    ion = QubitRegister(PlatformKind.TRAPPED_ION)
    ion.occupy(ion.free_slot(), (0, 0), 0.0)
    ion.occupy(ion.free_slot(), (1, 0), 0.0)
    with pytest.raises(RuntimeError):
        ion.free_slot()
    ion.reset_trap(np.random.default_rng(0))
    assert ion.trap_rate != 0.0
