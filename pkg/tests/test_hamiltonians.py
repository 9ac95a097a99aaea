import numpy as np
import pytest

from floquet_bands.bands import MHZ
from floquet_bands.hamiltonians import (
    AmpModTLS,
    BreakingTerm,
    EnsembleSpec,
    FourierHamiltonian,
    PhaseModTLS,
    ThreeLevelFirstFrame,
    ThreeLevelRotating,
    build,
    build_three_level_second_frame,
    ensemble_members,
    sample_hamiltonian,
    second_frame_unitary,
    set_parameter,
)
from floquet_bands.operators import (
    NAMED_STATES,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    ProbeOperator,
    is_hermitian,
    named_state,
)

W = 3 * MHZ


def test_named_states_are_normalised():
    for name, v in NAMED_STATES.items():
        assert np.isclose(np.linalg.norm(v), 1.0), name


def test_three_level_probe_eigenbasis():
    v = ProbeOperator.named("three_level_V")
    assert np.allclose(sorted(v.eigenvalues), [-1, -1, 2])
    assert v.norm == pytest.approx(4.0)
    for key, lam in (("e1", 2), ("e2", -1), ("e3", -1)):
        e = named_state(key)
        assert np.allclose(v.matrix @ e, lam * e)


def test_probe_rejects_non_hermitian():
    with pytest.raises(ValueError):
        ProbeOperator(np.array([[0, 1], [0, 0]], dtype=complex))


def test_hermiticity_tolerance_is_relative():
    big = 1e8 * SIGMA_X + 1e-6 * np.array([[0, 1], [0, 0]])
    assert is_hermitian(big)
    assert not is_hermitian(SIGMA_X + 1e-6 * np.array([[0, 1], [0, 0]]))


def test_phase_modulated_matches_direct_formula(rng):
    spec = PhaseModTLS(1.3 * W, 0.7 * W, W, phi=0.4, delta=0.2 * W)
    h = build(spec)
    for t in rng.uniform(0, 3 * h.period, 5):
        direct = (
            spec.delta / 2 * SIGMA_Z
            + spec.omega_rabi / 2 * SIGMA_X
            + spec.epsilon_m * np.sin(W * t + spec.phi) * SIGMA_Z
        )
        assert np.allclose(h(t), direct, atol=1e-6 * W)


def test_breaking_term_follows_modulation_strength():
    spec = PhaseModTLS(W, 1.5 * W, W, breaking_terms=(BreakingTerm(2, 0.2, "z", relative=True),))
    h = build(spec)
    t = 0.123 * h.period
    direct = W / 2 * SIGMA_X + spec.epsilon_m * (np.sin(W * t) + 0.2 * np.sin(2 * W * t)) * SIGMA_Z
    assert np.allclose(h(t), direct, atol=1e-6 * W)
    assert h.max_harmonic == 2


def test_amplitude_modulated_matches_direct_formula():
    spec = AmpModTLS(W, 0.9 * W, W, phi=1.1, delta=0.3 * W)
    h = build(spec)
    t = 0.37 * h.period
    direct = -spec.delta / 2 * SIGMA_Z + W / 2 * SIGMA_X + spec.epsilon_m * np.cos(W * t + 1.1) * SIGMA_Y
    assert np.allclose(h(t), direct, atol=1e-6 * W)


def test_static_limit_has_only_zeroth_harmonic():
    h = build(PhaseModTLS(W, 0.0, W))
    assert h.max_harmonic == 0
    assert np.allclose(h.components[0], W / 2 * SIGMA_X)


def test_negative_harmonics_are_filled_in():
    h = FourierHamiltonian(2, W, {0: SIGMA_Z, 1: 0.5j * SIGMA_X})
    assert np.allclose(h.components[-1], h.components[1].conj().T)
    assert is_hermitian(h(0.3 * h.period))


def test_non_hermitian_drive_rejected():
    with pytest.raises(ValueError):
        FourierHamiltonian(2, W, {0: np.array([[0, 1], [0, 0]], dtype=complex)})


def test_inconsistent_negative_harmonic_rejected():
    with pytest.raises(ValueError):
        FourierHamiltonian(2, W, {1: SIGMA_X, -1: SIGMA_Z})


def test_sampling_is_vectorised():
    h = build(PhaseModTLS(W, W, W, 0.3))
    ts = np.linspace(0, h.period, 7)
    stacked = sample_hamiltonian(h, ts)
    assert stacked.shape == (7, 2, 2)
    assert np.allclose(stacked[3], h(ts[3]))


def test_three_level_rotating_is_cyclic():
    h = build(ThreeLevelRotating(0.8 * W, W))
    from floquet_bands.operators import ROTATION_3

    for t in np.linspace(0, h.period, 5):
        moved = ROTATION_3 @ h(t + h.period / 3) @ ROTATION_3.conj().T
        assert np.allclose(moved, h(t), atol=1e-9 * W)


def test_second_frame_low_harmonics_reproduce_rotating_model():
    w = 0.3 * MHZ
    spec = ThreeLevelFirstFrame(10 * w, 1.2 * w, w)
    exact = build_three_level_second_frame(spec)
    ideal = build(ThreeLevelRotating(spec.coupling, w))
    for n in (-1, 0, 1):
        assert np.allclose(exact.components[n], ideal.components[n], atol=1e-12 * spec.delta)


def test_second_frame_unitary_is_periodic_and_unitary():
    w = 0.3 * MHZ
    spec = ThreeLevelFirstFrame(7 * w, 0.5 * w, w)
    period = 2 * np.pi / w
    for t in (0.0, 0.3 * period):
        u = second_frame_unitary(spec, t)
        assert np.allclose(u @ u.conj().T, np.eye(3))
        assert np.allclose(second_frame_unitary(spec, t + period), u)


def test_first_frame_validation():
    w = 0.3 * MHZ
    with pytest.raises(ValueError, match="integer multiple"):
        ThreeLevelFirstFrame(10.5 * w, w, w)
    with pytest.raises(ValueError, match="driving condition"):
        ThreeLevelFirstFrame(10 * w, w, w, omega_1=15 * w)


@pytest.mark.parametrize("bad", [dict(omega_rabi=0.0), dict(omega_m=-1.0), dict(epsilon_m=-0.1)])
def test_two_level_preconditions(bad):
    args = dict(omega_rabi=W, epsilon_m=0.5 * W, omega_m=W) | bad
    with pytest.raises(ValueError):
        PhaseModTLS(**args)


def test_modulation_index_sets_half_ratio():
    spec = set_parameter(PhaseModTLS(W, 0.0, W), "modulation_index", 2.4048)
    assert spec.epsilon_m == pytest.approx(0.5 * 2.4048 * W)
    spec3 = set_parameter(ThreeLevelRotating(0.0, W), "coupling_index", 6.0)
    assert spec3.coupling == pytest.approx(3 * W)
    with pytest.raises(ValueError):
        set_parameter(ThreeLevelRotating(0.0, W), "modulation_index", 1.0)
    with pytest.raises(ValueError):
        set_parameter(PhaseModTLS(W, 0.0, W), "no_such_field", 1.0)


def test_ensemble_weights_symmetric_and_normalised():
    e = EnsembleSpec(PhaseModTLS(W, W, W), 0.15 * MHZ, 51, 2.0)
    members = ensemble_members(e)
    w = np.array([m[1] for m in members])
    d = np.array([m[0].delta for m in members])
    assert len(members) == 51
    assert w.sum() == pytest.approx(1.0)
    assert np.array_equal(w, w[::-1])
    assert d[0] == pytest.approx(-0.3 * MHZ) and d[-1] == pytest.approx(0.3 * MHZ)


def test_ensemble_rejects_even_count_and_three_level():
    with pytest.raises(ValueError):
        EnsembleSpec(PhaseModTLS(W, W, W), 0.1 * MHZ, 50)
    with pytest.raises(ValueError):
        EnsembleSpec(ThreeLevelRotating(W, W), 0.1 * MHZ, 51)
