import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cvmaser.errors import ContractError, SingularSectorError
from cvmaser.fock import (
    Atom,
    SpaceSignature,
    StateVector,
    make_coherent,
    make_vacuum,
    number_op,
    quadrature_ops,
    tensor,
    variance,
)
from cvmaser.gates import fourier, squeeze_one
from cvmaser.maser import (
    BeamConfig,
    JCParams,
    PumpConfig,
    ThreeLevelConfig,
    beam_statistics,
    dispersive_phase,
    dispersive_phase_error,
    fourier_via_dispersive,
    jc_evolve,
    jc_hamiltonian,
    measure_atom,
    measure_atom_branch,
    measurement_kraus,
    one_atom_probability,
    pump_kraus,
    pump_records,
    pump_step,
    rabi_probability,
    sample_arrivals,
    single_atom_variance_change,
    two_mode_effective_hamiltonian,
    two_mode_effective_raw,
    two_photon_unitary,
)


def _excited(n, cutoff):
    sp = SpaceSignature.atom_field(cutoff)
    psi = np.zeros(sp.dim, dtype=complex)
    psi[n] = 1.0
    return StateVector(sp, psi)


@pytest.mark.parametrize("n", [0, 1, 2, 5])
def test_rabi_oscillation(n):
    params = JCParams(2.0, 2.0, 0.7)
    cutoff = n + 3
    for t in np.linspace(0, 10, 17):
        out = jc_evolve(_excited(n, cutoff), params, t)
        p_g = abs(out.amplitudes[cutoff + n + 1]) ** 2
        assert p_g == pytest.approx(math.sin(0.7 * math.sqrt(n + 1) * t) ** 2, abs=1e-10)
        assert p_g == pytest.approx(rabi_probability(params, n, t), abs=1e-12)


def test_detuned_rabi_amplitude():
    params = JCParams(3.0, 1.0, 0.5)
    rmax = max(rabi_probability(params, 0, t) for t in np.linspace(0, 20, 2001))
    assert rmax == pytest.approx(0.5**2 / (0.5**2 + 1.0), rel=1e-3)


def test_jc_conserves_excitations():
    H = jc_hamiltonian(JCParams(1.0, 1.3, 0.4), 6).matrix
    sp = SpaceSignature.atom_field(6)
    n = number_op(sp, 1).matrix
    exc = n + np.kron(np.diag([1.0, 0.0]), np.eye(6))
    assert np.allclose(H @ exc, exc @ H)


def test_dispersive_phase_formula():
    U = dispersive_phase(100.0, 1.0, 3.0, 8)
    n = np.arange(8)
    assert np.allclose(np.diag(U.matrix), np.exp(-1j * (n + 1) * 3.0 / 100.0))


def test_dispersive_warns_when_not_dispersive():
    with pytest.warns(RuntimeWarning):
        dispersive_phase(2.0, 1.0, 1.0, 10)


def test_fourier_via_dispersive():
    t, U = fourier_via_dispersive(1.0, 10.0, 32)
    assert t == pytest.approx(15 * math.pi)
    assert np.abs(U.matrix - fourier(U.space, 0).matrix).max() <= 1e-10


def test_full_jc_matches_dispersive_phases():
    params = JCParams(55.0, 5.0, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        worst = max(dispersive_phase_error(params, n, t) for n in range(4) for t in np.linspace(0, 1, 11))
    assert worst <= 2e-3


def test_two_photon_unitary_is_squeezer():
    U = two_photon_unitary(0.5, 0.4, 30)
    S = squeeze_one(U.space, 0, 0.4)
    assert np.allclose(U.matrix, S.matrix, atol=1e-12)
    psi = U.matrix[:, 0]
    _, p = quadrature_ops(U.space, 0)
    assert variance(p, StateVector(U.space, psi)) < 0.25


@pytest.mark.parametrize("epsilon", [0.0, 0.05, 0.3])
def test_pump_kraus_trace_preserving(epsilon):
    ks = pump_kraus(PumpConfig(epsilon=epsilon), 12)
    total = sum(K.conj().T @ K for K in ks)
    assert np.allclose(total, np.eye(12), atol=1e-12)


def test_pump_dark_state_is_fixed_point():
    cfg = PumpConfig(epsilon=0.3)
    r = cfg.squeezing_parameter()
    assert math.tanh(r) == pytest.approx(0.7)
    sp = SpaceSignature.modes(90)
    dark = StateVector(sp, squeeze_one(sp, 0, r).matrix[:, 0])
    out = pump_step(dark.to_density(), cfg)
    lo = slice(0, 40)
    assert np.abs(out.matrix[lo, lo] - dark.to_density().matrix[lo, lo]).max() < 1e-12


def test_pump_converges_to_predicted_variance():
    cfg = PumpConfig(epsilon=0.3)
    rho0 = make_vacuum(SpaceSignature.modes(50)).to_density()
    _, rec = pump_records(rho0, cfg, 1500)
    assert rec[-1].var_p == pytest.approx(math.exp(-2 * cfg.squeezing_parameter()) / 4, abs=1e-3)


def test_pump_epsilon_zero_never_squeezes():
    rho0 = make_vacuum(SpaceSignature.modes(30)).to_density()
    _, rec = pump_records(rho0, PumpConfig(epsilon=0.0), 300)
    assert min(r.var_p for r in rec) >= 0.25 - 1e-6


def test_pump_small_epsilon_squeezes():
    rho0 = make_vacuum(SpaceSignature.modes(30)).to_density()
    _, rec = pump_records(rho0, PumpConfig(epsilon=0.05), 500)
    assert min(r.var_p for r in rec) < 0.25


@pytest.mark.parametrize("epsilon,t_int", [(0.05, 0.4), (0.3, 0.2), (0.5, 0.7)])
def test_single_atom_closed_form(epsilon, t_int):
    cfg = PumpConfig(epsilon=epsilon, t_int=t_int)
    rho0 = make_vacuum(SpaceSignature.modes(12)).to_density()
    _, p = quadrature_ops(rho0.space, 0)
    got = variance(p, pump_step(rho0, cfg)) - 0.25
    assert got == pytest.approx(single_atom_variance_change(cfg), abs=1e-12)


def test_pump_config_validation():
    with pytest.raises(ContractError):
        PumpConfig(epsilon=1.0)
    with pytest.raises(ContractError):
        PumpConfig(epsilon=-0.1)


GOOD = ThreeLevelConfig(1.0, 1.0, 1.0, 20.0, 30.0, 10.0)


def test_effective_hamiltonian_hermitian_and_conserving():
    H = two_mode_effective_raw(GOOD, (7, 7)).matrix
    assert np.abs(H - H.conj().T).max() <= 1e-12
    sp = SpaceSignature.modes(7, 7)
    D = number_op(sp, 0).matrix - number_op(sp, 1).matrix
    assert np.abs(H @ D - D @ H).max() <= 1e-10


def test_effective_hamiltonian_squeezes_joint_quadrature():
    from cvmaser.fock import apply, exp_hermitian

    H = two_mode_effective_hamiltonian(GOOD, (8, 8))
    psi = apply(exp_hermitian(H, 20.0), make_vacuum(H.space))
    x1, _ = quadrature_ops(H.space, 0)
    x2, _ = quadrature_ops(H.space, 1)
    assert min(variance(x1 + x2, psi), variance(x1 - x2, psi)) < 0.5


def test_effective_hamiltonian_singular_sector():
    with pytest.raises(SingularSectorError) as info:
        two_mode_effective_raw(ThreeLevelConfig(0.1, 0.1, 0.1, 2.0, 2.0, 2.0), (5, 5))
    assert info.value.sector == (1, 1)


def test_effective_hamiltonian_warns_outside_regime():
    with pytest.warns(RuntimeWarning):
        two_mode_effective_raw(ThreeLevelConfig(1.0, 1.0, 1.0, 3.0, 5.0, 2.0), (4, 4))


def test_measurement_kraus_complete():
    ks = measurement_kraus(JCParams(1.0, 1.0, 1.0), 0.7, [0.6, 0.8], 0.3, 10)
    total = sum(K.conj().T @ K for K in ks.values())
    assert np.allclose(total, np.eye(10), atol=1e-12)


def test_measure_atom_branches_sum_to_one():
    field = make_coherent(SpaceSignature.modes(25), 0, 1.5, normalize=True)
    atom = StateVector(SpaceSignature((Atom(2),)), np.array([1, 0], dtype=complex))
    joint = jc_evolve(tensor(atom, field), JCParams(1.0, 1.0, 1.0), 1.0)
    probs = [measure_atom_branch(joint, 0.0, o)[1] for o in "eg"]
    assert sum(probs) == pytest.approx(1.0)
    o1, f1, p1 = measure_atom(joint, 0.0, 42)
    o2, f2, p2 = measure_atom(joint, 0.0, 42)
    assert o1 == o2 and p1 == p2
    assert np.allclose(f1.amplitudes, f2.amplitudes)


def test_one_atom_probability():
    assert one_atom_probability(BeamConfig(10.0, 0.03, 300.0)) == pytest.approx(0.998, abs=5e-4)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=5, deadline=None)
def test_beam_gap_statistics(seed):
    b = BeamConfig(10.0, 0.03, 300.0)
    times = sample_arrivals(b, 2e3, seed)
    assert np.all(np.diff(times) > 0)
    st_ = beam_statistics(b, times, 2e3)
    assert abs(st_.close_gap_fraction - st_.close_gap_expected) <= 5 * st_.close_gap_sigma


def test_beam_config_validation():
    with pytest.raises(ContractError):
        BeamConfig(0.0, 0.03, 300.0)
