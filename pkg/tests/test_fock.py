import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from cvmaser.errors import ContractError, DimensionError, SpaceMismatchError
from cvmaser.fock import (
    CONVENTION,
    DensityOperator,
    OperatorMatrix,
    SpaceSignature,
    StateVector,
    apply,
    atom_ops,
    coherent_amplitudes,
    coherent_leakage,
    default_cutoff,
    embed,
    exp_hermitian,
    expectation,
    fidelity,
    ladder_ops,
    leakage_report,
    make_coherent,
    make_fock,
    make_vacuum,
    number_op,
    partial_trace,
    quadrature_ops,
    tensor,
    variance,
)


def test_convention_block():
    assert CONVENTION["commutator_xp"] == "i/2"
    assert CONVENTION["hbar"] == 1


def test_space_dims_and_indices():
    sp = SpaceSignature.modes(3, 4)
    assert sp.dims == (3, 4)
    assert sp.dim == 12
    assert sp.mode_indices == (0, 1) or list(sp.mode_indices) == [0, 1]
    af = SpaceSignature.atom_field(5)
    assert af.dims == (2, 5)


def test_vacuum_quadrature_variance():
    sp = SpaceSignature.modes(10)
    x, p = quadrature_ops(sp, 0)
    vac = make_vacuum(sp)
    assert variance(x, vac) == pytest.approx(0.25, abs=1e-14)
    assert variance(p, vac) == pytest.approx(0.25, abs=1e-14)


def test_canonical_commutator_on_low_block():
    sp = SpaceSignature.modes(12)
    x, p = quadrature_ops(sp, 0)
    c = x.matrix @ p.matrix - p.matrix @ x.matrix
    lo = slice(0, 11)  # the last level carries the truncation artifact
    assert np.allclose(c[lo, lo], 0.5j * np.eye(11), atol=1e-14)


def test_ladder_adjoint_and_number():
    sp = SpaceSignature.modes(6)
    a, ad = ladder_ops(sp, 0)
    assert np.allclose(ad.matrix, a.matrix.conj().T)
    assert np.allclose(ad.matrix @ a.matrix, number_op(sp, 0).matrix)


@pytest.mark.parametrize("n", [0, 1, 4])
def test_fock_number_expectation(n):
    sp = SpaceSignature.modes(6)
    assert expectation(number_op(sp, 0), make_fock(sp, 0, n)).real == pytest.approx(n)


def test_fock_out_of_range():
    with pytest.raises(DimensionError):
        make_fock(SpaceSignature.modes(4), 0, 4)


def test_state_norm_contract():
    sp = SpaceSignature.modes(3)
    with pytest.raises(ContractError):
        StateVector(sp, np.array([1.0, 1.0, 0.0]))
    with pytest.raises(DimensionError):
        StateVector(sp, np.array([1.0, 0.0]))


def test_density_contract():
    sp = SpaceSignature.modes(2)
    with pytest.raises(ContractError):
        DensityOperator(sp, np.array([[1.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ContractError):
        DensityOperator(sp, np.diag([1.5, -0.5]))


def test_coherent_amplitudes_closed_form():
    alpha = 0.7 - 0.4j
    c = coherent_amplitudes(alpha, 8)
    want = [math.exp(-abs(alpha) ** 2 / 2) * alpha**n / math.sqrt(math.factorial(n)) for n in range(8)]
    assert np.allclose(c, want, atol=1e-15)


@given(st.floats(0.0, 3.0), st.integers(5, 40))
@settings(max_examples=40, deadline=None)
def test_coherent_leakage_is_poisson_tail(amp, cutoff):
    c = coherent_amplitudes(amp, cutoff)
    kept = float(np.sum(np.abs(c) ** 2))
    assert coherent_leakage(amp, cutoff) == pytest.approx(1 - kept, abs=1e-12)


def test_make_coherent_records_leakage():
    sp = SpaceSignature.modes(6)
    psi = make_coherent(sp, 0, 2.0, normalize=True)
    assert psi.is_normalized
    assert psi.leakage == pytest.approx(coherent_leakage(2.0, 6))


def test_coherent_mean_quadratures():
    sp = SpaceSignature.modes(40)
    psi = make_coherent(sp, 0, 1.5 + 0.5j)
    x, p = quadrature_ops(sp, 0)
    assert expectation(x, psi).real == pytest.approx(1.5, abs=1e-10)
    assert expectation(p, psi).real == pytest.approx(0.5, abs=1e-10)


@pytest.mark.parametrize("alpha,expected", [(0, 16), (2, 24), (4, 48)])
def test_default_cutoff_rule(alpha, expected):
    assert default_cutoff(alpha) == expected


@given(st.integers(2, 8), st.integers(0, 2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_exp_hermitian_matches_scipy(dim, seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    H = OperatorMatrix(SpaceSignature.modes(dim), (m + m.conj().T) / 2)
    U = exp_hermitian(H, 0.7).matrix
    assert np.allclose(U, scipy.linalg.expm(-0.7j * H.matrix), atol=1e-10)
    assert np.allclose(U @ U.conj().T, np.eye(dim), atol=1e-12)


def test_exp_hermitian_rejects_non_hermitian():
    with pytest.raises(ContractError):
        exp_hermitian(OperatorMatrix(SpaceSignature.modes(2), np.array([[0, 1], [0, 0]])), 1.0)


def test_embed_and_partial_trace():
    sp = SpaceSignature.modes(3, 4)
    psi = tensor(make_fock(SpaceSignature.modes(3), 0, 2), make_fock(SpaceSignature.modes(4), 0, 1))
    assert psi.space == sp
    rho1 = partial_trace(psi, [1])
    assert np.allclose(np.diag(rho1.matrix).real, [0, 1, 0, 0])
    n0 = OperatorMatrix(sp, embed(sp, 0, np.diag([0.0, 1.0, 2.0])))
    assert expectation(n0, psi).real == pytest.approx(2.0)


def test_embed_shape_check():
    with pytest.raises(DimensionError):
        embed(SpaceSignature.modes(3, 4), 0, np.eye(4))


def test_space_mismatch():
    with pytest.raises(SpaceMismatchError):
        expectation(number_op(SpaceSignature.modes(3), 0), make_vacuum(SpaceSignature.modes(4)))


def test_atom_ops_pauli_algebra():
    sp = SpaceSignature.atom_field(2)
    s3, sp_, sm = atom_ops(sp, 0)
    comm = sp_.matrix @ sm.matrix - sm.matrix @ sp_.matrix
    assert np.allclose(comm, s3.matrix)


def test_fidelity_pure_and_mixed():
    sp = SpaceSignature.modes(4)
    a = make_fock(sp, 0, 1)
    b = StateVector(sp, np.array([0, 1, 1, 0]) / math.sqrt(2))
    assert fidelity(a, b) == pytest.approx(0.5)
    assert fidelity(a.to_density(), b.to_density()) == pytest.approx(0.5)
    assert fidelity(a, b.to_density()) == pytest.approx(0.5)


def test_edge_population_sees_even_parity_states():
    sp = SpaceSignature.modes(5)
    psi = StateVector(sp, np.array([0, 0, 0, 1.0, 0]))
    assert psi.top_level_population(0) == 0
    assert psi.edge_population(0) == pytest.approx(1.0)
    assert leakage_report(psi)["edge_mode0"] == pytest.approx(1.0)


def test_apply_preserves_norm():
    sp = SpaceSignature.modes(8)
    x, _ = quadrature_ops(sp, 0)
    out = apply(exp_hermitian(x, 0.3), make_fock(sp, 0, 2))
    assert out.norm2 == pytest.approx(1.0)
