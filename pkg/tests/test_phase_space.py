import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cvmaser.errors import ContractError
from cvmaser.fock import Atom, SpaceSignature, StateVector, apply, make_coherent, make_vacuum, tensor
from cvmaser.gates import displace_x, fourier, squeeze_one
from cvmaser.maser import JCParams, jc_evolve, measure_atom_branch
from cvmaser.phase_space import (
    GridSpec,
    QGrid,
    contour_aspect_ratio,
    default_grid,
    gaussianity_witness,
    homodyne_sample,
    husimi_q,
    q_at,
    q_summary,
)

SP = SpaceSignature.modes(40)


def test_vacuum_q_closed_form():
    g = husimi_q(make_vacuum(SP), 0, GridSpec.square(3.0, 31))
    X, P = np.meshgrid(g.xs, g.ps, indexing="ij")
    assert np.allclose(g.values, np.exp(-(X**2) - P**2) / math.pi, atol=1e-14)


def test_vacuum_q_moments():
    s = q_summary(husimi_q(make_vacuum(SP), 0, GridSpec.square(5.0, 101)))
    assert s.total_mass == pytest.approx(1.0, abs=1e-6)
    assert np.allclose(s.second_moments, np.diag([0.5, 0.5]), atol=1e-6)


@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
@settings(max_examples=20, deadline=None)
def test_coherent_q_overlap_formula(ax, ap):
    psi = make_coherent(SP, 0, complex(ax, ap))
    beta = complex(0.3, -0.2)
    assert q_at(psi, beta) == pytest.approx(math.exp(-abs(beta - complex(ax, ap)) ** 2) / math.pi, abs=1e-12)


def test_displacement_moves_peak():
    psi = apply(displace_x(SP, 0, 1.0), make_vacuum(SP))
    s = q_summary(husimi_q(psi, 0, GridSpec.square(4.0, 81)))
    assert s.argmax == pytest.approx((1.0, 0.0), abs=1e-9)


def test_fourier_rotates_peak():
    psi = apply(fourier(SP, 0), apply(displace_x(SP, 0, 1.0), make_vacuum(SP)))
    s = q_summary(husimi_q(psi, 0, GridSpec.square(4.0, 81)))
    assert s.argmax == pytest.approx((0.0, 1.0), abs=1e-9)


@pytest.mark.parametrize("r", [0.3, 0.5, 0.8])
def test_squeezed_q_covariance_and_contour(r):
    psi = apply(squeeze_one(SP, 0, r), make_vacuum(SP))
    g = husimi_q(psi, 0, GridSpec.square(6.0, 161))
    cov = q_summary(g).second_moments
    # Q smooths each variance by the vacuum 1/4
    assert cov[0, 0] == pytest.approx(math.exp(2 * r) / 4 + 0.25, rel=2e-3)
    assert cov[1, 1] == pytest.approx(math.exp(-2 * r) / 4 + 0.25, rel=2e-3)
    assert contour_aspect_ratio(g) == pytest.approx(math.exp(r), rel=0.03)


def test_gaussianity_witness():
    gauss = apply(squeeze_one(SP, 0, 0.4), make_vacuum(SP))
    assert gaussianity_witness(husimi_q(gauss, 0, GridSpec.square(6.0, 121))) < 1e-6
    fsp = SpaceSignature.modes(30)
    atom = StateVector(SpaceSignature((Atom(2),)), np.array([1, 0], dtype=complex))
    joint = jc_evolve(tensor(atom, make_coherent(fsp, 0, 1.5, normalize=True)), JCParams(1.0, 1.0, 1.0), 1.0)
    field, _ = measure_atom_branch(joint, 0.0, "g")
    assert gaussianity_witness(husimi_q(field, 0, GridSpec.square(7.0, 121))) > 0.1


def test_default_grid_is_centered():
    psi = make_coherent(SP, 0, 1.0 + 2.0j)
    spec = default_grid(psi)
    assert (spec.x_range[0] + spec.x_range[1]) / 2 == pytest.approx(1.0)
    assert (spec.p_range[0] + spec.p_range[1]) / 2 == pytest.approx(2.0)


def test_homodyne_vacuum_variance_and_seed():
    a = homodyne_sample(make_vacuum(SP), 0, 0.0, 20000, 3)
    b = homodyne_sample(make_vacuum(SP), 0, 0.0, 20000, 3)
    assert np.array_equal(a, b)
    assert np.var(a) == pytest.approx(0.25, abs=0.01)


def test_homodyne_sees_squeezing():
    psi = apply(squeeze_one(SP, 0, 0.5), make_vacuum(SP))
    xs = homodyne_sample(psi, 0, math.pi / 2, 20000, 1)
    assert np.var(xs) == pytest.approx(math.exp(-1) / 4, rel=0.05)


def test_homodyne_rejects_bad_count():
    with pytest.raises(ContractError):
        homodyne_sample(make_vacuum(SP), 0, 0.0, 0, 1)


def test_grid_validation():
    with pytest.raises(ContractError):
        GridSpec((1.0, 0.0, 10), (0.0, 1.0, 10))
    with pytest.raises(ContractError):
        GridSpec((0.0, 1.0, 1), (0.0, 1.0, 10))
    with pytest.raises(ContractError):
        QGrid((0.0, 1.0, 2), (0.0, 1.0, 2), np.array([[0.0, -1.0], [0.0, 0.0]]))


def test_csv_header(tmp_path):
    g = husimi_q(make_vacuum(SP), 0, GridSpec.square(1.0, 3))
    path = tmp_path / "q.csv"
    g.to_csv(path, ["cutoffs: [40]"])
    lines = path.read_text().splitlines()
    assert lines[0] == "# commutator_xp: i/2"
    assert "# cutoffs: [40]" in lines
    header = lines.index("x,p,q")
    assert len(lines) - header - 1 == 9
