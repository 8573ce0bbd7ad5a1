"""Micromaser physics: Jaynes-Cummings dynamics, dispersive phase gates,
two-photon pumping, the three-level effective two-mode interaction, atom
measurement and atomic beam statistics.

Atom levels are ordered |e> = 0, |g> = 1; the atom is factor 0 of every
joint space and the field modes follow.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ContractError, DimensionError, SingularSectorError, SpaceMismatchError
from .fock import (
    Atom,
    DensityOperator,
    Mode,
    OperatorMatrix,
    SpaceSignature,
    StateVector,
    atom_ops,
    embed,
    exp_hermitian,
    ladder_ops,
    lowering_matrix,
    number_op,
    quadrature_ops,
    variance,
)
from .gates import squeeze_generator

TWO_PI = 2 * math.pi


def _phase_diag(angles):
    a = np.fmod(angles, TWO_PI)
    return np.cos(a) + 1j * np.sin(a)


# ---------------------------------------------------------------------------
# Jaynes-Cummings


@dataclass(frozen=True)
class JCParams:
    omega_a: float
    omega: float
    g: float

    def __post_init__(self):
        if self.g < 0:
            raise ContractError("coupling g must be nonnegative")


def jc_hamiltonian(p, field_cutoff):
    """H = (w_a/2) s3 + w a^dag a - i g (s+ a - s- a^dag) on Atom(2)⊗Mode."""
    if field_cutoff < 2:
        raise DimensionError("field cutoff must be at least 2")
    space = SpaceSignature.atom_field(field_cutoff)
    s3, sp, sm = atom_ops(space, 0)
    a, ad = ladder_ops(space, 1)
    n = number_op(space, 1)
    H = (
        (p.omega_a / 2) * s3.matrix
        + p.omega * n.matrix
        - 1j * p.g * (sp.matrix @ a.matrix - sm.matrix @ ad.matrix)
    )
    return OperatorMatrix(space, (H + H.conj().T) / 2, {"hermitian"})


def _require_atom_field(space):
    f = space.factors
    if len(f) != 2 or f[0] != Atom(2) or not isinstance(f[1], Mode):
        raise SpaceMismatchError(f"expected Atom(2)⊗Mode, got {space}")
    return f[1].cutoff


def jc_evolve(state, p, t):
    cutoff = _require_atom_field(state.space)
    U = exp_hermitian(jc_hamiltonian(p, cutoff), t)
    if isinstance(state, DensityOperator):
        m = U.matrix @ state.matrix @ U.matrix.conj().T
        return DensityOperator(state.space, (m + m.conj().T) / 2)
    return StateVector(state.space, U.matrix @ state.amplitudes, state.leakage)


def rabi_probability(p, n, t):
    """Probability of |g, n+1> starting from |e, n>, from the 2x2 block (any detuning)."""
    delta = p.omega_a - p.omega
    coupling = p.g * math.sqrt(n + 1)
    omega_r = math.sqrt(delta * delta / 4 + coupling * coupling)
    if omega_r == 0:
        return 0.0
    return (coupling / omega_r) ** 2 * math.sin(omega_r * t) ** 2


# ---------------------------------------------------------------------------
# dispersive regime


def dispersive_phase(Delta, g, t, field_cutoff):
    """Field unitary |n> -> exp(-i g^2 (n+1) t / Delta)|n> (atom in |e>, then discarded)."""
    if Delta == 0:
        raise ContractError("detuning must be nonzero")
    if abs(Delta) < 10 * g * math.sqrt(field_cutoff):
        warnings.warn(
            f"|Delta|={abs(Delta):.4g} < 10 g sqrt(cutoff); dispersive approximation is poor",
            RuntimeWarning,
            stacklevel=2,
        )
    space = SpaceSignature.modes(field_cutoff)
    rate = g * g * t / Delta
    phases = _phase_diag(-np.fmod(rate, TWO_PI) * np.arange(1, field_cutoff + 1))
    return OperatorMatrix(space, np.diag(phases), {"unitary"})


def fourier_via_dispersive(g, Delta, field_cutoff):
    """Shortest interaction time whose dispersive phases equal the Fourier gate."""
    if g <= 0 or Delta <= 0:
        raise ContractError("g and Delta must be positive")
    t = 1.5 * math.pi * Delta / (g * g)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        U = dispersive_phase(Delta, g, t, field_cutoff)
    # g^2 t / Delta is 3pi/2 up to rounding; rebuild the phases from the exact value
    phases = _phase_diag(-1.5 * math.pi * np.arange(1, field_cutoff + 1))
    if np.max(np.abs(np.diag(U.matrix) - phases)) > 1e-10:
        raise ArithmeticError("dispersive phases drifted from the Fourier gate")
    return t, OperatorMatrix(U.space, np.diag(phases), {"unitary"})


def dispersive_phase_error(p, n, t):
    """Phase-angle error of the |e, n> amplitude under full JC vs the dispersive formula.

    The free phase exp(-i (w_a/2 + n w) t) is removed before comparing.
    """
    Delta = p.omega_a - p.omega
    cutoff = n + 3
    space = SpaceSignature.atom_field(cutoff)
    psi = np.zeros(space.dim, dtype=complex)
    psi[n] = 1.0  # atom index 0 (|e>), field index n
    out = jc_evolve(StateVector(space, psi), p, t).amplitudes[n]
    free = -(p.omega_a / 2 + n * p.omega) * t
    predicted = -p.g * p.g * (n + 1) * t / Delta
    return abs(cmath.phase(out * cmath.exp(-1j * (free + predicted))))


# ---------------------------------------------------------------------------
# two-photon pump


def two_photon_unitary(kappa, t, field_cutoff):
    """exp(-kappa t (a^2 - a^dag^2)), i.e. the one-mode squeezer with zeta = 2 kappa t."""
    space = SpaceSignature.modes(field_cutoff)
    return exp_hermitian(squeeze_generator(space, 0, -2.0 * kappa * t), 1.0)


@dataclass(frozen=True)
class PumpConfig:
    """One-atom pump settings.

    The atom enters in c_e|e> + c_g|g> with c_e / c_g = (1 - epsilon) e^{i phase},
    c_g > 0.  ``phase = pi`` orients the dark state so that p is squeezed.
    """

    kappa: float = 1.0
    t_int: float = 0.4
    epsilon: float = 0.05
    phase: float = math.pi
    stark: bool = True
    pulse: bool = True

    def __post_init__(self):
        if not 0 <= self.epsilon < 1:
            raise ContractError("epsilon must lie in [0, 1)")
        if self.t_int < 0:
            raise ContractError("interaction time must be nonnegative")

    @classmethod
    def from_pair(cls, c_e, c_g, **kw):
        c_e, c_g = complex(c_e), complex(c_g)
        norm = abs(c_e) ** 2 + abs(c_g) ** 2
        if abs(norm - 1) > 1e-12:
            raise ContractError("atom superposition must be normalized")
        if c_g == 0:
            raise ContractError("c_g must be nonzero")
        ratio = c_e / c_g
        return cls(epsilon=1 - abs(ratio), phase=cmath.phase(ratio) if ratio else 0.0, **kw)

    @property
    def atom_superposition(self):
        c_g = 1 / math.sqrt(1 + (1 - self.epsilon) ** 2)
        return (1 - self.epsilon) * c_g * cmath.exp(1j * self.phase), complex(c_g)

    def squeezing_parameter(self):
        """r of the dark state, tanh r = 1 - epsilon (infinite for epsilon = 0)."""
        return math.inf if self.epsilon == 0 else math.atanh(1 - self.epsilon)


@lru_cache(maxsize=32)
def _pump_unitary(kappa, t_int, stark, field_cutoff):
    n = np.arange(field_cutoff, dtype=float)
    a = lowering_matrix(field_cutoff)
    a2 = a @ a
    N = field_cutoff
    H = np.zeros((2 * N, 2 * N), dtype=complex)
    H[:N, N:] = a2  # |e><g| a^2
    H[N:, :N] = a2.conj().T
    if stark:
        H[:N, :N] = np.diag(n + 1)
        H[N:, N:] = np.diag(n)
    space = SpaceSignature.atom_field(field_cutoff)
    U = exp_hermitian(OperatorMatrix(space, kappa * H, {"hermitian"}), t_int).matrix
    U.setflags(write=False)
    return U


def pump_joint_unitary(cfg, field_cutoff):
    """Atom⊗field unitary of one transit.

    The interaction is the adiabatically eliminated ladder
    kappa [ (N+1)|e><e| + N|g><g| + |e><g| a^2 + |g><e| a^dag^2 ];
    with ``stark=False`` the diagonal level shifts are dropped.
    """
    return _pump_unitary(cfg.kappa, cfg.t_int, cfg.stark, field_cutoff)


def pump_kraus(cfg, field_cutoff):
    """Kraus pair (K_e, K_g) of one transit: K_k = <k| pulse U |chi>."""
    N = field_cutoff
    c_e, c_g = cfg.atom_superposition
    if cfg.kappa != 0 and cfg.t_int != 0:
        U = pump_joint_unitary(cfg, N)
        cols = c_e * U[:, :N] + c_g * U[:, N:]
    else:
        cols = np.vstack([c_e * np.eye(N), c_g * np.eye(N)])
    if cfg.pulse:
        top, bottom = cols[:N], cols[N:]
        cols = np.vstack([top + bottom, top - bottom]) / math.sqrt(2)
    return cols[:N], cols[N:]


def pump_step(rho_field, cfg):
    """One atom transit: attach the atom, interact, pulse, trace the atom out."""
    f = rho_field.space.factors
    if len(f) != 1 or not isinstance(f[0], Mode):
        raise SpaceMismatchError(f"pump_step needs a single-mode field, got {rho_field.space}")
    out = sum(K @ rho_field.matrix @ K.conj().T for K in pump_kraus(cfg, f[0].cutoff))
    return DensityOperator(rho_field.space, (out + out.conj().T) / 2)


@dataclass(frozen=True)
class PumpRecord:
    step: int
    var_x: float
    var_p: float
    purity: float
    edge_population: float


def pump_records(rho0, cfg, max_atoms, var_tol=0.0):
    """Iterate pump_step; stop when |delta var(p)| < var_tol or after max_atoms."""
    if max_atoms < 1:
        raise ContractError("max_atoms must be at least 1")
    space = rho0.space
    x, p = quadrature_ops(space, 0)
    rho = rho0
    records = []
    prev = variance(p, rho)
    for k in range(1, max_atoms + 1):
        rho = pump_step(rho, cfg)
        vp = variance(p, rho)
        records.append(PumpRecord(k, variance(x, rho), vp, rho.purity, rho.edge_population(0)))
        if abs(vp - prev) < var_tol:
            break
        prev = vp
    return rho, records


def pump_to_steady(rho0, cfg, max_atoms, var_tol=0.0):
    """Returns (final state, var(p) after every atom)."""
    rho, records = pump_records(rho0, cfg, max_atoms, var_tol)
    return rho, [r.var_p for r in records]


def single_atom_variance_change(cfg):
    """Closed-form change of var(p) when one atom crosses the vacuum (Stark model).

    Only |e,0> <-> |g,2> evolves; the block has eigenvalues 0 and 3 kappa.
    """
    c_e, c_g = cfg.atom_superposition
    q = 3 * cfg.kappa * cfg.t_int
    u_g = math.sqrt(2) * (cmath.exp(-1j * q) - 1) / 3  # <g,2|U|e,0>
    beta = c_e * u_g / c_g
    return abs(c_g) ** 2 * (abs(beta) ** 2 - math.sqrt(2) * beta.real / 2)


# ---------------------------------------------------------------------------
# three-level effective two-mode interaction


@dataclass(frozen=True)
class ThreeLevelConfig:
    g1: float
    g2: float
    Gamma: float
    delta1: float
    delta2: float
    delta3: float
    omega1: float = 0.0
    omega2: float = 0.0
    theta_terms: tuple = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "theta_terms", tuple(float(v) for v in self.theta_terms))
        if len(self.theta_terms) != 2:
            raise ContractError("theta_terms needs one coefficient per mode")

    @property
    def is_valid(self):
        small = max(abs(self.g1), abs(self.g2), abs(self.Gamma))
        return min(abs(self.delta1), abs(self.delta2), abs(self.delta3)) >= 10 * small


def _pq_diag(cfg, c1, c2):
    n1, n2 = np.meshgrid(np.arange(c1), np.arange(c2), indexing="ij")
    P = n1 * (cfg.delta3 / 2 - cfg.delta1) + n2 * (cfg.delta3 / 2 - cfg.delta2)
    return P, P + cfg.delta2


def two_mode_effective_raw(cfg, cutoffs):
    """Unsymmetrized Theta + i g1 g2 Gamma (F a1^dag a2^dag - a1 a2 F), F = (P Q)^{-1}.

    F sits on the side of the doubly excited state, which makes the
    expression Hermitian as it stands and needs (PQ)^{-1} only on sectors
    n1, n2 >= 1.
    """
    c1, c2 = cutoffs
    space = SpaceSignature.modes(c1, c2)
    if not cfg.is_valid:
        warnings.warn("detunings are not >> couplings; the effective Hamiltonian is unreliable", RuntimeWarning, stacklevel=3)
    theta = cfg.theta_terms[0] * number_op(space, 0).matrix + cfg.theta_terms[1] * number_op(space, 1).matrix
    coupling = cfg.g1 * cfg.g2 * cfg.Gamma
    if coupling == 0:
        return OperatorMatrix(space, theta)
    P, Q = _pq_diag(cfg, c1, c2)
    PQ = P * Q
    used = np.zeros_like(PQ, dtype=bool)
    used[1:, 1:] = True
    singular = used & (np.abs(PQ) < 1e-12)
    if singular.any():
        n1, n2 = map(int, np.argwhere(singular)[0])
        raise SingularSectorError(f"P Q vanishes on Fock sector |{n1},{n2}>", (n1, n2))
    F = np.zeros_like(PQ, dtype=float)
    F[used] = 1.0 / PQ[used]
    Fm = np.diag(F.ravel()).astype(complex)
    a1, _ = ladder_ops(space, 0)
    a2, _ = ladder_ops(space, 1)
    A = a1.matrix @ a2.matrix
    return OperatorMatrix(space, theta + 1j * coupling * (Fm @ A.conj().T - A @ Fm))


def two_mode_effective_hamiltonian(cfg, cutoffs):
    """Hermitian effective two-mode interaction (symmetrization removes rounding only)."""
    raw = two_mode_effective_raw(cfg, cutoffs)
    m = raw.matrix
    return OperatorMatrix(raw.space, (m + m.conj().T) / 2, {"hermitian"})


def frame_rotation(cfg, t, cutoffs):
    c1, c2 = cutoffs
    space = SpaceSignature.modes(c1, c2)
    n1, n2 = np.meshgrid(np.arange(c1), np.arange(c2), indexing="ij")
    w1 = cfg.omega1 + cfg.delta1 - cfg.delta3 / 2
    w2 = cfg.omega2 + cfg.delta2 - cfg.delta3 / 2
    angles = (np.fmod(w1 * t, TWO_PI) * n1 + np.fmod(w2 * t, TWO_PI) * n2).ravel()
    return OperatorMatrix(space, np.diag(_phase_diag(angles)), {"unitary"})


# ---------------------------------------------------------------------------
# atom measurement


def atom_rotation(angle):
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def measurement_kraus(p, t, atom_state, basis_angle, field_cutoff):
    """Field operators {"e": K_e, "g": K_g}: atom enters in ``atom_state``,
    interacts for time t under JC, is rotated by ``basis_angle`` and read out."""
    chi = np.asarray(atom_state, dtype=complex)
    if chi.shape != (2,) or abs(np.vdot(chi, chi).real - 1) > 1e-12:
        raise ContractError("atom state must be a normalized pair (c_e, c_g)")
    N = field_cutoff
    U = exp_hermitian(jc_hamiltonian(p, N), t).matrix
    cols = chi[0] * U[:, :N] + chi[1] * U[:, N:]
    R = atom_rotation(basis_angle)
    top, bottom = cols[:N], cols[N:]
    return {"e": R[0, 0] * top + R[0, 1] * bottom, "g": R[1, 0] * top + R[1, 1] * bottom}


def _branches(joint, basis_angle):
    f = joint.space.factors
    if f[0] != Atom(2) or len(f) < 2:
        raise SpaceMismatchError(f"expected Atom(2) followed by field modes, got {joint.space}")
    field = SpaceSignature(f[1:])
    psi = joint.amplitudes.reshape(2, field.dim)
    psi = atom_rotation(basis_angle) @ psi
    return field, {"e": psi[0], "g": psi[1]}


def measure_atom_branch(joint, basis_angle, outcome):
    """Project the rotated atom on ``outcome``; returns (field state, probability)."""
    if outcome not in ("e", "g"):
        raise ContractError("outcome must be 'e' or 'g'")
    field, br = _branches(joint, basis_angle)
    v = br[outcome]
    prob = float(np.vdot(v, v).real)
    if prob < 1e-15:
        raise ContractError(f"branch {outcome!r} has zero probability")
    return StateVector(field, v / math.sqrt(prob), joint.leakage), prob


def measure_atom(joint, basis_angle, rng_seed):
    """Sample an atom measurement; returns (outcome, field state, probability)."""
    field, br = _branches(joint, basis_angle)
    p_e = float(np.vdot(br["e"], br["e"]).real)
    p_g = float(np.vdot(br["g"], br["g"]).real)
    u = np.random.default_rng(rng_seed).random() * (p_e + p_g)
    outcome = "e" if u < p_e else "g"
    post, prob = measure_atom_branch(joint, basis_angle, outcome)
    return outcome, post, prob


# ---------------------------------------------------------------------------
# atomic beam


@dataclass(frozen=True)
class BeamConfig:
    rate: float
    cavity_length: float
    velocity: float

    def __post_init__(self):
        if min(self.rate, self.cavity_length, self.velocity) <= 0:
            raise ContractError("rate, cavity length and velocity must be positive")

    @property
    def transit_time(self):
        return self.cavity_length / self.velocity


def one_atom_probability(b):
    """P1 = exp(-2 r L / v): no other atom within one transit time either side."""
    return math.exp(-2 * b.rate * b.transit_time)


def sample_arrivals(b, duration, rng_seed):
    """Sorted arrival times of a homogeneous Poisson process on [0, duration)."""
    if duration <= 0:
        raise ContractError("duration must be positive")
    rng = np.random.default_rng(rng_seed)
    mean_gap = 1.0 / b.rate
    times = []
    t = 0.0
    chunk = max(16, int(b.rate * duration * 1.1) + 16)
    while True:
        gaps = rng.exponential(mean_gap, chunk)
        cum = t + np.cumsum(gaps)
        inside = cum[cum < duration]
        times.append(inside)
        if len(inside) < chunk:
            break
        t = cum[-1]
    return np.concatenate(times)


@dataclass(frozen=True)
class BeamStats:
    count: int
    expected_count: float
    close_gap_fraction: float
    close_gap_expected: float
    close_gap_sigma: float
    isolated_fraction: float
    p1: float

    def rows(self):
        return [
            ("arrivals", self.count, self.expected_count),
            ("gap<L/v fraction", self.close_gap_fraction, self.close_gap_expected),
            ("isolated fraction", self.isolated_fraction, self.p1),
        ]


def beam_statistics(b, times, duration):
    """Compare sampled arrivals with Poisson predictions."""
    tau = b.transit_time
    gaps = np.diff(times)
    p_close = 1 - math.exp(-b.rate * tau)
    n = max(len(gaps), 1)
    close = float(np.mean(gaps < tau)) if len(gaps) else 0.0
    if len(gaps) >= 2:
        isolated = float(np.mean((gaps[:-1] > tau) & (gaps[1:] > tau)))
    else:
        isolated = 1.0
    return BeamStats(
        count=len(times),
        expected_count=b.rate * duration,
        close_gap_fraction=close,
        close_gap_expected=p_close,
        close_gap_sigma=math.sqrt(p_close * (1 - p_close) / n),
        isolated_fraction=isolated,
        p1=one_atom_probability(b),
    )
