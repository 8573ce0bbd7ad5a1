"""States and operators on tensor products of truncated Fock spaces.

Conventions used everywhere in the package:

* hbar = 1.
* Quadratures ``x = (a + a^dag)/2`` and ``p = (a - a^dag)/(2i)``, so that
  ``a = x + i p`` and ``[x, p] = i/2``.  Vacuum quadrature variance is 1/4.
* Atom levels are ordered ``|e>`` (index 0) then ``|g>`` (index 1); a
  three-level atom is ordered ``|a>, |b>, |c>``.

All value types are frozen; their numpy buffers are marked read-only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Union

import numpy as np
from scipy.special import gammainc

from .errors import ContractError, DimensionError, SpaceMismatchError

HERMITIAN_TOL = 1e-10
UNITARY_TOL = 1e-8
EDGE_WIDTH = 2

CONVENTION = {"commutator_xp": "i/2", "hbar": 1, "x": "(a+a^dag)/2", "p": "(a-a^dag)/(2i)"}


def _frozen(array, dtype=complex):
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Mode:
    cutoff: int

    def __post_init__(self):
        if int(self.cutoff) != self.cutoff or self.cutoff < 2:
            raise DimensionError(f"mode cutoff must be an integer >= 2, got {self.cutoff}")

    @property
    def dim(self):
        return self.cutoff


@dataclass(frozen=True)
class Atom:
    levels: int = 2

    def __post_init__(self):
        if self.levels not in (2, 3):
            raise DimensionError(f"atoms have 2 or 3 levels, got {self.levels}")

    @property
    def dim(self):
        return self.levels


Factor = Union[Mode, Atom]


@dataclass(frozen=True)
class SpaceSignature:
    """Ordered list of subsystems; operators index factors by position."""

    factors: tuple

    def __post_init__(self):
        factors = tuple(self.factors)
        if not factors:
            raise DimensionError("a space needs at least one factor")
        for f in factors:
            if not isinstance(f, (Mode, Atom)):
                raise DimensionError(f"unknown factor {f!r}")
        object.__setattr__(self, "factors", factors)
        if self.dim < 2:
            raise DimensionError("total dimension must be at least 2")

    @classmethod
    def modes(cls, *cutoffs):
        return cls(tuple(Mode(int(c)) for c in cutoffs))

    @classmethod
    def atom_field(cls, cutoff, levels=2):
        return cls((Atom(levels), Mode(int(cutoff))))

    @property
    def dims(self):
        return tuple(f.dim for f in self.factors)

    @property
    def dim(self):
        return math.prod(self.dims)

    @property
    def mode_indices(self):
        return tuple(i for i, f in enumerate(self.factors) if isinstance(f, Mode))

    @property
    def cutoffs(self):
        return tuple(f.cutoff for f in self.factors if isinstance(f, Mode))

    def check_factor(self, index, kind=Mode):
        if not 0 <= index < len(self.factors):
            raise DimensionError(f"subsystem index {index} out of range for {self}")
        if not isinstance(self.factors[index], kind):
            raise DimensionError(f"subsystem {index} is {self.factors[index]!r}, not a {kind.__name__}")
        return self.factors[index]

    def concat(self, other):
        return SpaceSignature(self.factors + other.factors)

    def basis_indices(self):
        """Array of shape (dim, n_factors) giving each basis vector's per-factor index."""
        return np.array(np.unravel_index(np.arange(self.dim), self.dims)).T

    def low_mask(self, margin=1):
        """Boolean mask of basis vectors with every mode index < cutoff - margin.

        ``margin=1`` is the leakage-free subspace: it excludes the top Fock level
        of every mode, where truncated ladder operators break the canonical
        commutator.
        """
        idx = self.basis_indices()
        mask = np.ones(self.dim, dtype=bool)
        for k in self.mode_indices:
            mask &= idx[:, k] < self.factors[k].cutoff - margin
        return mask

    def __str__(self):
        parts = [f"Mode({f.cutoff})" if isinstance(f, Mode) else f"Atom({f.levels})" for f in self.factors]
        return "⊗".join(parts)


def _require_same_space(a, b):
    if a != b:
        raise SpaceMismatchError(f"space mismatch: {a} vs {b}")


@dataclass(frozen=True)
class StateVector:
    space: SpaceSignature
    amplitudes: np.ndarray
    leakage: float = 0.0  # probability lost to truncation when the state was prepared

    def __post_init__(self):
        amps = _frozen(self.amplitudes).reshape(-1)
        if amps.shape != (self.space.dim,):
            raise DimensionError(f"expected {self.space.dim} amplitudes, got {amps.shape}")
        n2 = float(np.vdot(amps, amps).real)
        if not 0.0 < n2 <= 1.0 + 1e-12:
            raise ContractError(f"squared norm {n2} outside (0, 1 + 1e-12]")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm2(self):
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    @property
    def is_normalized(self):
        return abs(self.norm2 - 1.0) <= 1e-10

    def normalized(self):
        return StateVector(self.space, self.amplitudes / math.sqrt(self.norm2), self.leakage)

    def populations(self, index):
        """Marginal occupation probabilities of one subsystem."""
        probs = np.abs(self.amplitudes.reshape(self.space.dims)) ** 2
        axes = tuple(i for i in range(len(self.space.dims)) if i != index)
        return probs.sum(axis=axes)

    def top_level_population(self, mode):
        self.space.check_factor(mode)
        return float(self.populations(mode)[-1])

    def edge_population(self, mode, width=EDGE_WIDTH):
        """Population of the last ``width`` Fock levels; two levels catch parity-selective dynamics."""
        self.space.check_factor(mode)
        return float(self.populations(mode)[-width:].sum())

    def to_density(self):
        return DensityOperator(self.space, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class DensityOperator:
    space: SpaceSignature
    matrix: np.ndarray

    def __post_init__(self):
        m = _frozen(self.matrix)
        d = self.space.dim
        if m.shape != (d, d):
            raise DimensionError(f"expected a {d}x{d} matrix, got {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise ContractError("density operator is not Hermitian")
        tr = float(np.trace(m).real)
        if not 0.0 < tr <= 1.0 + 1e-10:
            raise ContractError(f"trace {tr} outside (0, 1 + 1e-10]")
        if np.linalg.eigvalsh(m).min() < -1e-9:
            raise ContractError("density operator has a negative eigenvalue")
        object.__setattr__(self, "matrix", m)

    @property
    def trace(self):
        return float(np.trace(self.matrix).real)

    @property
    def purity(self):
        return float(np.real(np.vdot(self.matrix, self.matrix)))

    def populations(self, index):
        diag = np.real(np.diag(self.matrix)).reshape(self.space.dims)
        axes = tuple(i for i in range(len(self.space.dims)) if i != index)
        return diag.sum(axis=axes)

    def top_level_population(self, mode):
        self.space.check_factor(mode)
        return float(self.populations(mode)[-1])

    def edge_population(self, mode, width=EDGE_WIDTH):
        """Population of the last ``width`` Fock levels; two levels catch parity-selective dynamics."""
        self.space.check_factor(mode)
        return float(self.populations(mode)[-width:].sum())

    def to_density(self):
        return self


State = Union[StateVector, DensityOperator]


@dataclass(frozen=True)
class OperatorMatrix:
    space: SpaceSignature
    matrix: np.ndarray
    tags: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        m = _frozen(self.matrix)
        d = self.space.dim
        if m.shape != (d, d):
            raise DimensionError(f"expected a {d}x{d} matrix, got {m.shape}")
        tags = frozenset(self.tags)
        unknown = tags - {"hermitian", "unitary"}
        if unknown:
            raise ContractError(f"unknown tags {sorted(unknown)}")
        if "hermitian" in tags and np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise ContractError("operator tagged hermitian is not Hermitian")
        if "unitary" in tags and np.max(np.abs(m.conj().T @ m - np.eye(d))) > UNITARY_TOL:
            raise ContractError("operator tagged unitary is not unitary")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "tags", tags)

    @property
    def is_hermitian(self):
        return "hermitian" in self.tags

    @property
    def is_unitary(self):
        return "unitary" in self.tags

    @cached_property
    def spectrum(self):
        """(eigenvalues, eigenvectors) of a Hermitian operator, computed once."""
        if not self.is_hermitian:
            raise ContractError("spectrum is only defined here for Hermitian operators")
        return np.linalg.eigh(self.matrix)

    def dagger(self):
        return OperatorMatrix(self.space, self.matrix.conj().T, self.tags)

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            _require_same_space(self.space, other.space)
            tags = {"unitary"} if self.is_unitary and other.is_unitary else set()
            return OperatorMatrix(self.space, self.matrix @ other.matrix, tags)
        return NotImplemented

    def __add__(self, other):
        _require_same_space(self.space, other.space)
        tags = self.tags & other.tags & {"hermitian"}
        return OperatorMatrix(self.space, self.matrix + other.matrix, tags)

    def __sub__(self, other):
        _require_same_space(self.space, other.space)
        tags = self.tags & other.tags & {"hermitian"}
        return OperatorMatrix(self.space, self.matrix - other.matrix, tags)

    def __neg__(self):
        return OperatorMatrix(self.space, -self.matrix, self.tags & {"hermitian"})

    def scale(self, c):
        tags = self.tags & {"hermitian"} if np.isreal(c) else frozenset()
        return OperatorMatrix(self.space, c * self.matrix, tags)

    def hermitian(self):
        """Re-tag as Hermitian (verified)."""
        return OperatorMatrix(self.space, self.matrix, self.tags | {"hermitian"})


# ---------------------------------------------------------------------------
# constructors


def identity(space):
    return OperatorMatrix(space, np.eye(space.dim), {"hermitian", "unitary"})


def embed(space, index, local):
    """Kronecker-embed a single-factor matrix at subsystem ``index``."""
    local = np.asarray(local)
    if local.shape != (space.dims[index],) * 2:
        raise DimensionError(f"local operator shape {local.shape} does not fit factor {index}")
    out = np.ones((1, 1), dtype=complex)
    for i, d in enumerate(space.dims):
        out = np.kron(out, local if i == index else np.eye(d))
    return out


def lowering_matrix(cutoff):
    return np.diag(np.sqrt(np.arange(1, cutoff, dtype=float)), k=1).astype(complex)


def make_vacuum(space):
    amps = np.zeros(space.dim, dtype=complex)
    amps[0] = 1.0
    return StateVector(space, amps)


def _basis_state(space, index_tuple):
    amps = np.zeros(space.dim, dtype=complex)
    amps[np.ravel_multi_index(index_tuple, space.dims)] = 1.0
    return StateVector(space, amps)


def make_fock(space, mode_index, n):
    mode = space.check_factor(mode_index)
    if not 0 <= n < mode.cutoff:
        raise DimensionError(f"Fock level {n} needs cutoff > {n}, mode has {mode.cutoff}")
    idx = [0] * len(space.factors)
    idx[mode_index] = n
    return _basis_state(space, tuple(idx))


def coherent_amplitudes(alpha, cutoff):
    """Truncated coefficients e^{-|a|^2/2} a^n / sqrt(n!), n < cutoff."""
    n = np.arange(cutoff)
    alpha = complex(alpha)
    if alpha == 0:
        out = np.zeros(cutoff, dtype=complex)
        out[0] = 1.0
        return out
    log_mag = -abs(alpha) ** 2 / 2 + n * math.log(abs(alpha)) - 0.5 * np.array([math.lgamma(k + 1) for k in n])
    return np.exp(log_mag) * np.exp(1j * n * np.angle(alpha))


def coherent_leakage(alpha, cutoff):
    """Poisson tail 1 - sum_{n<cutoff} e^{-|a|^2}|a|^{2n}/n!."""
    mean = abs(complex(alpha)) ** 2
    if mean == 0:
        return 0.0
    # P(N >= cutoff) for N ~ Poisson(mean) is the regularized lower gamma P(cutoff, mean)
    return float(gammainc(cutoff, mean))


def make_coherent(space, mode_index, alpha, normalize=False):
    mode = space.check_factor(mode_index)
    local = coherent_amplitudes(alpha, mode.cutoff)
    leak = coherent_leakage(alpha, mode.cutoff)
    if normalize:
        local = local / np.linalg.norm(local)
    amps = np.ones(1, dtype=complex)
    for i, d in enumerate(space.dims):
        if i == mode_index:
            factor = local
        else:
            factor = np.zeros(d, dtype=complex)
            factor[0] = 1.0
        amps = np.kron(amps, factor)
    return StateVector(space, amps, leak)


def default_cutoff(alpha=0.0):
    """Cutoff rule for coherent/squeezed inputs: max(16, ceil(|a|^2 + 6|a| + 8))."""
    a = abs(complex(alpha))
    return max(16, math.ceil(a * a + 6 * a + 8))


def ladder_ops(space, mode_index):
    mode = space.check_factor(mode_index)
    a = embed(space, mode_index, lowering_matrix(mode.cutoff))
    return OperatorMatrix(space, a), OperatorMatrix(space, a.conj().T)


def number_op(space, mode_index):
    mode = space.check_factor(mode_index)
    local = np.diag(np.arange(mode.cutoff, dtype=float)).astype(complex)
    return OperatorMatrix(space, embed(space, mode_index, local), {"hermitian"})


def quadrature_ops(space, mode_index, theta=0.0):
    a, ad = ladder_ops(space, mode_index)
    x = (a.matrix + ad.matrix) / 2
    p = (a.matrix - ad.matrix) / 2j
    c, s = math.cos(theta), math.sin(theta)
    x_t = c * x + s * p
    p_t = -s * x + c * p
    # scrub the rounding asymmetry left by the complex division
    x_t = (x_t + x_t.conj().T) / 2
    p_t = (p_t + p_t.conj().T) / 2
    return OperatorMatrix(space, x_t, {"hermitian"}), OperatorMatrix(space, p_t, {"hermitian"})


def atom_ops(space, atom_index):
    """sigma_3, sigma_+, sigma_- for a two-level atom factor (|e> = index 0)."""
    space.check_factor(atom_index, Atom)
    if space.factors[atom_index].levels != 2:
        raise DimensionError("sigma operators need a two-level atom")
    s3 = np.diag([1.0, -1.0]).astype(complex)
    sp = np.array([[0, 1], [0, 0]], dtype=complex)
    return (
        OperatorMatrix(space, embed(space, atom_index, s3), {"hermitian"}),
        OperatorMatrix(space, embed(space, atom_index, sp)),
        OperatorMatrix(space, embed(space, atom_index, sp.T.copy())),
    )


# ---------------------------------------------------------------------------
# dynamics and measurement


def exp_hermitian(H, t):
    """U = exp(-i H t) via the spectral decomposition of H."""
    if not H.is_hermitian:
        if np.max(np.abs(H.matrix - H.matrix.conj().T)) > HERMITIAN_TOL:
            raise ContractError("exp_hermitian needs a Hermitian generator")
        H = H.hermitian()
    w, v = H.spectrum
    U = (v * np.exp(-1j * w * t)) @ v.conj().T
    return OperatorMatrix(H.space, U, {"unitary"})


def apply(U, psi):
    _require_same_space(U.space, psi.space)
    return StateVector(psi.space, U.matrix @ psi.amplitudes, psi.leakage)


def apply_to_density(U, rho):
    _require_same_space(U.space, rho.space)
    m = U.matrix @ rho.matrix @ U.matrix.conj().T
    return DensityOperator(rho.space, (m + m.conj().T) / 2)


def evolve(U, state):
    if isinstance(state, DensityOperator):
        return apply_to_density(U, state)
    return apply(U, state)


def expectation(O, state):
    _require_same_space(O.space, state.space)
    if isinstance(state, DensityOperator):
        return complex(np.trace(state.matrix @ O.matrix))
    psi = state.amplitudes
    return complex(np.vdot(psi, O.matrix @ psi))


def variance(O, state):
    _require_same_space(O.space, state.space)
    if not O.is_hermitian:
        raise ContractError("variance needs a Hermitian observable")
    mean = expectation(O, state).real
    if isinstance(state, DensityOperator):
        second = np.trace(state.matrix @ O.matrix @ O.matrix).real
    else:
        v = O.matrix @ state.amplitudes
        second = np.vdot(v, v).real
    return float(second - mean * mean)


def fidelity(a, b):
    """Phase-insensitive fidelity: |<a|b>|^2 for pure states, Uhlmann otherwise."""
    _require_same_space(a.space, b.space)
    if isinstance(a, StateVector) and isinstance(b, StateVector):
        return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)
    if isinstance(a, StateVector):
        a, b = b, a
    if isinstance(b, StateVector):
        return float(np.vdot(b.amplitudes, a.matrix @ b.amplitudes).real)
    w, v = np.linalg.eigh(a.matrix)
    sq = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    ev = np.linalg.eigvalsh(sq @ b.matrix @ sq)
    return float(np.sum(np.sqrt(np.clip(ev, 0, None))) ** 2)


def partial_trace(rho, keep):
    if isinstance(rho, StateVector):
        rho = rho.to_density()
    keep = sorted(set(int(k) for k in keep))
    n = len(rho.space.factors)
    if not keep or keep[0] < 0 or keep[-1] >= n:
        raise DimensionError(f"invalid subsystems to keep: {keep}")
    dims = rho.space.dims
    t = rho.matrix.reshape(dims + dims)
    traced = [i for i in range(n) if i not in keep]
    # trace the highest axes first so lower axis numbers stay valid
    for k, i in enumerate(sorted(traced, reverse=True)):
        m = n - k
        t = np.trace(t, axis1=i, axis2=i + m)
    d = math.prod(dims[i] for i in keep)
    sub = SpaceSignature(tuple(rho.space.factors[i] for i in keep))
    return DensityOperator(sub, t.reshape(d, d))


def tensor(a, b):
    if isinstance(a, StateVector) and isinstance(b, StateVector):
        leak = 1.0 - (1.0 - a.leakage) * (1.0 - b.leakage)
        return StateVector(a.space.concat(b.space), np.kron(a.amplitudes, b.amplitudes), leak)
    if isinstance(a, DensityOperator) and isinstance(b, DensityOperator):
        return DensityOperator(a.space.concat(b.space), np.kron(a.matrix, b.matrix))
    if isinstance(a, OperatorMatrix) and isinstance(b, OperatorMatrix):
        return OperatorMatrix(a.space.concat(b.space), np.kron(a.matrix, b.matrix), a.tags & b.tags)
    raise TypeError(f"cannot tensor {type(a).__name__} with {type(b).__name__}")


def leakage_report(state):
    """Edge (last two Fock levels) population for every mode, plus preparation leakage."""
    out = {f"edge_mode{k}": state.edge_population(k) for k in state.space.mode_indices}
    if isinstance(state, StateVector):
        out["preparation"] = state.leakage
    return out
