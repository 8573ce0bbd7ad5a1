"""Husimi Q-function grids and homodyne sampling.

Q(x, p) = <alpha|rho|alpha> / pi with alpha = x + i p, evaluated with truncated
coherent-state vectors on the state's own cutoff.  With [x, p] = i/2 the vacuum
Q is exp(-x^2 - p^2)/pi, a Gaussian of variance 1/2 per axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError
from .fock import (
    CONVENTION,
    DensityOperator,
    StateVector,
    coherent_leakage,
    partial_trace,
    quadrature_ops,
    variance,
    expectation,
)

DEFAULT_COUNT = 121
DEFAULT_HALF_WIDTH = 4.0


@dataclass(frozen=True)
class GridSpec:
    x_range: tuple
    p_range: tuple

    def __post_init__(self):
        for name, r in (("x", self.x_range), ("p", self.p_range)):
            lo, hi, n = r
            if int(n) < 2:
                raise ContractError(f"{name} grid needs at least 2 points")
            if not hi > lo:
                raise ContractError(f"{name} grid range must be increasing")
        object.__setattr__(self, "x_range", (float(self.x_range[0]), float(self.x_range[1]), int(self.x_range[2])))
        object.__setattr__(self, "p_range", (float(self.p_range[0]), float(self.p_range[1]), int(self.p_range[2])))

    @classmethod
    def square(cls, half_width, count=DEFAULT_COUNT, center=(0.0, 0.0)):
        cx, cp = center
        return cls((cx - half_width, cx + half_width, count), (cp - half_width, cp + half_width, count))

    @property
    def xs(self):
        return np.linspace(*self.x_range)

    @property
    def ps(self):
        return np.linspace(*self.p_range)


@dataclass(frozen=True)
class QGrid:
    """Q values on a rectangular grid; ``values[i, j]`` belongs to (xs[i], ps[j])."""

    x_range: tuple
    p_range: tuple
    values: np.ndarray
    cutoff: int = 0
    corner_leakage: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.x_range[2], self.p_range[2]):
            raise DimensionError("values shape does not match the grid")
        if np.any(v < -1e-12):
            raise ContractError("Q values must be nonnegative")
        v = np.clip(v, 0.0, None)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def xs(self):
        return np.linspace(*self.x_range)

    @property
    def ps(self):
        return np.linspace(*self.p_range)

    @property
    def cell_area(self):
        dx = (self.x_range[1] - self.x_range[0]) / (self.x_range[2] - 1)
        dp = (self.p_range[1] - self.p_range[0]) / (self.p_range[2] - 1)
        return dx * dp

    @property
    def mass(self):
        return float(self.values.sum() * self.cell_area)

    def to_csv(self, path, extra_header=()):
        lines = [f"# {k}: {v}" for k, v in CONVENTION.items()]
        lines.append(f"# cutoff: {self.cutoff}")
        lines.append(f"# corner_probe_leakage: {self.corner_leakage:.6e}")
        lines += [f"# {h}" for h in extra_header]
        lines.append("x,p,q")
        xs, ps = self.xs, self.ps
        for i, x in enumerate(xs):
            for j, p in enumerate(ps):
                lines.append(f"{x:.10g},{p:.10g},{self.values[i, j]:.12e}")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def _single_mode_density(state, mode):
    rho = state.to_density() if isinstance(state, StateVector) else state
    if len(rho.space.factors) > 1:
        rho = partial_trace(rho, [mode])
    else:
        rho.space.check_factor(mode)
    rho.space.check_factor(0)
    return rho


def _coherent_columns(alphas, cutoff):
    """Truncated coherent amplitudes e^{-|a|^2/2} a^n / sqrt(n!), one column per alpha."""
    alphas = np.asarray(alphas, dtype=complex).ravel()
    out = np.empty((cutoff, alphas.size), dtype=complex)
    out[0] = np.exp(-np.abs(alphas) ** 2 / 2)
    for n in range(1, cutoff):
        out[n] = out[n - 1] * alphas / math.sqrt(n)
    return out


def default_grid(state, mode=0, count=DEFAULT_COUNT, half_widths=DEFAULT_HALF_WIDTH):
    """Grid over center +- 4 Q standard deviations per axis."""
    rho = _single_mode_density(state, mode)
    x, p = quadrature_ops(rho.space, 0)
    cx, cp = expectation(x, rho).real, expectation(p, rho).real
    sx = math.sqrt(variance(x, rho) + 0.25)
    sp = math.sqrt(variance(p, rho) + 0.25)
    return GridSpec((cx - half_widths * sx, cx + half_widths * sx, count), (cp - half_widths * sp, cp + half_widths * sp, count))


def husimi_q(state, mode=0, grid_spec=None):
    rho = _single_mode_density(state, mode)
    if grid_spec is None:
        grid_spec = default_grid(rho)
    cutoff = rho.space.factors[0].cutoff
    X, P = np.meshgrid(grid_spec.xs, grid_spec.ps, indexing="ij")
    alphas = (X + 1j * P).ravel()
    C = _coherent_columns(alphas, cutoff)
    q = np.einsum("ik,ik->k", C.conj(), rho.matrix @ C).real / math.pi
    corners = [complex(x, p) for x in grid_spec.x_range[:2] for p in grid_spec.p_range[:2]]
    leak = max(coherent_leakage(a, cutoff) for a in corners)
    return QGrid(grid_spec.x_range, grid_spec.p_range, q.reshape(X.shape), cutoff, leak)


def q_at(state, alpha, mode=0):
    rho = _single_mode_density(state, mode)
    c = _coherent_columns([alpha], rho.space.factors[0].cutoff)[:, 0]
    return float(np.vdot(c, rho.matrix @ c).real / math.pi)


@dataclass(frozen=True)
class QSummary:
    argmax: tuple
    total_mass: float
    second_moments: np.ndarray
    mean: tuple


def q_summary(grid):
    v = grid.values
    i, j = np.unravel_index(int(np.argmax(v)), v.shape)
    xs, ps = grid.xs, grid.ps
    X, P = np.meshgrid(xs, ps, indexing="ij")
    mass = grid.mass
    w = v / v.sum()
    mx, mp = float((w * X).sum()), float((w * P).sum())
    dx, dp = X - mx, P - mp
    cov = np.array([[(w * dx * dx).sum(), (w * dx * dp).sum()], [(w * dx * dp).sum(), (w * dp * dp).sum()]])
    return QSummary((float(xs[i]), float(ps[j])), mass, cov, (mx, mp))


def contour_aspect_ratio(grid, level=math.exp(-0.5)):
    """Major/minor axis ratio of the region where Q >= level * max(Q).

    The region's second moments are those of a filled ellipse, so the axis
    ratio is the square root of their eigenvalue ratio.
    """
    v = grid.values
    mask = v >= level * v.max()
    X, P = np.meshgrid(grid.xs, grid.ps, indexing="ij")
    pts = np.stack([X[mask], P[mask]])
    if pts.shape[1] < 3:
        raise ContractError("contour region is too small to measure; refine the grid")
    ev = np.linalg.eigvalsh(np.cov(pts))
    return float(math.sqrt(ev[-1] / ev[0]))


def gaussianity_witness(grid):
    """Largest standardized third or fourth cumulant of the Q distribution.

    Zero for any Gaussian state (up to grid truncation), so a clearly nonzero
    value certifies a non-Gaussian state.
    """
    s = q_summary(grid)
    w = grid.values / grid.values.sum()
    X, P = np.meshgrid(grid.xs, grid.ps, indexing="ij")
    evals, evecs = np.linalg.eigh(s.second_moments)
    D = np.stack([X - s.mean[0], P - s.mean[1]], axis=-1) @ evecs
    out = 0.0
    # principal axes plus the diagonals catch cross cumulants too
    for u in (np.array([1, 0]), np.array([0, 1]), np.array([1, 1]) / math.sqrt(2), np.array([1, -1]) / math.sqrt(2)):
        z = (D / np.sqrt(evals)) @ u
        k3 = (w * z**3).sum()
        k4 = (w * z**4).sum() - 3.0
        out = max(out, abs(float(k3)), abs(float(k4)))
    return out


def homodyne_sample(state, mode, theta, n_samples, rng_seed):
    """Samples of x^(theta) from its truncated spectral measure."""
    if n_samples <= 0:
        raise ContractError("n_samples must be positive")
    if isinstance(state, StateVector) and not state.is_normalized:
        raise ContractError("homodyne sampling needs a normalized state")
    rho = _single_mode_density(state, mode)
    xt, _ = quadrature_ops(rho.space, 0, theta)
    evals, evecs = xt.spectrum
    weights = np.einsum("ik,ij,jk->k", evecs.conj(), rho.matrix, evecs).real
    weights = np.clip(weights, 0.0, None)
    weights /= weights.sum()
    rng = np.random.default_rng(rng_seed)
    return evals[rng.choice(evals.size, size=int(n_samples), p=weights)]
