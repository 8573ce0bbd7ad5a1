"""Universal continuous-variable gate set on truncated Fock spaces.

Every gate is built by truncating its generator and exponentiating it
spectrally, so the result is unitary on the truncated space to eigensolver
precision.  Global phases are kept.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError
from .fock import (
    OperatorMatrix,
    embed,
    exp_hermitian,
    ladder_ops,
    number_op,
    quadrature_ops,
)

R_MAX = 3.0


@dataclass(frozen=True)
class SqueezeParam:
    """Complex squeezing parameter zeta = r e^{i theta}.

    ``theta`` is the orientation of the anti-squeezed quadrature x^(theta);
    the conjugate p^(theta) is squeezed by e^{-r}.
    """

    zeta: complex
    r_max: float = R_MAX

    def __post_init__(self):
        object.__setattr__(self, "zeta", complex(self.zeta))
        if self.r > self.r_max:
            raise ContractError(f"squeezing r={self.r:.4g} exceeds r_max={self.r_max}")

    @classmethod
    def polar(cls, r, theta=0.0, r_max=R_MAX):
        if r < 0:
            raise ContractError("squeezing magnitude must be nonnegative")
        return cls(cmath.rect(r, theta), r_max)

    @property
    def r(self):
        return abs(self.zeta)

    @property
    def theta(self):
        return cmath.phase(self.zeta) if self.zeta != 0 else 0.0


def _as_squeeze(zeta, r_max=R_MAX):
    return zeta if isinstance(zeta, SqueezeParam) else SqueezeParam(zeta, r_max)


def displace_x(space, mode, x):
    """X(x) = exp(-2 i x p); shifts <x> by +x."""
    _, p = quadrature_ops(space, mode)
    return exp_hermitian(p.scale(2.0 * x), 1.0)


def displace_z(space, mode, p):
    """Z(p) = exp(2 i p x); shifts <p> by +p."""
    x, _ = quadrature_ops(space, mode)
    return exp_hermitian(x.scale(-2.0 * p), 1.0)


def displace_general(space, mode, alpha):
    """D(alpha = x + i p) = exp(2 i p x_op - 2 i x p_op) = exp(alpha a^dag - alpha* a)."""
    alpha = complex(alpha)
    xo, po = quadrature_ops(space, mode)
    H = po.scale(2.0 * alpha.real) - xo.scale(2.0 * alpha.imag)
    return exp_hermitian(H, 1.0)


def _diagonal_phase(space, mode, phases):
    local = np.diag(phases)
    return OperatorMatrix(space, embed(space, mode, local), {"unitary"})


def fourier(space, mode, t=math.pi / 2):
    """Phase-space rotation F(t) = exp(i t (N + 1)); F(pi/2)|n> = i^{n+1}|n>."""
    cutoff = space.check_factor(mode).cutoff
    angles = np.fmod(t * np.arange(1, cutoff + 1), 2 * math.pi)
    return _diagonal_phase(space, mode, np.cos(angles) + 1j * np.sin(angles))


def phase_rotation(space, mode, phi):
    """R(phi) = exp(i phi N): alpha -> alpha e^{i phi}, no extra global phase."""
    cutoff = space.check_factor(mode).cutoff
    angles = np.fmod(phi * np.arange(cutoff), 2 * math.pi)
    return _diagonal_phase(space, mode, np.cos(angles) + 1j * np.sin(angles))


def squeeze_generator(space, mode, zeta):
    """Hermitian H with exp(-i H) = exp((z*/2) a^2 - (z/2) a^dag^2) for the raw z."""
    a, ad = ladder_ops(space, mode)
    z = complex(zeta)
    G = (np.conj(z) / 2) * (a.matrix @ a.matrix) - (z / 2) * (ad.matrix @ ad.matrix)
    H = 1j * G
    return OperatorMatrix(space, (H + H.conj().T) / 2, {"hermitian"})


def squeeze_one(space, mode, zeta, r_max=R_MAX):
    """One-mode squeezer with S^dag x^(theta) S = e^{+r} x^(theta).

    The exponent has the two-photon form (w*/2) a^2 - (w/2) a^dag^2 with
    w = -r e^{2 i theta}; this fixes the orientation so that theta = 0
    squeezes p and the ellipse axes sit along x^(theta), p^(theta).
    """
    sq = _as_squeeze(zeta, r_max)
    w = -sq.r * cmath.exp(2j * sq.theta)
    return exp_hermitian(squeeze_generator(space, mode, w), 1.0)


def squeeze_two(space, mode_i, mode_j, zeta, r_max=R_MAX):
    """S_ij(z) = exp(z* a_i a_j - z a_i^dag a_j^dag).

    For real z > 0 this squeezes x_i + x_j and p_i - p_j; real z < 0
    squeezes the relative position x_i - x_j and total momentum p_i + p_j.
    """
    if mode_i == mode_j:
        raise DimensionError("two-mode squeezing needs two distinct modes")
    sq = _as_squeeze(zeta, r_max)
    ai, aid = ladder_ops(space, mode_i)
    aj, ajd = ladder_ops(space, mode_j)
    z = sq.zeta
    G = np.conj(z) * (ai.matrix @ aj.matrix) - z * (aid.matrix @ ajd.matrix)
    H = 1j * G
    return exp_hermitian(OperatorMatrix(space, (H + H.conj().T) / 2, {"hermitian"}), 1.0)


def kerr(space, mode, t):
    """exp(-i t (x^2 + p^2)^2) with x^2 + p^2 = N + 1/2 exactly."""
    cutoff = space.check_factor(mode).cutoff
    n = np.arange(cutoff)
    # (n + 1/2)^2 = n(n+1) + 1/4 keeps the integer part exact before the mod
    angles = np.fmod(-t * (n * (n + 1)), 2 * math.pi) - t / 4
    return _diagonal_phase(space, mode, np.cos(angles) + 1j * np.sin(angles))


def kerr_generator(space, mode):
    cutoff = space.check_factor(mode).cutoff
    n = np.arange(cutoff) + 0.5
    return OperatorMatrix(space, embed(space, mode, np.diag(n * n)), {"hermitian"})


# ---------------------------------------------------------------------------
# descriptors

GATE_KINDS = {
    # kind: (number of targets, number of params, default params)
    "DisplaceX": (1, 1, None),
    "DisplaceZ": (1, 1, None),
    "DisplaceGeneral": (1, 1, None),
    "Fourier": (1, 1, (math.pi / 2,)),
    "Squeeze1": (1, 1, None),
    "Squeeze2": (2, 1, None),
    "Kerr": (1, 1, None),
    "PhaseRotation": (1, 1, None),
}


def _encode_number(v):
    v = complex(v)
    return v.real if v.imag == 0 else [v.real, v.imag]


def _decode_number(v):
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ContractError(f"complex numbers serialize as [re, im], got {v!r}")
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, bool) or not isinstance(v, (int, float, complex)):
        raise ContractError(f"not a number: {v!r}")
    return v


@dataclass(frozen=True)
class GateDescriptor:
    kind: str
    params: tuple = ()
    targets: tuple = ()

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ContractError(f"unknown gate kind {self.kind!r}")
        n_targets, n_params, default = GATE_KINDS[self.kind]
        params = tuple(self.params)
        if not params and default is not None:
            params = default
        targets = tuple(int(t) for t in self.targets)
        if len(targets) != n_targets:
            raise ContractError(f"{self.kind} takes {n_targets} target(s), got {len(targets)}")
        if len(set(targets)) != len(targets):
            raise ContractError(f"{self.kind} targets must be distinct, got {targets}")
        if len(params) != n_params:
            raise ContractError(f"{self.kind} takes {n_params} parameter(s), got {len(params)}")
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "targets", targets)

    def to_dict(self):
        return {"kind": self.kind, "params": [_encode_number(v) for v in self.params], "targets": list(self.targets)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], tuple(_decode_number(v) for v in d.get("params", ())), tuple(d.get("targets", ())))


def build_gate(g, space, r_max=R_MAX):
    (m, *rest) = g.targets
    v = g.params[0]
    real = lambda z: float(np.real(z))  # noqa: E731
    if g.kind == "DisplaceX":
        return displace_x(space, m, real(v))
    if g.kind == "DisplaceZ":
        return displace_z(space, m, real(v))
    if g.kind == "DisplaceGeneral":
        return displace_general(space, m, v)
    if g.kind == "Fourier":
        return fourier(space, m, real(v))
    if g.kind == "Squeeze1":
        return squeeze_one(space, m, v, r_max)
    if g.kind == "Squeeze2":
        return squeeze_two(space, m, rest[0], v, r_max)
    if g.kind == "Kerr":
        return kerr(space, m, real(v))
    return phase_rotation(space, m, real(v))
