"""Hermitian polynomials in per-mode quadratures.

A polynomial is stored by its Weyl symbol: a commutative polynomial in the
symbols x_k, p_k with exact rational coefficients.  Each monomial stands for
the fully symmetrized operator product, so every polynomial with real
coefficients is Hermitian.  Commutators are computed with the Moyal bracket
for [x_k, p_k] = i/2, which is exact (the series terminates) for polynomials.
"""

from __future__ import annotations

import ast
import math
import re
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import ContractError, DimensionError
from .fock import OperatorMatrix, lowering_matrix

HBAR = Fraction(1, 2)
MAX_DEGREE = 6

_SYMBOL = re.compile(r"^([xp])(\d*)$")


def _mono_mul(m1, m2):
    d = {}
    for k, a, b in m1 + m2:
        pa, pb = d.get(k, (0, 0))
        d[k] = (pa + a, pb + b)
    return tuple(sorted((k, a, b) for k, (a, b) in d.items() if a or b))


def _mono_diff(m, mode, var):
    """Derivative of a monomial w.r.t. x_mode (var=0) or p_mode (var=1): (factor, monomial)."""
    out = []
    factor = 0
    for k, a, b in m:
        if k == mode:
            e = (a, b)[var]
            if e == 0:
                return 0, ()
            factor = e
            a, b = (a - 1, b) if var == 0 else (a, b - 1)
        if a or b:
            out.append((k, a, b))
    if factor == 0:
        return 0, ()
    return factor, tuple(out)


def _mono_degree(m):
    return sum(a + b for _, a, b in m)


def _mono_str(m):
    if not m:
        return "1"
    parts = []
    for k, a, b in m:
        for sym, e in (("x", a), ("p", b)):
            if e == 1:
                parts.append(f"{sym}{k}")
            elif e > 1:
                parts.append(f"{sym}{k}^{e}")
    return "*".join(parts)


class HermitianPolynomial:
    """Real combination of Weyl-symmetrized quadrature monomials."""

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms=None):
        clean = {}
        for mono, c in (terms or {}).items():
            c = Fraction(c)
            if c:
                clean[tuple(mono)] = clean.get(tuple(mono), Fraction(0)) + c
        self._terms = {m: c for m, c in sorted(clean.items()) if c}
        self._hash = None

    # -- construction -----------------------------------------------------

    @classmethod
    def symbol(cls, name):
        m = _SYMBOL.match(name.strip())
        if not m:
            raise ContractError(f"unknown quadrature symbol {name!r}")
        k = int(m.group(2) or 0)
        mono = ((k, 1, 0),) if m.group(1) == "x" else ((k, 0, 1),)
        return cls({mono: 1})

    @classmethod
    def constant(cls, c):
        return cls({(): c})

    @classmethod
    def from_terms(cls, terms):
        """Build from (coefficient, word) pairs; a word like "x0 p0 x0" is symmetrized."""
        out = cls()
        for coef, word in terms:
            tokens = word.replace("*", " ").split() if isinstance(word, str) else list(word)
            mono = ()
            for tok in tokens:
                mono = _mono_mul(mono, next(iter(cls.symbol(tok)._terms)))
            out = out + cls({mono: Fraction(coef)})
        return out

    @classmethod
    def parse(cls, text):
        """Parse an expression such as ``"(x0^2 + p0^2)^2 - 0.5*x1"``.

        Products are symmetrized, i.e. symbols multiply commutatively.
        """
        try:
            tree = ast.parse(text.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ContractError(f"cannot parse polynomial {text!r}: {exc.msg}") from None
        return cls._from_ast(tree.body, text)

    @classmethod
    def _from_ast(cls, node, text):
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            return cls.constant(Fraction(str(node.value)) if isinstance(node.value, float) else node.value)
        if isinstance(node, ast.Name):
            return cls.symbol(node.id)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            inner = cls._from_ast(node.operand, text)
            return -inner if isinstance(node.op, ast.USub) else inner
        if isinstance(node, ast.BinOp):
            left = cls._from_ast(node.left, text)
            if isinstance(node.op, ast.Pow):
                if not (isinstance(node.right, ast.Constant) and isinstance(node.right.value, int) and node.right.value >= 0):
                    raise ContractError(f"exponents must be nonnegative integers in {text!r}")
                return left**node.right.value
            right = cls._from_ast(node.right, text)
            if isinstance(node.op, ast.Add):
                return left + right
            if isinstance(node.op, ast.Sub):
                return left - right
            if isinstance(node.op, ast.Mult):
                return left * right
            if isinstance(node.op, ast.Div) and right.is_constant():
                return left * cls.constant(1 / right.constant_term())
        raise ContractError(f"unsupported syntax in polynomial {text!r}")

    # -- inspection -------------------------------------------------------

    @property
    def terms(self):
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def degree(self):
        return max((_mono_degree(m) for m in self._terms), default=0)

    def modes(self):
        return sorted({k for m in self._terms for k, _, _ in m})

    def is_zero(self):
        return not self._terms

    def is_constant(self):
        return all(m == () for m in self._terms)

    def constant_term(self):
        return self._terms.get((), Fraction(0))

    def without_constant(self):
        return HermitianPolynomial({m: c for m, c in self._terms.items() if m})

    def __eq__(self, other):
        return isinstance(other, HermitianPolynomial) and self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(tuple(self._terms.items()))
        return self._hash

    def __str__(self):
        if not self._terms:
            return "0"
        out = ""
        for m, c in sorted(self._terms.items(), key=lambda kv: (-_mono_degree(kv[0]), kv[0])):
            sign = "-" if c < 0 else "+"
            mag = abs(c)
            body = _mono_str(m)
            coef = "" if mag == 1 and m else (str(mag) if mag.denominator == 1 else f"({mag})")
            piece = body if not coef else (coef if not m else f"{coef}*{body}")
            out += f" {sign} {piece}"
        out = out.strip()
        return out[2:] if out.startswith("+ ") else "-" + out[2:]

    def __repr__(self):
        return f"HermitianPolynomial({str(self)!r})"

    def to_text(self):
        return str(self)

    # -- algebra ----------------------------------------------------------

    def __add__(self, other):
        d = dict(self._terms)
        for m, c in other._terms.items():
            d[m] = d.get(m, Fraction(0)) + c
        return HermitianPolynomial(d)

    def __neg__(self):
        return HermitianPolynomial({m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        c = Fraction(c)
        return HermitianPolynomial({m: c * v for m, v in self._terms.items()})

    def __mul__(self, other):
        """Symmetrized (Weyl-ordered) product: symbols multiply commutatively."""
        if not isinstance(other, HermitianPolynomial):
            return self.scale(other)
        d = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                m = _mono_mul(m1, m2)
                d[m] = d.get(m, Fraction(0)) + c1 * c2
        return HermitianPolynomial(d)

    __rmul__ = scale

    def __pow__(self, n):
        if not isinstance(n, int) or n < 0:
            raise ContractError("polynomial powers must be nonnegative integers")
        out = HermitianPolynomial.constant(1)
        for _ in range(n):
            out = out * self
        return out

    def comm(self, other):
        """The Hermitian polynomial i[self, other]."""
        return commutator(self, other)

    def coefficient_vector(self, index):
        """Coefficients over a monomial index (dict monomial -> position), constants dropped."""
        v = [Fraction(0)] * len(index)
        for m, c in self._terms.items():
            if m:
                v[index[m]] = c
        return v


def x(k=0):
    return HermitianPolynomial({((k, 1, 0),): 1})


def p(k=0):
    return HermitianPolynomial({((k, 0, 1),): 1})


def _poisson_power(pairs, modes):
    """Apply the Poisson bidifferential operator once to a dict (monoA, monoB) -> coef."""
    out = {}
    for (ma, mb), c in pairs.items():
        for k in modes:
            for va, vb, sign in ((0, 1, 1), (1, 0, -1)):
                fa, da = _mono_diff(ma, k, va)
                if not fa:
                    continue
                fb, db = _mono_diff(mb, k, vb)
                if not fb:
                    continue
                key = (da, db)
                out[key] = out.get(key, Fraction(0)) + sign * fa * fb * c
    return {k: v for k, v in out.items() if v}


def commutator(A, B):
    """i[A, B] as a Weyl symbol: 2 sum_k (-1)^{k+1} (hbar/2)^{2k+1}/(2k+1)! Pi^{2k+1}(A, B)."""
    modes = sorted(set(A.modes()) & set(B.modes()))
    pairs = {}
    for ma, ca in A.items():
        for mb, cb in B.items():
            pairs[(ma, mb)] = pairs.get((ma, mb), Fraction(0)) + ca * cb
    result = {}
    n = 0
    half = HBAR / 2
    while pairs:
        pairs = _poisson_power(pairs, modes)
        n += 1
        if n % 2 == 1 and pairs:
            k = (n - 1) // 2
            w = 2 * (-1) ** (k + 1) * half**n / math.factorial(n)
            for (ma, mb), c in pairs.items():
                m = _mono_mul(ma, mb)
                result[m] = result.get(m, Fraction(0)) + w * c
    return HermitianPolynomial(result)


# ---------------------------------------------------------------------------
# matrix realization


@lru_cache(maxsize=512)
def _weyl_local(cutoff, a, b):
    """Exact truncation of the Weyl-ordered x^a p^b on one mode (McCoy's formula)."""
    big = cutoff + a + b + 1
    lo = lowering_matrix(big)
    xm = (lo + lo.conj().T) / 2
    pm = (lo - lo.conj().T) / 2j
    pb = np.linalg.matrix_power(pm, b)
    acc = np.zeros((big, big), dtype=complex)
    for k in range(a + 1):
        acc += math.comb(a, k) * np.linalg.matrix_power(xm, k) @ pb @ np.linalg.matrix_power(xm, a - k)
    acc /= 2**a
    out = acc[:cutoff, :cutoff].copy()
    out.setflags(write=False)
    return out


def realize(poly, space):
    """Hermitian matrix of ``poly`` on ``space``; mode k of the polynomial is factor k."""
    for k in poly.modes():
        space.check_factor(k)
    dims = space.dims
    total = np.zeros((space.dim, space.dim), dtype=complex)
    for mono, c in poly.items():
        per = {k: (a, b) for k, a, b in mono}
        m = np.ones((1, 1), dtype=complex)
        for i, d in enumerate(dims):
            if i in per:
                m = np.kron(m, _weyl_local(d, *per[i]))
            else:
                m = np.kron(m, np.eye(d))
        total += float(c) * m
    total = (total + total.conj().T) / 2
    return OperatorMatrix(space, total, {"hermitian"})


def check_degree(poly, max_degree=MAX_DEGREE):
    if poly.degree() > max_degree:
        raise ContractError(f"degree {poly.degree()} exceeds the configured maximum {max_degree}")
    return poly


def require_modes(poly, space):
    for k in poly.modes():
        if k >= len(space.factors):
            raise DimensionError(f"polynomial uses mode {k}, space has {len(space.factors)} factors")
