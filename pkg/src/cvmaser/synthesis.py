"""Hamiltonian synthesis from a small set of switchable generators.

Two product formulas do all the work:

* group commutator  e^{-iA d}, e^{-iB d}, e^{iA d}, e^{iB d} applied in that
  order gives e^{[A,B] d^2} + O(d^3)
* symmetric sum     e^{iA d/2} e^{iB d/2} e^{iB d/2} e^{iA d/2} = e^{i(A+B) d} + O(d^3)

A breadth-first search over commutators of the primitives finds a linear
combination of nested commutators equal to the target (modulo constants,
which only contribute a global phase).  The resulting derivation tree is
compiled into a flat list of primitive pulses and Trotter-refined until a
probe-state fidelity certificate is met.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .errors import ClosureExhaustedError, ContractError, SpaceMismatchError, StepBudgetError
from .fock import (
    OperatorMatrix,
    SpaceSignature,
    StateVector,
    coherent_amplitudes,
    exp_hermitian,
    make_fock,
    make_vacuum,
)
from .polynomial import MAX_DEGREE, HermitianPolynomial, commutator, p, realize, x

MAX_DEPTH = 4
STEP_BUDGET = 100_000


# ---------------------------------------------------------------------------
# primitives and plans


class PrimitiveSet:
    """Named generators the hardware can switch on with either sign and any duration."""

    def __init__(self, generators):
        gens = {}
        for name, poly in dict(generators).items():
            if isinstance(poly, str):
                poly = HermitianPolynomial.parse(poly)
            if not isinstance(poly, HermitianPolynomial):
                raise ContractError(f"primitive {name!r} must be a HermitianPolynomial")
            gens[str(name)] = poly
        if not gens:
            raise ContractError("a primitive set needs at least one generator")
        self._gens = dict(sorted(gens.items()))

    def __getitem__(self, name):
        try:
            return self._gens[name]
        except KeyError:
            raise ContractError(f"unknown primitive {name!r}") from None

    def __contains__(self, name):
        return name in self._gens

    def __iter__(self):
        return iter(self._gens)

    def items(self):
        return self._gens.items()

    def n_modes(self):
        return max((max(pl.modes(), default=-1) for pl in self._gens.values()), default=-1) + 1

    def to_dict(self):
        return {k: str(v) for k, v in self._gens.items()}

    @classmethod
    def universal(cls, mode=0):
        """Linear quadratures, a free rotation N + 1/2 and the Kerr generator on one mode."""
        n = x(mode) * x(mode) + p(mode) * p(mode)
        return cls({f"x{mode}": x(mode), f"p{mode}": p(mode), f"n{mode}": n, f"kerr{mode}": n * n})


@dataclass(frozen=True)
class GatePlan:
    """Ordered pulses (primitive id, duration); each step applies exp(-i P duration)."""

    steps: tuple
    target: HermitianPolynomial
    total_time: float
    recipe: Optional[tuple] = None
    step_count: int = field(default=-1)

    def __post_init__(self):
        steps = tuple((str(a), float(d)) for a, d in self.steps)
        object.__setattr__(self, "steps", steps)
        if self.step_count == -1:
            object.__setattr__(self, "step_count", len(steps))
        if self.step_count != len(steps):
            raise ContractError("step_count must equal the number of steps")

    def check(self, prims):
        for name, _ in self.steps:
            if name not in prims:
                raise ContractError(f"plan uses unregistered primitive {name!r}")
        return self

    def to_dict(self):
        return {
            "target": str(self.target),
            "total_time": self.total_time,
            "step_count": self.step_count,
            "steps": [[a, d] for a, d in self.steps],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple((a, t) for a, t in d["steps"]), HermitianPolynomial.parse(d["target"]), float(d["total_time"]))


def _merge(steps):
    """Fuse consecutive pulses of the same generator; drop zero-length pulses."""
    out = []
    for name, d in steps:
        if out and out[-1][0] == name:
            out[-1] = (name, out[-1][1] + d)
        else:
            out.append((name, d))
    return [(n, d) for n, d in out if d != 0.0]


def _inverse(steps):
    return [(n, -d) for n, d in reversed(steps)]


def commutator_compose(prims, a, b, dt):
    """Four pulses realizing exp([A, B] dt^2), i.e. the Hamiltonian i[A, B] for time dt^2.

    Pulses are applied in the listed order: exp(-iA dt), exp(-iB dt), exp(iA dt), exp(iB dt).
    """
    if dt < 0:
        raise ContractError("dt must be positive")
    target = commutator(prims[a], prims[b])
    steps = () if dt == 0 else ((a, dt), (b, dt), (a, -dt), (b, -dt))
    return GatePlan(steps, target, dt * dt, ("comm", a, b))


def sum_compose(prims, a, b, dt):
    """Four pulses realizing exp(i (A + B) dt), i.e. the Hamiltonian -(A + B) for time dt."""
    if dt < 0:
        raise ContractError("dt must be positive")
    target = -(prims[a] + prims[b])
    h = dt / 2
    steps = () if dt == 0 else ((a, -h), (b, -h), (b, -h), (a, -h))
    return GatePlan(steps, target, dt, ("sum", a, b))


def trotter_repeat(plan, t, n_steps, prims=None, weights=None):
    """Rebuild ``plan`` for total time ``t`` as ``n_steps`` repetitions of a shorter block."""
    if n_steps < 1:
        raise ContractError("n_steps must be at least 1")
    if plan.recipe is None:
        raise ContractError("plan has no recipe to refine")
    kind = plan.recipe[0]
    if kind in ("comm", "sum"):
        if prims is None:
            raise ContractError("prims are needed to rebuild a composed plan")
        _, a, b = plan.recipe
        block = commutator_compose(prims, a, b, math.sqrt(t / n_steps)) if kind == "comm" else sum_compose(prims, a, b, t / n_steps)
        steps = block.steps * n_steps
    elif kind == "tree":
        tree = plan.recipe[1]
        steps = tuple(compile_tree(tree, t / n_steps, weights or {})) * n_steps
    else:
        raise ContractError(f"unknown recipe {kind!r}")
    return GatePlan(steps, plan.target, t, plan.recipe)


# ---------------------------------------------------------------------------
# dense evaluation


class _Bank:
    """Cached spectral data for every primitive on one space."""

    def __init__(self, prims, space):
        self.space = space
        self._spec = {}
        for name, poly in prims.items():
            w, v = realize(poly, space).spectrum
            self._spec[name] = (w, v, v.conj().T)

    def pulse(self, name, d):
        w, v, vh = self._spec[name]
        return (v * np.exp(-1j * w * d)) @ vh

    def unitary(self, steps):
        U = np.eye(self.space.dim, dtype=complex)
        for name, d in steps:
            U = self.pulse(name, d) @ U
        return U


def plan_unitary(plan, prims, space):
    plan.check(prims)
    U = _Bank(prims, space).unitary(plan.steps)
    return OperatorMatrix(space, U, {"unitary"})


def probe_states(space):
    """Vacuum, |1>, |alpha=1> and a squeezed vacuum (r=0.3), placed on every mode."""
    from .gates import squeeze_one
    from .fock import apply

    modes = space.mode_indices
    if len(modes) != len(space.factors):
        raise SpaceMismatchError("probe states are defined for mode-only spaces")
    vac = make_vacuum(space)
    fock1 = np.zeros(space.dim, dtype=complex)
    fock1[np.ravel_multi_index((1,) * len(modes), space.dims)] = 1.0
    coh = np.ones(1, dtype=complex)
    for d in space.dims:
        c = coherent_amplitudes(1.0, d)
        coh = np.kron(coh, c / np.linalg.norm(c))
    sq = vac
    for k in modes:
        sq = apply(squeeze_one(space, k, 0.3), sq)
    return {
        "vacuum": vac,
        "fock1": StateVector(space, fock1),
        "coherent1": StateVector(space, coh),
        "squeezed0.3": sq.normalized(),
    }


@dataclass(frozen=True)
class FidelityReport:
    operator_error: float
    fidelities: dict
    step_count: int

    @property
    def mean_fidelity(self):
        return float(np.mean(list(self.fidelities.values())))

    @property
    def min_fidelity(self):
        return float(min(self.fidelities.values()))

    def to_dict(self):
        return {
            "operator_error_leakage_free": self.operator_error,
            "mean_fidelity": self.mean_fidelity,
            "fidelities": dict(self.fidelities),
            "step_count": self.step_count,
        }


def leakage_free_mask(space):
    """Basis states with every mode in the lower half of its ladder."""
    return space.low_mask(max(1, min(space.cutoffs) // 2))


def _report(U, R, space, step_count):
    mask = leakage_free_mask(space)
    diff = (U - R)[np.ix_(mask, mask)]
    op_err = float(np.linalg.norm(diff, 2))
    fids = {}
    for name, psi in probe_states(space).items():
        a = U @ psi.amplitudes
        b = R @ psi.amplitudes
        fids[name] = float(abs(np.vdot(b, a)) ** 2)
    return FidelityReport(op_err, fids, step_count)


def evaluate_plan(plan, prims, space, reference):
    if reference.space != space:
        raise SpaceMismatchError("reference operator lives on a different space")
    U = plan_unitary(plan, prims, space).matrix
    return _report(U, reference.matrix, space, plan.step_count)


# ---------------------------------------------------------------------------
# derivation trees


@dataclass(frozen=True)
class Leaf:
    prim: str
    poly: HermitianPolynomial

    depth = 0

    def label(self):
        return self.prim


@dataclass(frozen=True)
class Comm:
    """Hamiltonian i[left, right]."""

    left: object
    right: object
    poly: HermitianPolynomial

    @property
    def depth(self):
        return 1 + max(self.left.depth, self.right.depth)

    def label(self):
        return f"i[{self.left.label()}, {self.right.label()}]"


@dataclass(frozen=True)
class Lin:
    terms: tuple  # ((Fraction, tree), ...)
    poly: HermitianPolynomial

    @property
    def depth(self):
        return max(t.depth for _, t in self.terms)

    def label(self):
        return " + ".join(f"({c})*{t.label()}" for c, t in self.terms)


def _cost(tree):
    if isinstance(tree, Leaf):
        return 1
    if isinstance(tree, Comm):
        return 2 * (_cost(tree.left) + _cost(tree.right))
    return 2 * sum(_cost(t) for _, t in tree.terms)


def compile_tree(tree, s, weights):
    """Pulse list approximating exp(-i G s) for the tree's Hamiltonian G."""
    if isinstance(tree, Leaf):
        return [(tree.prim, s)]
    if isinstance(tree, Comm):
        left, right = (tree.left, tree.right) if s >= 0 else (tree.right, tree.left)
        s = abs(s)
        if s == 0:
            return []
        wl = weights.get(left.poly, 1.0)
        wr = weights.get(right.poly, 1.0)
        # balance the two pulse areas: wl * dl == wr * dr, dl * dr == s
        dl = math.sqrt(s * wr / wl)
        dr = math.sqrt(s * wl / wr)
        X = compile_tree(left, dl, weights)
        Y = compile_tree(right, dr, weights)
        # operator product Y X Y^-1 X^-1 = exp([A, B] s), listed in application order
        return _merge(_inverse(X) + _inverse(Y) + X + Y)
    if len(tree.terms) == 1:
        c, t = tree.terms[0]
        return compile_tree(t, float(c) * s, weights)
    half = []
    for c, t in tree.terms:
        half += compile_tree(t, float(c) * s / 2, weights)
    second = []
    for c, t in reversed(tree.terms):
        second += compile_tree(t, float(c) * s / 2, weights)
    return _merge(half + second)


class _Span:
    """Exact incremental row echelon form over monomials, ignoring constants."""

    def __init__(self):
        self.rows = []  # (pivot monomial, row dict, combo dict node_index -> Fraction)
        self.nodes = []

    def _reduce(self, vec, combo):
        vec = dict(vec)
        for pivot, row, rcombo in self.rows:
            c = vec.get(pivot)
            if c:
                for m, v in row.items():
                    nv = vec.get(m, Fraction(0)) - c * v
                    if nv:
                        vec[m] = nv
                    else:
                        vec.pop(m, None)
                for j, v in rcombo.items():
                    nv = combo.get(j, Fraction(0)) - c * v
                    if nv:
                        combo[j] = nv
                    else:
                        combo.pop(j, None)
        return vec, combo

    @staticmethod
    def _vec(poly):
        return {m: c for m, c in poly.items() if m}

    def try_add(self, node):
        vec, combo = self._reduce(self._vec(node.poly), {len(self.nodes): Fraction(1)})
        if not vec:
            return False
        pivot = min(vec)
        c = vec[pivot]
        row = {m: v / c for m, v in vec.items()}
        combo = {j: v / c for j, v in combo.items()}
        self.nodes.append(node)
        self.rows.append((pivot, row, combo))
        return True

    def express(self, poly):
        """Coefficients over added nodes with sum c_j poly_j == poly (mod constants), or None."""
        vec, combo = self._reduce(self._vec(poly), {})
        if vec:
            return None
        return {j: -v for j, v in combo.items() if v}


def closure(prims, max_depth=MAX_DEPTH, max_degree=MAX_DEGREE, target=None):
    """Breadth-first commutator closure.

    Returns ``(levels, span, found_depth)`` where ``levels[d]`` lists the
    linearly independent nodes first obtained at nesting depth ``d``.
    """
    span = _Span()
    level0 = []
    for name, poly in prims.items():
        node = Leaf(name, poly)
        if span.try_add(node):
            level0.append(node)
    levels = [level0]
    if target is not None and span.express(target) is not None:
        return levels, span, 0
    for depth in range(1, max_depth + 1):
        older = [n for lvl in levels[:-1] for n in lvl]
        newest = levels[-1]
        pairs = list(itertools.product(older, newest)) + list(itertools.combinations(newest, 2))
        pairs.sort(key=lambda ab: (_cost(ab[0]) + _cost(ab[1]), ab[0].label(), ab[1].label()))
        fresh = []
        for A, B in pairs:
            poly = commutator(A.poly, B.poly)
            if poly.degree() > max_degree or poly.without_constant().is_zero():
                continue
            node = Comm(A, B, poly)
            if span.try_add(node):
                fresh.append(node)
        levels.append(fresh)
        if target is not None and span.express(target) is not None:
            return levels, span, depth
        if not fresh:
            break
    return levels, span, None


def derive(target, prims, max_depth=MAX_DEPTH, max_degree=MAX_DEGREE):
    """Shortest derivation tree for ``target`` (mod constants) as a Lin node."""
    levels, span, depth = closure(prims, max_depth, max_degree, target)
    if depth is None:
        basis = [str(n.poly) for lvl in levels for n in lvl]
        raise ClosureExhaustedError(
            f"target {target} not reachable within depth {max_depth} (max degree {max_degree})", basis
        )
    lower = [n for lvl in levels[:depth] for n in lvl]
    top = levels[depth]
    # fewest nodes from the deepest level first, cheapest first
    for k in range(0, len(top) + 1):
        for subset in itertools.combinations(top, k):
            sub = _Span()
            for n in lower + list(subset):
                sub.try_add(n)
            coeffs = sub.express(target)
            if coeffs is not None:
                terms = tuple((c, sub.nodes[j]) for j, c in sorted(coeffs.items()))
                return Lin(terms, target)
    raise AssertionError("span membership was established but no representation found")


def _weights(tree, space, mask, out):
    if tree.poly not in out:
        M = realize(tree.poly, space).matrix[np.ix_(mask, mask)]
        out[tree.poly] = max(float(np.linalg.norm(M, 2)), 1e-12)
    if isinstance(tree, Comm):
        _weights(tree.left, space, mask, out)
        _weights(tree.right, space, mask, out)
    elif isinstance(tree, Lin):
        for _, t in tree.terms:
            _weights(t, space, mask, out)
    return out


def synthesize(
    target,
    prims,
    t,
    tolerance,
    space=None,
    cutoff=20,
    max_depth=MAX_DEPTH,
    max_degree=MAX_DEGREE,
    step_budget=STEP_BUDGET,
):
    """Plan for exp(-i target t) certified to probe-set mean fidelity >= 1 - tolerance.

    Returns ``(plan, report)``.  Raises ClosureExhaustedError if the target is
    not reachable and StepBudgetError if refinement runs out of steps.
    """
    if isinstance(target, str):
        target = HermitianPolynomial.parse(target)
    if target.degree() > max_degree:
        raise ContractError(f"target degree {target.degree()} exceeds max_degree {max_degree}")
    n_modes = max(prims.n_modes(), max(target.modes(), default=-1) + 1)
    if space is None:
        space = SpaceSignature.modes(*([cutoff] * n_modes))
    tree = derive(target, prims, max_depth, max_degree)
    mask = leakage_free_mask(space)
    weights = _weights(tree, space, mask, {})
    bank = _Bank(prims, space)
    reference = exp_hermitian(realize(target, space), t).matrix
    best = None
    n = 1
    while True:
        block = compile_tree(tree, t / n, weights)
        steps = len(block) * n
        if steps > step_budget and best is not None:
            raise StepBudgetError(
                f"fidelity {best[1].mean_fidelity:.6g} after {best[1].step_count} steps; budget {step_budget}", best
            )
        U = np.linalg.matrix_power(bank.unitary(block), n)
        report = _report(U, reference, space, steps)
        if best is None or report.mean_fidelity > best[1].mean_fidelity:
            best = (n, report)
        if report.mean_fidelity >= 1 - tolerance:
            plan = GatePlan(tuple(block) * n, target, t, ("tree", tree))
            return plan, report
        if steps > step_budget:
            raise StepBudgetError(f"a single block needs {steps} steps; budget {step_budget}", best)
        n *= 2
