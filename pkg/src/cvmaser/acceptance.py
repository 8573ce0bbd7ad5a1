"""Acceptance suite: twelve end-to-end checks with stated tolerances and runtime budgets.

Each check returns ``(passed, detail)``; ``run_all`` adds timing and applies
the runtime budget.  ``flip_convention`` swaps the Fourier gate for its
inverse, a negative control that must turn the eigenphase row red.
"""

from __future__ import annotations

import contextlib
import filecmp
import io
import math
import os
import tempfile
import time
import warnings
from dataclasses import dataclass
from importlib import resources

import numpy as np
import scipy.linalg

from .fock import (
    SpaceSignature,
    StateVector,
    apply,
    exp_hermitian,
    expectation,
    make_vacuum,
    number_op,
    quadrature_ops,
    variance,
)
from .gates import displace_x, displace_z, fourier, squeeze_one, squeeze_two
from .maser import (
    BeamConfig,
    JCParams,
    PumpConfig,
    ThreeLevelConfig,
    beam_statistics,
    dispersive_phase_error,
    fourier_via_dispersive,
    jc_evolve,
    one_atom_probability,
    pump_records,
    rabi_probability,
    sample_arrivals,
    two_mode_effective_raw,
)
from .phase_space import GridSpec, contour_aspect_ratio, husimi_q, q_summary
from .polynomial import p, realize, x
from .synthesis import (
    GatePlan,
    PrimitiveSet,
    commutator_compose,
    evaluate_plan,
    plan_unitary,
    sum_compose,
    synthesize,
)


@dataclass(frozen=True)
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str
    runtime: float
    budget: float

    @property
    def line(self):
        status = "PASS" if self.passed else "FAIL"
        budget = f"{self.budget:g}s" if math.isfinite(self.budget) else "-"
        return f"[{status}] {self.number:2d} {self.name:28s} {self.runtime:7.2f}s/{budget:>5s}  {self.detail}"


# ---------------------------------------------------------------------------
# individual criteria


def check_fourier_eigenphases(flip_convention=False):
    cutoff = 32
    space = SpaceSignature.modes(cutoff)
    t = -math.pi / 2 if flip_convention else math.pi / 2
    F = fourier(space, 0, t).matrix
    n = np.arange(cutoff)
    want = 1j ** (n + 1)
    phase_err = float(np.max(np.abs(np.angle(np.diag(F) / want))))
    off = float(np.max(np.abs(F - np.diag(np.diag(F)))))
    ok = phase_err <= 1e-12 and off <= 1e-12
    return ok, f"max phase error {phase_err:.2e}, off-diagonal {off:.1e} (cutoff {cutoff})"


def check_beam_statistics():
    b = BeamConfig(10.0, 0.03, 300.0)
    p1 = one_atom_probability(b)
    duration = 1e4  # about 1e5 arrivals at rate 10
    times = sample_arrivals(b, duration, 20240601)
    st = beam_statistics(b, times, duration)
    z = (st.close_gap_fraction - st.close_gap_expected) / st.close_gap_sigma
    ok = abs(p1 - 0.998) <= 5e-4 and abs(z) <= 3 and len(times) >= 1e5 * 0.98
    return ok, (
        f"P1 {p1:.6f}; gap<L/v fraction {st.close_gap_fraction:.6f} vs {st.close_gap_expected:.6f} "
        f"(z={z:+.2f}, {st.count} arrivals)"
    )


def product_formula_slopes(cutoff=20, dts=(0.2, 0.1, 0.05, 0.025)):
    """Log-log slopes of max-norm errors for the commutator and sum compositions."""
    space = SpaceSignature.modes(cutoff)
    prims = PrimitiveSet({"A": x(0) * x(0), "B": p(0) * p(0)})
    A = realize(prims["A"], space).matrix
    B = realize(prims["B"], space).matrix
    errs = {"commutator": [], "sum": []}
    for dt in dts:
        U = plan_unitary(commutator_compose(prims, "A", "B", dt), prims, space).matrix
        errs["commutator"].append(np.abs(U - scipy.linalg.expm((A @ B - B @ A) * dt * dt)).max())
        U = plan_unitary(sum_compose(prims, "A", "B", dt), prims, space).matrix
        errs["sum"].append(np.abs(U - scipy.linalg.expm(1j * (A + B) * dt)).max())
    return {k: float(np.polyfit(np.log(dts), np.log(v), 1)[0]) for k, v in errs.items()}, errs


def check_product_formulas():
    slopes, _ = product_formula_slopes()
    ok = all(abs(s - 3) <= 0.3 for s in slopes.values())
    return ok, f"slopes commutator {slopes['commutator']:.3f}, sum {slopes['sum']:.3f} (want 3 +- 0.3)"


def leakage_free_block(U, edge=2, tol=1e-12):
    """Number of low Fock levels n whose images U|n> keep edge population below ``tol``."""
    leak = (np.abs(U[-edge:, :]) ** 2).sum(axis=0)
    bad = np.nonzero(leak > tol)[0]
    return int(bad[0]) if bad.size else U.shape[0]


def squeeze_action_residual(r, theta, cutoff=60):
    """max |S^dag a S - (e^r x_theta + i e^-r p_theta)| on the leakage-free block.

    Also returns the block size and the phase phi minimizing the residual of
    S^dag a S - e^{i phi} (...), which separates a pure phase mismatch from
    a real failure.
    """
    space = SpaceSignature.modes(cutoff)
    S = squeeze_one(space, 0, r * np.exp(1j * theta)).matrix
    a = np.diag(np.sqrt(np.arange(1, cutoff)), 1).astype(complex)
    xt, pt = quadrature_ops(space, 0, theta)
    # a S|n> needs S|n> away from the edge, and so does the row side
    block = min(leakage_free_block(S), leakage_free_block(S.conj().T)) - 1
    lo = slice(0, block)
    lhs = (S.conj().T @ a @ S)[lo, lo]
    rhs = (math.exp(r) * xt.matrix + 1j * math.exp(-r) * pt.matrix)[lo, lo]
    k = np.vdot(rhs, lhs)
    phased = float(np.abs(lhs - (k / abs(k)) * rhs).max())
    return float(np.abs(lhs - rhs).max()), block, float(np.angle(k)), phased


def check_squeezing_law():
    space = SpaceSignature.modes(40)
    psi = apply(squeeze_one(space, 0, 0.5), make_vacuum(space))
    xq, pq = quadrature_ops(space, 0)
    vx, vp = variance(xq, psi), variance(pq, psi)
    ok = abs(vp - math.exp(-1) / 4) <= 1e-6 and abs(vx * vp - 1 / 16) <= 1e-7
    parts = [f"var(p) {vp:.8f} (want {math.exp(-1) / 4:.8f}), product {vx * vp:.10f}"]
    for theta in (0.0, math.pi / 4):
        res, block, phase, phased = squeeze_action_residual(0.3, theta)
        ok = ok and res <= 1e-6
        parts.append(
            f"action(r=0.3, theta={theta:.4f}) residual {res:.1e} on {block} levels"
            + (f" (matches after phase {phase:+.4f}: {phased:.1e})" if res > 1e-6 else "")
        )
    return ok, "; ".join(parts)


def check_two_mode_correlations():
    space = SpaceSignature.modes(12, 12)
    psi = apply(squeeze_two(space, 0, 1, 0.3), make_vacuum(space))
    x1, p1 = quadrature_ops(space, 0)
    x2, p2 = quadrature_ops(space, 1)
    combos = {
        "x1+x2": x1 + x2,
        "x1-x2": x1 - x2,
        "p1+p2": p1 + p2,
        "p1-p2": p1 - p2,
    }
    vs = {k: variance(v, psi) for k, v in combos.items()}
    squeezed = min(vs, key=vs.get)
    want = 0.5 * math.exp(-0.6)
    ns = [expectation(number_op(space, k), psi).real for k in (0, 1)]
    ok = abs(vs[squeezed] - want) <= 1e-5 and all(abs(n - math.sinh(0.3) ** 2) <= 1e-6 for n in ns)
    return ok, (
        f"var({squeezed}) {vs[squeezed]:.8f} (want {want:.8f}); <N> {ns[0]:.8f}, {ns[1]:.8f} "
        f"(want {math.sinh(0.3) ** 2:.8f})"
    )


def check_rabi_oracle():
    params = JCParams(1.0, 1.0, 1.0)
    worst = 0.0
    for n in (0, 1, 2):
        cutoff = n + 3
        space = SpaceSignature.atom_field(cutoff)
        psi = np.zeros(space.dim, dtype=complex)
        psi[n] = 1.0  # |e, n>
        state = StateVector(space, psi)
        # 2x2 block {|e,n>, |g,n+1>} on resonance, diagonalized directly
        c = params.g * math.sqrt(n + 1)
        w, v = np.linalg.eigh(np.array([[0.0, c], [c, 0.0]]))
        for gt in np.linspace(0, 2 * math.pi, 41):
            out = jc_evolve(state, params, gt)
            p_g = abs(out.amplitudes[cutoff + n + 1]) ** 2
            block = (v * np.exp(-1j * w * gt)) @ v.conj().T
            worst = max(worst, abs(p_g - abs(block[1, 0]) ** 2), abs(p_g - rabi_probability(params, n, gt)))
    return worst <= 1e-8, f"max deviation {worst:.2e} over n<=2, gt in [0, 2pi]"


def check_dispersive_fourier():
    t, U = fourier_via_dispersive(1.0, 10.0, 32)
    err = float(np.abs(U.matrix - fourier(U.space, 0).matrix).max())
    params = JCParams(55.0, 5.0, 1.0)  # Delta = 50 g
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        phase = max(dispersive_phase_error(params, n, s) for n in range(4) for s in np.linspace(0, 1, 21))
    return err <= 1e-10 and phase <= 2e-3, f"|U-F|max {err:.1e} at t={t:.4f}; JC vs dispersive phase {phase:.2e} (Delta=50g)"


def check_pump_steady_state():
    cutoff, atoms = 30, 500
    rho0 = make_vacuum(SpaceSignature.modes(cutoff)).to_density()
    _, rec = pump_records(rho0, PumpConfig(epsilon=0.05), atoms)
    vp = [r.var_p for r in rec]
    _, ctrl = pump_records(rho0, PumpConfig(epsilon=0.0), atoms)
    vc = [r.var_p for r in ctrl]
    ok = min(vp) < 0.25 and min(vc) >= 0.25 - 1e-6
    k = int(np.argmin(vp))
    return ok, (
        f"eps=0.05 min var(p) {vp[k]:.4f} at atom {k + 1}, final {vp[-1]:.4f}; "
        f"eps=0 min {min(vc):.4f}, final {vc[-1]:.4f}"
    )


EFFECTIVE_CONFIG = ThreeLevelConfig(1.0, 1.0, 1.0, 20.0, 30.0, 10.0)


def check_effective_two_mode():
    cutoffs = (8, 8)
    H = two_mode_effective_raw(EFFECTIVE_CONFIG, cutoffs)
    m = H.matrix
    herm = float(np.abs(m - m.conj().T).max())
    D = number_op(H.space, 0).matrix - number_op(H.space, 1).matrix
    comm = float(np.abs(m @ D - D @ m).max())
    psi = apply(exp_hermitian(H.hermitian(), 20.0), make_vacuum(H.space))
    x1, _ = quadrature_ops(H.space, 0)
    x2, _ = quadrature_ops(H.space, 1)
    vplus, vminus = variance(x1 + x2, psi), variance(x1 - x2, psi)
    ok = herm <= 1e-12 and comm <= 1e-10 and min(vplus, vminus) < 0.5
    return ok, f"hermiticity {herm:.1e}, [H, N1-N2] {comm:.1e}, var(x1+x2) {vplus:.4f}, var(x1-x2) {vminus:.4f} at t=20"


def check_universality_flagship():
    prims = PrimitiveSet.universal(0)
    plan, rep = synthesize("x0^3", prims, 0.05, 1e-2, cutoff=20, step_budget=100_000)
    space = SpaceSignature.modes(20)
    ref = exp_hermitian(realize(plan.target, space), 0.05)
    baseline = evaluate_plan(GatePlan((), plan.target, 0.05), prims, space, ref)
    fine, fine_rep = synthesize("x0^3", prims, 0.05, 1e-4, cutoff=20, step_budget=100_000)
    ok = rep.mean_fidelity >= 0.99 and plan.step_count <= 100_000 and fine_rep.mean_fidelity >= 1 - 1e-4
    return ok, (
        f"fidelity {rep.mean_fidelity:.5f} in {plan.step_count} steps (do-nothing {baseline.mean_fidelity:.5f}); "
        f"refined {fine_rep.mean_fidelity:.6f} in {fine.step_count} steps"
    )


def _argmax(state, grid):
    return q_summary(husimi_q(state, 0, grid)).argmax


def check_phase_space_figures():
    space = SpaceSignature.modes(30)
    vac = make_vacuum(space)
    grid = GridSpec.square(4.0, 81)
    cell = (grid.x_range[1] - grid.x_range[0]) / (grid.x_range[2] - 1)
    shifted = apply(displace_x(space, 0, 1.0), vac)
    boosted = apply(displace_z(space, 0, 1.0), vac)
    rotated = apply(fourier(space, 0), shifted)
    checks = {
        "X(1)": (_argmax(shifted, grid), (1.0, 0.0)),
        "Z(1)": (_argmax(boosted, grid), (0.0, 1.0)),
        "F X(1)": (_argmax(rotated, grid), (0.0, 1.0)),
    }
    ok_peaks = all(max(abs(a - b) for a, b in zip(got, want)) <= cell for got, want in checks.values())
    r = 0.5
    sq_space = SpaceSignature.modes(40)
    sq = apply(squeeze_one(sq_space, 0, r), make_vacuum(sq_space))
    q = husimi_q(sq, 0, GridSpec.square(5.0, 161))
    aspect = contour_aspect_ratio(q)
    ev = np.linalg.eigvalsh(q_summary(q).second_moments)
    ok_aspect = abs(aspect / math.exp(2 * r) - 1) <= 0.10
    peaks = ", ".join(f"{k} peak ({g[0]:+.2f},{g[1]:+.2f})" for k, (g, _) in checks.items())
    return ok_peaks and ok_aspect, (
        f"{peaks}; squeezed contour aspect {aspect:.3f} vs e^2r {math.exp(2 * r):.3f} "
        f"(Q variance ratio {ev[-1] / ev[0]:.3f}, e^r {math.exp(r):.3f})"
    )


def example_circuits():
    root = resources.files("cvmaser") / "circuits"
    return sorted(str(p) for p in root.iterdir() if p.name.endswith(".json"))


def _run_twice(path):
    from .cli import main

    with tempfile.TemporaryDirectory() as tmp:
        dirs = [os.path.join(tmp, "a"), os.path.join(tmp, "b")]
        for d in dirs:
            with contextlib.redirect_stdout(io.StringIO()):
                code = main(["run", path, "-o", d])
            if code != 0:
                return False, f"exit {code}"
        names = sorted(os.listdir(dirs[0]))
        if names != sorted(os.listdir(dirs[1])):
            return False, "different file sets"
        _, mismatch, errors = filecmp.cmpfiles(dirs[0], dirs[1], names, shallow=False)
        return not mismatch and not errors, f"{len(names)} files"


def check_determinism():
    paths = example_circuits()
    bad = []
    n_files = 0
    for path in paths:
        ok, info = _run_twice(path)
        if not ok:
            bad.append(f"{os.path.basename(path)}: {info}")
        else:
            n_files += int(info.split()[0])
    if not paths:
        return False, "no shipped example circuits found"
    if bad:
        return False, "; ".join(bad)
    return True, f"{len(paths)} circuits, {n_files} artifacts byte-identical across two runs"


# ---------------------------------------------------------------------------

CRITERIA = [
    (1, "Fourier eigenphases", check_fourier_eigenphases, 1.0),
    (2, "Beam statistics", check_beam_statistics, 5.0),
    (3, "Product-formula orders", check_product_formulas, 30.0),
    (4, "Squeezing law", check_squeezing_law, 10.0),
    (5, "Two-mode correlations", check_two_mode_correlations, 10.0),
    (6, "Jaynes-Cummings oracle", check_rabi_oracle, 10.0),
    (7, "Dispersive-to-Fourier", check_dispersive_fourier, 20.0),
    (8, "Pump steady state", check_pump_steady_state, 120.0),
    (9, "Effective two-mode", check_effective_two_mode, 30.0),
    (10, "Universality flagship", check_universality_flagship, 300.0),
    (11, "Phase-space figures", check_phase_space_figures, 30.0),
    (12, "Determinism", check_determinism, math.inf),
]


def run_check(number, flip_convention=False):
    _, name, fn, budget = CRITERIA[number - 1]
    t0 = time.perf_counter()
    if number == 1:
        passed, detail = fn(flip_convention)
    else:
        passed, detail = fn()
    elapsed = time.perf_counter() - t0
    if elapsed > budget:
        passed = False
        detail += f"; over runtime budget {budget:g}s"
    return CheckResult(number, name, bool(passed), detail, elapsed, budget)


def run_all(only=None, flip_convention=False):
    numbers = [c[0] for c in CRITERIA] if only is None else list(only)
    for n in numbers:
        if not 1 <= n <= len(CRITERIA):
            raise ValueError(f"no acceptance criterion {n}")
    return [run_check(n, flip_convention) for n in numbers]


def format_table(results):
    lines = [r.line for r in results]
    total = sum(r.runtime for r in results)
    passed = sum(r.passed for r in results)
    lines.append(f"{passed}/{len(results)} criteria passed in {total:.1f}s")
    return "\n".join(lines)
