import math

import numpy as np
import pytest
import scipy.linalg

from cvmaser.errors import ClosureExhaustedError, ContractError, StepBudgetError
from cvmaser.fock import SpaceSignature, exp_hermitian
from cvmaser.polynomial import HermitianPolynomial, commutator, p, realize, x
from cvmaser.synthesis import (
    Comm,
    GatePlan,
    Leaf,
    PrimitiveSet,
    closure,
    commutator_compose,
    derive,
    evaluate_plan,
    plan_unitary,
    probe_states,
    sum_compose,
    synthesize,
    trotter_repeat,
)

SP = SpaceSignature.modes(20)


@pytest.fixture(scope="module")
def quad_prims():
    return PrimitiveSet({"A": x(0) * x(0), "B": p(0) * p(0)})


def test_universal_set_contents():
    prims = PrimitiveSet.universal()
    assert sorted(prims) == ["kerr0", "n0", "p0", "x0"]
    assert prims["kerr0"].degree() == 4


def test_commutator_compose_targets_bracket(quad_prims):
    plan = commutator_compose(quad_prims, "A", "B", 0.1)
    assert plan.target == commutator(quad_prims["A"], quad_prims["B"])
    assert plan.total_time == pytest.approx(0.01)
    assert [n for n, _ in plan.steps] == ["A", "B", "A", "B"]


@pytest.mark.parametrize("kind", ["comm", "sum"])
def test_third_order_error(quad_prims, kind):
    A = realize(quad_prims["A"], SP).matrix
    B = realize(quad_prims["B"], SP).matrix
    dts = [0.2, 0.1, 0.05, 0.025]
    errs = []
    for dt in dts:
        if kind == "comm":
            plan = commutator_compose(quad_prims, "A", "B", dt)
            ref = scipy.linalg.expm((A @ B - B @ A) * dt * dt)
        else:
            plan = sum_compose(quad_prims, "A", "B", dt)
            ref = scipy.linalg.expm(1j * (A + B) * dt)
        errs.append(np.abs(plan_unitary(plan, quad_prims, SP).matrix - ref).max())
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert abs(slope - 3) <= 0.3


def test_sum_compose_target(quad_prims):
    plan = sum_compose(quad_prims, "A", "B", 0.05)
    assert plan.target == -(quad_prims["A"] + quad_prims["B"])


def test_negative_dt_rejected(quad_prims):
    with pytest.raises(ContractError):
        commutator_compose(quad_prims, "A", "B", -0.1)


def test_trotter_repeat_converges(quad_prims):
    base = commutator_compose(quad_prims, "A", "B", 0.1)
    ref = exp_hermitian(realize(base.target, SP), 0.04)
    fids = []
    for n in (1, 4, 16):
        plan = trotter_repeat(base, 0.04, n, quad_prims)
        assert plan.step_count == 4 * n
        fids.append(evaluate_plan(plan, quad_prims, SP, ref).mean_fidelity)
    assert fids[0] < fids[1] < fids[2]


def test_plan_round_trip():
    plan = GatePlan((("x0", 0.1), ("p0", -0.2)), x(0) * p(0), 0.3)
    back = GatePlan.from_dict(plan.to_dict())
    assert back.steps == plan.steps and back.target == plan.target


def test_plan_uses_registered_primitives():
    with pytest.raises(ContractError):
        GatePlan((("q9", 0.1),), x(0), 0.1).check(PrimitiveSet.universal())


def test_derivation_for_cubic():
    tree = derive(x(0) ** 3, PrimitiveSet.universal())
    assert tree.poly == x(0) ** 3
    assert tree.depth == 3


def test_closure_levels_are_independent():
    levels, span, _ = closure(PrimitiveSet.universal(), max_depth=2)
    nodes = [n for lvl in levels for n in lvl]
    assert len({n.poly for n in nodes}) == len(nodes)
    assert all(isinstance(n, (Leaf, Comm)) for n in nodes)


def test_target_in_primitives_gives_one_step():
    plan, report = synthesize("x0^2 + p0^2", PrimitiveSet.universal(), 0.3, 1e-6)
    assert plan.step_count == 1
    assert report.mean_fidelity > 1 - 1e-9


def test_flagship_cubic():
    prims = PrimitiveSet.universal()
    plan, report = synthesize("x0^3", prims, 0.05, 1e-2)
    assert report.mean_fidelity >= 0.99
    assert plan.step_count <= 100_000
    assert set(report.fidelities) == set(probe_states(SP))
    assert {n for n, _ in plan.steps} <= set(prims)


def test_sum_of_primitives():
    prims = PrimitiveSet({"x2": x(0) * x(0), "p2": p(0) * p(0)})
    plan, report = synthesize("x0^2 + p0^2", prims, 0.2, 1e-4)
    assert report.mean_fidelity >= 1 - 1e-4


def test_closure_exhausted_lists_basis():
    prims = PrimitiveSet({"x0": x(0), "p0": p(0)})
    with pytest.raises(ClosureExhaustedError) as info:
        synthesize("x0^6", prims, 0.1, 1e-2, max_depth=2)
    assert "x0" in info.value.reachable


def test_step_budget():
    with pytest.raises(StepBudgetError) as info:
        synthesize("x0^3", PrimitiveSet.universal(), 0.05, 1e-8, step_budget=200)
    assert info.value.best is not None


def test_degree_cap():
    with pytest.raises(ContractError):
        synthesize(HermitianPolynomial.parse("x0^7"), PrimitiveSet.universal(), 0.1, 1e-2)


def test_identity_plan_baseline_is_worse():
    prims = PrimitiveSet.universal()
    ref = exp_hermitian(realize(x(0) ** 3, SP), 0.05)
    idle = evaluate_plan(GatePlan((), x(0) ** 3, 0.05), prims, SP, ref)
    _, report = synthesize("x0^3", prims, 0.05, 1e-2)
    assert report.mean_fidelity > idle.mean_fidelity
    assert math.isfinite(idle.operator_error)
