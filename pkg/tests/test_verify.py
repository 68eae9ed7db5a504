from __future__ import annotations

import json

import numpy as np
import pytest

from harvestkit import (
    Strategy,
    audit_inequalities,
    build_grid,
    build_kernel,
    current_harvest_potential,
    hjb_residuals,
    make_preset,
    residual_checks,
    residual_tolerance,
    simulate_path,
)


def test_converged_solution_satisfies_complementarity(baseline):
    res = hjb_residuals(baseline.model, baseline.grid, baseline.kernel, baseline.report.value)
    tol = residual_tolerance(res, baseline.report.tolerance)
    sub, _ = res.subsolution_worst()
    sup, _ = res.supersolution_worst()
    assert sub <= tol
    assert sup >= -tol
    assert all(c.passed for c in residual_checks(res, tol))


def test_residual_tolerance_formula(baseline):
    res = hjb_residuals(baseline.model, baseline.grid, baseline.kernel, baseline.report.value)
    assert residual_tolerance(res, 1e-8) == pytest.approx(1e-7 / res.dt_min)
    # smallest interpolation interval sits at the largest state
    q_top = 100.0 + 0.1 * abs(10.0 * (3.0 - 20.0))  # a + h|b| at x = 10
    assert res.dt_min <= 0.01 / q_top * 1.2


def test_initializer_is_detected_as_non_solution(baseline):
    v0 = current_harvest_potential(baseline.model, baseline.grid)
    res = hjb_residuals(baseline.model, baseline.grid, baseline.kernel, v0)
    tol = residual_tolerance(res, baseline.report.tolerance)
    sub, _ = res.subsolution_worst()
    assert sub > 10 * tol


def test_degenerate_states_use_the_vanishing_generator(baseline):
    res = hjb_residuals(baseline.model, baseline.grid, baseline.kernel, baseline.report.value)
    assert res.degenerate[0]
    v0 = baseline.report.value[0]
    assert res.diffusion[0] == pytest.approx(-baseline.model.discount * v0)


def test_forced_states_audit_only_the_forced_action(competition):
    res = hjb_residuals(competition.model, competition.grid, competition.kernel,
                        competition.report.value)
    grid = competition.grid
    s = grid.flat_of_state([5.0, 2.0])
    assert np.isnan(res.diffusion[s])
    assert np.isnan(res.seed[s]).all()
    assert np.isnan(res.harvest[s, 1])
    # the forced action is the chosen one, so its residual vanishes up to
    # the value-iteration stopping slack (~tolerance / h)
    assert res.harvest[s, 0] == pytest.approx(0.0, abs=1e-6)


def test_single_state_grid_yields_empty_residuals():
    m = make_preset("logistic_1d")
    grid = build_grid(0.1, 0.0, 1)
    kernel = build_kernel(m, grid)
    res = hjb_residuals(m, grid, kernel, np.zeros(1))
    assert res.defined_count == 0
    sub, where = res.subsolution_worst()
    assert where is None
    assert all(c.passed for c in residual_checks(res, 1.0))


@pytest.mark.parametrize("case", ["baseline", "competition", "predator_prey"])
def test_audit_passes_on_converged_solutions(case, request):
    solved = request.getfixturevalue(case)
    audit = audit_inequalities(solved.model, solved.grid, solved.report, pairs=10_000, seed=17)
    assert audit.passed, audit.to_text()


def test_audit_reports_are_deterministic(baseline):
    a = audit_inequalities(baseline.model, baseline.grid, baseline.report, pairs=500, seed=3)
    b = audit_inequalities(baseline.model, baseline.grid, baseline.report, pairs=500, seed=3)
    assert a.to_dict() == b.to_dict()


def test_audit_serializes(baseline):
    audit = audit_inequalities(baseline.model, baseline.grid, baseline.report, pairs=200, seed=1)
    doc = json.loads(audit.to_json())
    assert doc["passed"] is True
    names = {c["name"] for c in doc["checks"]}
    assert {"gradient-sandwich", "pairwise-value-bound", "lipschitz-bound",
            "linear-growth-slack", "policy-structure", "boundary-forcing"} <= names
    assert "gradient-sandwich" in audit.to_text()


def test_bumped_value_field_is_caught_and_located(baseline):
    import dataclasses

    bumped = baseline.report.value.copy()
    s = baseline.grid.flat_of_state([3.0])
    bumped[s] += 1.0
    report = dataclasses.replace(baseline.report, value=bumped)
    audit = audit_inequalities(baseline.model, baseline.grid, report, pairs=10_000, seed=5)
    sandwich = audit.check("gradient-sandwich")
    pairwise = audit.check("pairwise-value-bound")
    assert not (sandwich.passed and pairwise.passed)
    offender = sandwich if not sandwich.passed else pairwise
    assert offender.worst_state is not None
    assert abs(offender.worst_state[0] - 3.0) <= 2 * baseline.grid.h


def test_zeroed_boundary_policy_fails_forcing_check(competition):
    import dataclasses

    policy = competition.report.policy.copy()
    top = competition.grid.flat_of_state([5.0, 1.0])
    policy[top] = 0
    report = dataclasses.replace(competition.report, policy=policy)
    audit = audit_inequalities(competition.model, competition.grid, report, pairs=100, seed=0)
    check = audit.check("boundary-forcing")
    assert not check.passed
    assert check.worst_state == pytest.approx((5.0, 1.0))


@pytest.mark.parametrize("where", [0.0, 0.5, 5.0, 10.0])
def test_small_fault_injection_is_detected(baseline, where):
    value = baseline.report.value.copy()
    value[baseline.grid.flat_of_state([where])] += 1e-3
    res = hjb_residuals(baseline.model, baseline.grid, baseline.kernel, value)
    tol = residual_tolerance(res, baseline.report.tolerance)
    assert not all(c.passed for c in residual_checks(res, tol))


def test_one_at_a_time_on_simulated_paths(predator_prey):
    strat = Strategy.from_policy(predator_prey.report.policy, predator_prey.grid)
    path = simulate_path(predator_prey.model, strat, [2.0, 2.0], 1.0, 1e-3, seed=13)
    for _, code in path.controls:
        assert code in (-2, -1, 1, 2)
    # cumulative processes move one species at a time
    steps = np.diff(np.column_stack([path.harvest, path.seeding]), axis=0)
    assert steps.min() >= 0.0
