from __future__ import annotations

from dataclasses import dataclass

import pytest

from harvestkit import (
    Grid,
    Model,
    SolveReport,
    TransitionKernel,
    build_grid,
    build_kernel,
    make_preset,
    solve,
)

KNEE_COST = {"high": 100.0, "low": 1.02, "knee_start": 1.0, "knee_end": 1.1}


@dataclass
class Solved:
    model: Model
    grid: Grid
    kernel: TransitionKernel
    report: SolveReport


def _solve_case(preset, params, h, bound):
    model = make_preset(preset, params)
    grid = build_grid(h, bound, model.dim)
    kernel = build_kernel(model, grid)
    report = solve(model, grid, kernel)
    assert report.converged
    return Solved(model, grid, kernel, report)


@pytest.fixture(scope="session")
def baseline():
    """Logistic model, stock parameters, h=0.1, U=10."""
    return _solve_case("logistic_1d", {}, 0.1, 10.0)


@pytest.fixture(scope="session")
def baseline_coarse():
    return _solve_case("logistic_1d", {}, 0.2, 10.0)


@pytest.fixture(scope="session")
def baseline_fine():
    return _solve_case("logistic_1d", {}, 0.05, 10.0)


@pytest.fixture(scope="session")
def high_cost():
    """Seeding cost 50 per unit."""
    return _solve_case("logistic_1d", {"g": 50.0}, 0.1, 10.0)


@pytest.fixture(scope="session")
def high_noise():
    return _solve_case("logistic_1d", {"sigma": 1000.0}, 0.1, 10.0)


@pytest.fixture(scope="session")
def knee_cost():
    """Density-dependent seeding cost dropping from 100 to 1.02 across (1, 1.1)."""
    return _solve_case("logistic_1d", {"g": KNEE_COST}, 0.1, 10.0)


@pytest.fixture(scope="session")
def competition():
    return _solve_case("competition_2d", {}, 0.1, 5.0)


@pytest.fixture(scope="session")
def predator_prey():
    return _solve_case("predator_prey_2d", {}, 0.1, 5.0)
