"""Batch command line: solve / simulate / verify / sweep over scenario files.

Exit codes: 0 success, 1 input or validation error, 2 non-convergence
(or, for ``verify``, a failed audit). Set HARVESTKIT_THREADS to parallelize
Monte-Carlo path generation; results are identical for any thread count.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .grid import GridError, build_grid
from .kernel import KernelError, build_kernel
from .model import ModelError, validate
from .scenario import Scenario, ScenarioError
from .simulate import SimOptions, SimulationError, Strategy, estimate_value
from .solver import SolveOptions, SolverError, solve
from .verify import audit_inequalities, hjb_residuals, residual_checks, residual_tolerance

_INPUT_ERRORS = (ScenarioError, ModelError, GridError, KernelError, SolverError,
                 SimulationError, OSError, ValueError)


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


def _load(scenario_path) -> Scenario:
    return Scenario.load(scenario_path)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _coord_header(dim: int) -> list[str]:
    return [f"x{i + 1}" for i in range(dim)]


def _validated_build(sc: Scenario):
    model, grid = sc.build()
    report = validate(model, grid.bound, grid.h)
    failed = [c for c in report.checks if c.blocking and not c.passed]
    if failed:
        names = ", ".join(c.name for c in failed)
        raise ModelError(f"model fails assumption check(s): {names}\n{report.summary()}")
    return model, grid


def _solve_scenario(sc: Scenario):
    model, grid = _validated_build(sc)
    kernel = build_kernel(model, grid)
    opts = SolveOptions(
        tolerance=sc.solver.tolerance,
        max_iters=sc.solver.max_iters,
        sweep=sc.solver.sweep,
    )
    return model, grid, kernel, solve(model, grid, kernel, opts)


def run_solve(scenario_path) -> int:
    """Solve and write value.csv, policy.csv, solve_report.json."""
    try:
        sc = _load(scenario_path)
        model, grid, kernel, report = _solve_scenario(sc)
    except _INPUT_ERRORS as err:
        return _fail(str(err))
    out = sc.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    pts = grid.points()
    _write_csv(out / "value.csv", _coord_header(grid.dim) + ["value"],
               (list(p) + [v] for p, v in zip(pts, report.value)))
    _write_csv(out / "policy.csv", _coord_header(grid.dim) + ["action"],
               (list(p) + [int(a)] for p, a in zip(pts, report.policy)))
    diag = {
        "converged": report.converged,
        "iterations": report.iterations,
        "final_increment": report.final_increment,
        "tolerance": report.tolerance,
        "sweep": report.sweep,
        "wall_time": report.wall_time,
        "states": grid.n_states,
        "clamped_states": int(report.clamped_states.sum()),
    }
    (out / "solve_report.json").write_text(json.dumps(diag, indent=2) + "\n", encoding="utf-8")
    if not report.converged:
        print(f"not converged after {report.iterations} sweeps "
              f"(increment {report.final_increment:.3g})", file=sys.stderr)
        return 2
    print(f"solved {grid.n_states} states in {report.iterations} sweeps "
          f"({report.wall_time:.2f}s); outputs in {out}")
    return 0


def _read_solution(sc: Scenario, grid):
    out = sc.output_dir()
    value_path = out / "value.csv"
    policy_path = out / "policy.csv"
    if not value_path.exists() or not policy_path.exists():
        raise ScenarioError(f"no solve outputs in {out}; run 'solve' first")
    value = np.loadtxt(value_path, delimiter=",", skiprows=1, ndmin=2)[:, -1]
    policy = np.loadtxt(policy_path, delimiter=",", skiprows=1, ndmin=2)[:, -1].astype(np.int64)
    if value.shape[0] != grid.n_states or policy.shape[0] != grid.n_states:
        raise ScenarioError("solve outputs do not match the scenario grid")
    return value, policy


def run_simulate(scenario_path, x0) -> int:
    """Monte-Carlo estimate at x0 against the stored solution; estimate.csv."""
    try:
        sc = _load(scenario_path)
        model, grid = _validated_build(sc)
        value, policy = _read_solution(sc, grid)
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        if x0.shape != (grid.dim,):
            raise ScenarioError(f"x0 must have {grid.dim} coordinates, got {x0.shape[0]}")
        if np.any(x0 < 0) or np.any(x0 > grid.bound):
            raise ScenarioError(f"x0 {tuple(x0)} outside [0, {grid.bound}]^{grid.dim}")
        strategy = Strategy.from_policy(policy, grid)
        est = estimate_value(model, strategy, x0, SimOptions(
            paths=sc.simulate.paths,
            horizon=sc.simulate.horizon,
            dt=sc.simulate.dt,
            base_seed=sc.simulate.seed,
        ))
    except _INPUT_ERRORS as err:
        return _fail(str(err))
    nearest = int(grid.nearest_flat(x0))
    solver_value = float(value[nearest])
    discrepancy = abs(est.mean - solver_value)
    x0 = tuple(float(v) for v in x0)
    out = sc.output_dir()
    _write_csv(
        out / "estimate.csv",
        _coord_header(grid.dim) + ["mc_mean", "mc_stderr", "truncation_bound",
                                   "solver_value", "discrepancy", "paths"],
        [list(x0) + [est.mean, est.stderr, est.truncation_bound,
                     solver_value, discrepancy, est.paths]],
    )
    print(f"x0={tuple(x0)}: estimate {est.mean:.6g} +- {est.stderr:.2g}, "
          f"solver {solver_value:.6g}, discrepancy {discrepancy:.3g}")
    return 0


def run_verify(scenario_path) -> int:
    """Audit the stored solution; writes audit.json and audit.txt."""
    try:
        sc = _load(scenario_path)
        model, grid = _validated_build(sc)
        value, policy = _read_solution(sc, grid)
        kernel = build_kernel(model, grid)
        residuals = hjb_residuals(model, grid, kernel, value)
        tol = residual_tolerance(residuals, sc.solver.tolerance)
        from .solver import SolveReport  # local import to keep module load light

        report = SolveReport(
            grid=grid, value=value, policy=policy, iterations=0,
            final_increment=0.0, converged=True, tolerance=sc.solver.tolerance,
            sweep=sc.solver.sweep, wall_time=0.0, clamped_states=kernel.clamped.copy(),
        )
        audit = audit_inequalities(model, grid, report, pairs=10_000, seed=sc.simulate.seed)
    except _INPUT_ERRORS as err:
        return _fail(str(err))
    checks = residual_checks(residuals, tol) + list(audit.checks)
    doc = {
        "passed": all(c.passed for c in checks),
        "residual_tolerance": tol,
        "inequality_tolerance": audit.tolerance,
        "checks": [c.to_dict() for c in checks],
    }
    out = sc.output_dir()
    (out / "audit.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    lines = [f"audit: {'pass' if doc['passed'] else 'FAIL'}"]
    for c in checks:
        status = "pass" if c.passed else "FAIL"
        lines.append(f"  {c.name}: {status}; {c.detail}")
    (out / "audit.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return 0 if doc["passed"] else 2


def run_sweep(scenario_path, h_list) -> int:
    """Re-solve at each h and report sup-norm gaps between refinements."""
    try:
        sc = _load(scenario_path)
        if not h_list:
            raise ScenarioError("sweep needs at least one h")
        model, _ = _validated_build(sc)
        rows = []
        prev = None  # (grid, value)
        for h in h_list:
            grid = build_grid(h, sc.grid.bound, model.dim)
            kernel = build_kernel(model, grid)
            report = solve(model, grid, kernel, SolveOptions(
                tolerance=sc.solver.tolerance,
                max_iters=sc.solver.max_iters,
                sweep=sc.solver.sweep,
            ))
            if not report.converged:
                raise SolverError(f"h={h}: not converged within {sc.solver.max_iters} sweeps")
            gap = float("nan")
            if prev is not None:
                gap = _refinement_gap(prev[0], prev[1], grid, report.value)
            rows.append([h, grid.n_states, report.iterations, gap])
            prev = (grid, report.value)
    except _INPUT_ERRORS as err:
        return _fail(str(err))
    out = sc.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "sweep.csv", ["h", "states", "iterations", "sup_diff_from_previous"], rows)
    for row in rows:
        gap = "" if np.isnan(row[3]) else f" sup-diff {row[3]:.6g}"
        print(f"h={row[0]}: {row[1]} states, {row[2]} sweeps{gap}")
    return 0


def _refinement_gap(coarse_grid, coarse_value, fine_grid, fine_value) -> float:
    """sup |V_coarse - V_fine| over the coarse states present in the fine grid."""
    pts = coarse_grid.points()
    k = np.rint(pts / fine_grid.h).astype(np.int64)
    on_fine = np.all(np.abs(k * fine_grid.h - pts) <= 1e-9, axis=1) & np.all(
        k < fine_grid.n_per_axis, axis=1
    )
    if not on_fine.any():
        raise ScenarioError("refinement grids share no states; use nested h values")
    strides = np.array(fine_grid.strides, dtype=np.int64)
    fine_flat = (k[on_fine] * strides).sum(axis=1)
    return float(np.max(np.abs(coarse_value[on_fine] - fine_value[fine_flat])))


def _parse_coords(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.replace(" ", "").split(",") if tok != ""]
    except ValueError:
        raise ScenarioError(f"could not parse coordinates from {text!r}") from None


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="harvestkit",
        description="Optimal harvesting-seeding solver for stochastic population models.",
        epilog="Exit codes: 0 ok, 1 input error, 2 non-convergence / failed audit. "
               f"Environment: HARVESTKIT_THREADS sets Monte-Carlo worker threads.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve a scenario, write value/policy CSVs")
    p_solve.add_argument("scenario")

    p_sim = sub.add_parser("simulate", help="Monte-Carlo cross-check of a solved scenario")
    p_sim.add_argument("scenario")
    p_sim.add_argument("--x0", required=True, help="comma-separated start state, e.g. 2 or 1.0,0.5")

    p_ver = sub.add_parser("verify", help="audit a solved scenario against the theory")
    p_ver.add_argument("scenario")

    p_swp = sub.add_parser("sweep", help="refinement study over a list of h values")
    p_swp.add_argument("scenario")
    p_swp.add_argument("--h", required=True, help="comma-separated h values, e.g. 0.2,0.1,0.05")

    args = parser.parse_args(argv)
    if args.command == "solve":
        return run_solve(args.scenario)
    if args.command == "simulate":
        try:
            x0 = _parse_coords(args.x0)
        except ScenarioError as err:
            return _fail(str(err))
        return run_simulate(args.scenario, x0)
    if args.command == "verify":
        return run_verify(args.scenario)
    if args.command == "sweep":
        try:
            h_list = _parse_coords(args.h)
        except ScenarioError as err:
            return _fail(str(err))
        return run_sweep(args.scenario, h_list)
    return _fail(f"unknown command {args.command!r}")


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
