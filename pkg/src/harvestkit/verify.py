"""Structural audits of a solved value/policy field.

The dynamic-programming fixed point is the discrete shadow of the
variational system

    max_i { (L - delta)V,  f_i - dV/dx_i,  dV/dx_i - g_i } = 0:

every action's residual should be nonpositive (subsolution side) and the
chosen action's residual should vanish (supersolution side). Residuals
are formed with the kernel's own stencil, so the checks are exactly
complementary slackness of the implemented update:

    diffusion r0  = (exp(-delta dt) sum_y p(x,y) V(y) - V(x)) / dt,
    harvest  r_i+ = f_i(x) - (V(x) - V(x - h e_i)) / h,
    seed     r_i- = (V(x + h e_i) - V(x)) / h - g_i(x).

At degenerate states (Q = 0) the generator vanishes and the diffusion
residual reduces to -delta V(x); at forced-harvest boundary states only
the forced action is audited, mirroring the solver's action set.

The inequality audit covers the remaining theory: the discrete gradient
sandwich f h <= dV <= g h, the pairwise bound
V(y) <= V(x) - f(x)(x-y)^+ + g(x)(x-y)^- with its Lipschitz corollary
|V(x) - V(y)| <= 2|f(0) + g(0)| |x - y|, the linear growth bound
V(x) <= sum_i f_i(0) x_i + M when the drift-growth condition holds, and
the policy structure (one species per state, boundary forcing).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .grid import Grid
from .kernel import TransitionKernel, _coefficients
from .model import Model, validate
from .solver import BellmanOperator, SolveReport


@dataclass(frozen=True)
class AuditCheck:
    name: str
    passed: bool
    worst_state: Optional[tuple] = None
    worst_magnitude: Optional[float] = None
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "worst_state": None if self.worst_state is None else list(self.worst_state),
            "worst_magnitude": self.worst_magnitude,
            "detail": self.detail,
        }


@dataclass(eq=False)
class ResidualField:
    """Per-state residuals of every available action; NaN marks 'not available'."""

    grid: Grid
    diffusion: np.ndarray  # (n,)
    harvest: np.ndarray  # (n, d)
    seed: np.ndarray  # (n, d)
    state_max: np.ndarray  # (n,) max residual over available actions
    dt_min: float
    degenerate: np.ndarray
    forced_species: np.ndarray

    @property
    def defined_count(self) -> int:
        return int(np.sum(~np.isnan(self.state_max)))

    def _stack(self) -> np.ndarray:
        return np.column_stack([self.diffusion, self.harvest, self.seed])

    def subsolution_worst(self):
        """(largest residual, flat state); should be <= tol."""
        stack = self._stack()
        if np.all(np.isnan(stack)):
            return -np.inf, None
        flat = int(np.nanargmax(np.nanmax(stack, axis=1, initial=-np.inf)))
        return float(np.nanmax(stack)), flat

    def supersolution_worst(self):
        """(smallest per-state max residual, flat state); should be >= -tol."""
        if np.all(np.isnan(self.state_max)):
            return np.inf, None
        flat = int(np.nanargmin(self.state_max))
        return float(self.state_max[flat]), flat


def hjb_residuals(model: Model, grid: Grid, kernel: TransitionKernel, value: np.ndarray) -> ResidualField:
    """Residuals of the variational system at every state, kernel stencil."""
    value = np.asarray(value, dtype=float)
    if value.shape != (grid.n_states,):
        raise ValueError(f"value field has shape {value.shape}, expected ({grid.n_states},)")
    op = BellmanOperator(model, grid, kernel)
    d = grid.dim
    cand = op.candidates(value).copy()

    with np.errstate(invalid="ignore"):
        r0 = (cand[0] - value) / kernel.dt
    deg = kernel.degenerate & op.diffusion_allowed
    r0[deg] = -model.discount * value[deg]
    r0[~op.diffusion_allowed] = np.nan

    harvest = np.full((grid.n_states, d), np.nan)
    seed = np.full((grid.n_states, d), np.nan)
    for i in range(d):
        hm = op.harvest_allowed[i]
        sm = op.seed_allowed[i]
        harvest[hm, i] = (cand[1 + i][hm] - value[hm]) / grid.h
        seed[sm, i] = (cand[1 + d + i][sm] - value[sm]) / grid.h

    stack = np.column_stack([r0, harvest, seed])
    any_action = ~np.all(np.isnan(stack), axis=1)
    state_max = np.full(grid.n_states, np.nan)
    if any_action.any():
        state_max[any_action] = np.nanmax(stack[any_action], axis=1)

    finite_dt = (~kernel.degenerate) & op.diffusion_allowed
    dt_min = float(kernel.dt[finite_dt].min()) if finite_dt.any() else float("nan")

    return ResidualField(
        grid=grid,
        diffusion=r0,
        harvest=harvest,
        seed=seed,
        state_max=state_max,
        dt_min=dt_min,
        degenerate=kernel.degenerate.copy(),
        forced_species=kernel.forced_species.copy(),
    )


def residual_tolerance(residuals: ResidualField, solve_tolerance: float) -> float:
    """Rate-units tolerance 10 * solve_tolerance / dt_min for residual checks."""
    if not np.isfinite(residuals.dt_min):
        return float("inf")
    return 10.0 * solve_tolerance / residuals.dt_min


def residual_checks(residuals: ResidualField, tol: float) -> list[AuditCheck]:
    """Complementary-slackness checks at tolerance ``tol`` (rate units)."""
    grid = residuals.grid
    sub, sub_flat = residuals.subsolution_worst()
    sup, sup_flat = residuals.supersolution_worst()
    checks = [
        AuditCheck(
            "hjb-subsolution",
            sub <= tol,
            None if sub_flat is None else tuple(grid.state(sub_flat)),
            sub,
            f"largest action residual {sub:.6g} (tol {tol:.3g})",
        ),
        AuditCheck(
            "hjb-supersolution",
            sup >= -tol,
            None if sup_flat is None else tuple(grid.state(sup_flat)),
            sup,
            f"smallest per-state max residual {sup:.6g} (tol {tol:.3g})",
        ),
    ]
    return checks


@dataclass(frozen=True)
class AuditReport:
    checks: tuple[AuditCheck, ...]
    tolerance: float
    pairs: int
    seed: int

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> AuditCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "tolerance": self.tolerance,
            "pairs": self.pairs,
            "seed": self.seed,
            "checks": [c.to_dict() for c in self.checks],
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def to_text(self) -> str:
        lines = [f"audit: {'pass' if self.passed else 'FAIL'} (tolerance {self.tolerance:.3g})"]
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            where = "" if c.worst_state is None else f" at {tuple(round(v, 12) for v in c.worst_state)}"
            lines.append(f"  {c.name}: {status}{where}; {c.detail}")
        return "\n".join(lines)


def audit_inequalities(
    model: Model,
    grid: Grid,
    report: SolveReport,
    pairs: int = 10_000,
    seed: int = 0,
) -> AuditReport:
    """Inequality and policy-structure audit of a solve report."""
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    V = np.asarray(report.value, dtype=float)
    policy = np.asarray(report.policy, dtype=np.int64)
    n, d = grid.n_states, grid.dim
    pts = grid.points()
    multi = grid.multi_indices()
    strides = np.array(grid.strides, dtype=np.int64)
    tol = 10.0 * report.tolerance
    # Distant-state comparisons see the full gap between the iterate and the
    # exact fixed point; the standard stopping bound for that gap is
    # increment / (1 - contraction) with contraction exp(-delta dt_min).
    _, _, _, _, q = _coefficients(model, pts, grid.h)
    with np.errstate(divide="ignore"):
        dt = np.where(q > 0, grid.h**2 / np.maximum(q, 1e-300), np.inf)
    dt_min = float(dt[q > 0].min()) if np.any(q > 0) else 1.0
    value_tol = 10.0 * report.tolerance / (model.discount * dt_min)
    f = np.asarray(model.harvest_price(pts), dtype=float)
    g = np.asarray(model.seed_cost(pts), dtype=float)
    checks: list[AuditCheck] = []

    # Gradient sandwich on every lattice edge:
    # f_i(x + h e_i) h - tol <= V(x + h e_i) - V(x) <= g_i(x) h + tol.
    worst = -np.inf
    worst_state = None
    for i in range(d):
        has_up = multi[:, i] <= grid.n_per_axis - 2
        lo = np.nonzero(has_up)[0]
        up = lo + strides[i]
        dv = V[up] - V[lo]
        lower_gap = f[up, i] * grid.h - dv  # > 0 is a violation
        upper_gap = dv - g[lo, i] * grid.h
        for gap, anchor in ((lower_gap, up), (upper_gap, lo)):
            k = int(np.argmax(gap))
            if gap[k] > worst:
                worst = float(gap[k])
                worst_state = tuple(pts[anchor[k]])
    checks.append(AuditCheck(
        "gradient-sandwich", worst <= tol, worst_state, worst,
        f"worst sandwich violation {worst:.6g} (tol {tol:.3g})",
    ))

    # Pairwise bound V(y) <= V(x) - f(x)(x-y)^+ + g(x)(x-y)^- (both directions)
    # and the Lipschitz corollary |V(x) - V(y)| <= 2|f(0) + g(0)| |x - y|.
    rng = np.random.default_rng(seed)
    ia = rng.integers(0, n, size=pairs)
    ib = rng.integers(0, n, size=pairs)
    pair_worst = -np.inf
    pair_state = None
    for a, bb in ((ia, ib), (ib, ia)):
        diff = pts[a] - pts[bb]
        bound = V[a] - (f[a] * np.maximum(diff, 0.0)).sum(axis=1) \
            + (g[a] * np.maximum(-diff, 0.0)).sum(axis=1)
        gap = V[bb] - bound
        k = int(np.argmax(gap))
        if gap[k] > pair_worst:
            pair_worst = float(gap[k])
            pair_state = tuple(pts[a[k]])
    checks.append(AuditCheck(
        "pairwise-value-bound", pair_worst <= value_tol, pair_state, pair_worst,
        f"worst pairwise violation {pair_worst:.6g} over {pairs} pairs (tol {value_tol:.3g})",
    ))

    origin = np.zeros(d)
    lip_const = 2.0 * float(np.linalg.norm(
        np.asarray(model.harvest_price(origin), dtype=float)
        + np.asarray(model.seed_cost(origin), dtype=float)
    ))
    dist = np.linalg.norm(pts[ia] - pts[ib], axis=1)
    lip_gap = np.abs(V[ia] - V[ib]) - lip_const * dist
    k = int(np.argmax(lip_gap))
    checks.append(AuditCheck(
        "lipschitz-bound", float(lip_gap[k]) <= value_tol, tuple(pts[ia[k]]), float(lip_gap[k]),
        f"worst |dV| - {lip_const:.4g}|dx| = {lip_gap[k]:.6g} (tol {value_tol:.3g})",
    ))

    # Linear growth: V(x) <= sum_i f_i(0) x_i + M; M reported as the max slack.
    f0 = np.asarray(model.harvest_price(origin), dtype=float)
    slack = V - pts @ f0
    k = int(np.argmax(slack))
    growth = validate(model, grid.bound, grid.h).check("drift-growth-bound")
    if growth.passed:
        detail = (
            f"max slack M = {slack[k]:.6g} with drift-growth constant C = "
            f"{growth.worst_magnitude:.6g}"
        )
        passed = bool(np.isfinite(slack[k]))
    else:
        detail = f"informational: drift-growth condition failed; max slack {slack[k]:.6g}"
        passed = True
    checks.append(AuditCheck(
        "linear-growth-slack", passed, tuple(pts[k]), float(slack[k]), detail,
    ))

    code_ok = np.all(np.abs(policy) <= d)
    checks.append(AuditCheck(
        "policy-structure", bool(code_ok), None, float(np.max(np.abs(policy))),
        "every state acts on at most one species",
    ))

    forced = np.full(n, -1, dtype=np.int64)
    for i in range(d - 1, -1, -1):
        forced = np.where(multi[:, i] == grid.n_per_axis - 1, i, forced)
    mask = forced >= 0
    bad = mask & (policy != forced + 1)
    if bad.any():
        k = int(np.argmax(bad))
        checks.append(AuditCheck(
            "boundary-forcing", False, tuple(pts[k]), float(policy[k]),
            f"state at the bound acts {policy[k]} instead of harvesting species {forced[k] + 1}",
        ))
    else:
        checks.append(AuditCheck(
            "boundary-forcing", True, None, None,
            "all bound states harvest the lowest saturated species",
        ))

    return AuditReport(checks=tuple(checks), tolerance=tol, pairs=pairs, seed=seed)
