"""Value iteration for the harvesting-seeding chain and policy extraction.

Per sweep, each state compares the candidate values

    harvest i : V(x - h e_i) + f_i(x) h        (needs x_i >= h)
    seed i    : V(x + h e_i) - g_i(x) h        (needs x_i <= U - h)
    diffusion : exp(-delta dt(x)) sum_y p(x, y) V(y)
                (0 at degenerate states: the chain never moves again and
                discounting over an infinite sojourn kills the payoff)

and keeps the best. States with some coordinate at the truncation bound U
expose only the forced action "harvest min{j : x_j = U}". Ties within
1e-14 prefer doing nothing, then harvesting the lowest species, then
seeding the lowest species, so minimal-control policies come out.

The default sweep is synchronous (Jacobi): fully vectorized, deterministic
and order-independent. The in-place lexicographic Gauss-Seidel sweep
usually needs fewer iterations but runs single-threaded state by state.

Iteration starts from the immediate-depletion payoff sum_i f_i(x) x_i;
from there the operator is monotone nondecreasing, which is what makes
plain value iteration dependable here even though zero-duration control
steps break the uniform-contraction argument.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .grid import Grid
from .kernel import TransitionKernel
from .model import Model

_TIE_TOL = 1e-14


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class Thresholds1D:
    """Barrier levels of a 1-D policy: seed below seed_level, idle between,
    harvest from harvest_level up."""

    seed_level: float
    harvest_level: float
    contiguous: bool


@dataclass(frozen=True)
class SolveOptions:
    tolerance: float = 1e-8
    max_iters: int = 1_000_000
    init: Optional[np.ndarray] = None
    sweep: str = "jacobi"  # or "gauss-seidel"


@dataclass(eq=False)
class SolveReport:
    """Converged value/policy fields plus iteration diagnostics."""

    grid: Grid
    value: np.ndarray
    policy: np.ndarray
    iterations: int
    final_increment: float
    converged: bool
    tolerance: float
    sweep: str
    wall_time: float
    clamped_states: np.ndarray  # states whose diffusion stencil hit the grid edge

    def to_csv(self, path) -> None:
        """One row per state: coordinates, value, action code (i / -i / 0)."""
        pts = self.grid.points()
        with open(path, "w", encoding="utf-8") as fh:
            coords = ",".join(f"x{i + 1}" for i in range(self.grid.dim))
            fh.write(f"{coords},value,action\n")
            for row, v, a in zip(pts, self.value, self.policy):
                xs = ",".join(repr(float(c)) for c in row)
                fh.write(f"{xs},{repr(float(v))},{int(a)}\n")


def current_harvest_potential(model: Model, grid: Grid) -> np.ndarray:
    """Payoff of depleting everything right away: V0(x) = sum_i f_i(x) x_i."""
    pts = grid.points()
    f = np.asarray(model.harvest_price(pts), dtype=float)
    return (f * pts).sum(axis=1)


class BellmanOperator:
    """One sweep of the dynamic-programming update, precomputed per grid."""

    def __init__(self, model: Model, grid: Grid, kernel: TransitionKernel):
        if kernel.grid is not grid and kernel.grid != grid:
            raise SolverError("kernel was built for a different grid")
        self.grid = grid
        self.kernel = kernel
        n, d = grid.n_states, grid.dim
        pts = grid.points()
        multi = grid.multi_indices()
        strides = np.array(grid.strides, dtype=np.int64)
        flat = np.arange(n, dtype=np.int64)

        self.disc = np.exp(-model.discount * kernel.dt)  # 0 at degenerate states
        self.degenerate = kernel.degenerate
        fh = np.asarray(model.harvest_price(pts), dtype=float) * grid.h
        gh = np.asarray(model.seed_cost(pts), dtype=float) * grid.h
        self.fh = np.ascontiguousarray(fh.T)  # (d, n)
        self.gh = np.ascontiguousarray(gh.T)

        forced = kernel.forced_species
        free = forced < 0
        self.diffusion_allowed = free
        self.harvest_allowed = np.empty((d, n), dtype=bool)
        self.seed_allowed = np.empty((d, n), dtype=bool)
        self.harvest_idx = np.empty((d, n), dtype=np.int64)
        self.seed_idx = np.empty((d, n), dtype=np.int64)
        for i in range(d):
            can_h = multi[:, i] >= 1
            can_s = multi[:, i] <= grid.n_per_axis - 2
            self.harvest_allowed[i] = can_h & (free | (forced == i))
            self.seed_allowed[i] = can_s & free
            self.harvest_idx[i] = np.where(can_h, flat - strides[i], flat)
            self.seed_idx[i] = np.where(can_s, flat + strides[i], flat)

        self._rowcode = np.concatenate(
            [[0], np.arange(1, d + 1), -np.arange(1, d + 1)]
        ).astype(np.int64)
        self._cand = np.empty((1 + 2 * d, n))
        self._gather = np.empty((n, kernel.nbr_index.shape[1]))

    def candidates(self, value: np.ndarray) -> np.ndarray:
        """Candidate-value matrix, rows [diffusion, harvest 1..d, seed 1..d];
        unavailable actions are -inf. Reuses an internal buffer."""
        d = self.grid.dim
        cand = self._cand
        np.take(value, self.kernel.nbr_index, out=self._gather)
        self._gather *= self.kernel.nbr_prob
        ev = self._gather.sum(axis=1)
        cand[0] = self.disc * ev
        cand[0][self.degenerate] = 0.0
        cand[0][~self.diffusion_allowed] = -np.inf
        for i in range(d):
            np.add(value.take(self.harvest_idx[i]), self.fh[i], out=cand[1 + i])
            cand[1 + i][~self.harvest_allowed[i]] = -np.inf
            np.subtract(value.take(self.seed_idx[i]), self.gh[i], out=cand[1 + d + i])
            cand[1 + d + i][~self.seed_allowed[i]] = -np.inf
        return cand

    def apply(self, value: np.ndarray):
        """Synchronous update: (new_value, policy)."""
        cand = self.candidates(value)
        best = cand.max(axis=0)
        if not np.all(np.isfinite(best)):
            bad = int(np.argmin(np.isfinite(best)))
            raise SolverError(f"empty action set at state {tuple(self.grid.state(bad))}")
        choice = (cand >= best - _TIE_TOL).argmax(axis=0)
        return best, self._rowcode[choice]

    def apply_inplace(self, value: np.ndarray):
        """Gauss-Seidel update in lexicographic state order; returns
        (sup increment, policy). Mutates ``value``."""
        d = self.grid.dim
        n = self.grid.n_states
        nbr_idx = self.kernel.nbr_index
        nbr_prob = self.kernel.nbr_prob
        policy = np.zeros(n, dtype=np.int64)
        inc = 0.0
        for s in range(n):
            best = -np.inf
            code = None
            if self.diffusion_allowed[s]:
                if self.degenerate[s]:
                    best = 0.0
                else:
                    best = self.disc[s] * float(nbr_prob[s] @ value[nbr_idx[s]])
                code = 0
            for i in range(d):
                if self.harvest_allowed[i, s]:
                    v = value[self.harvest_idx[i, s]] + self.fh[i, s]
                    if v > best + _TIE_TOL:
                        best, code = v, i + 1
            for i in range(d):
                if self.seed_allowed[i, s]:
                    v = value[self.seed_idx[i, s]] - self.gh[i, s]
                    if v > best + _TIE_TOL:
                        best, code = v, -(i + 1)
            if code is None or not np.isfinite(best):
                raise SolverError(f"empty action set at state {tuple(self.grid.state(s))}")
            inc = max(inc, abs(best - value[s]))
            value[s] = best
            policy[s] = code
        return inc, policy


def bellman_update(model: Model, grid: Grid, kernel: TransitionKernel, value: np.ndarray):
    """One synchronous sweep; convenience wrapper around BellmanOperator."""
    value = np.asarray(value, dtype=float)
    if value.shape != (grid.n_states,):
        raise SolverError(f"value field has shape {value.shape}, expected ({grid.n_states},)")
    if not np.all(np.isfinite(value)):
        raise SolverError("value field must be finite")
    return BellmanOperator(model, grid, kernel).apply(value)


def solve(
    model: Model,
    grid: Grid,
    kernel: TransitionKernel,
    options: Optional[SolveOptions] = None,
) -> SolveReport:
    """Iterate the update until the sup-norm increment drops below tolerance.

    Non-convergence within max_iters is reported (converged=False), not
    raised; the last fields are still returned.
    """
    opts = options or SolveOptions()
    if opts.tolerance <= 0:
        raise SolverError(f"tolerance must be positive, got {opts.tolerance}")
    if opts.sweep not in ("jacobi", "gauss-seidel"):
        raise SolverError(f"unknown sweep mode {opts.sweep!r}")

    op = BellmanOperator(model, grid, kernel)
    if opts.init is not None:
        value = np.array(opts.init, dtype=float)
        if value.shape != (grid.n_states,):
            raise SolverError(f"init has shape {value.shape}, expected ({grid.n_states},)")
    else:
        value = current_harvest_potential(model, grid)

    t0 = time.perf_counter()
    policy = np.zeros(grid.n_states, dtype=np.int64)
    increment = np.inf
    iterations = 0
    converged = False
    for iterations in range(1, opts.max_iters + 1):
        if opts.sweep == "jacobi":
            new_value, policy = op.apply(value)
            increment = float(np.max(np.abs(new_value - value)))
            value = new_value.copy()
        else:
            increment, policy = op.apply_inplace(value)
        if increment < opts.tolerance:
            converged = True
            break
    wall = time.perf_counter() - t0

    return SolveReport(
        grid=grid,
        value=value,
        policy=policy,
        iterations=iterations,
        final_increment=increment,
        converged=converged,
        tolerance=opts.tolerance,
        sweep=opts.sweep,
        wall_time=wall,
        clamped_states=kernel.clamped.copy(),
    )


def extract_thresholds_1d(policy: np.ndarray, grid: Grid) -> Thresholds1D:
    """Barrier levels of a 1-D policy.

    seed_level is the smallest x whose action is not "seed"; harvest_level
    the smallest x at or above it whose action is "harvest". The contiguous
    flag confirms the seed / idle / harvest bands are unbroken; non-barrier
    policies return best-effort levels with contiguous=False.
    """
    if grid.dim != 1:
        raise SolverError("threshold extraction requires a 1-D grid")
    acts = np.asarray(policy, dtype=np.int64)
    n = grid.n_states
    nonseed = np.nonzero(acts != -1)[0]
    i1 = int(nonseed[0]) if nonseed.size else n
    harvest = np.nonzero(acts[i1:] == 1)[0]
    i2 = i1 + int(harvest[0]) if harvest.size else n
    contiguous = (
        bool(np.all(acts[:i1] == -1))
        and bool(np.all(acts[i1:i2] == 0))
        and bool(np.all(acts[i2:] == 1))
    )
    return Thresholds1D(
        seed_level=i1 * grid.h,
        harvest_level=i2 * grid.h,
        contiguous=contiguous,
    )
