"""Monte-Carlo simulation of the controlled diffusion under a fixed strategy.

Paths follow Euler-Maruyama for the free dynamics; after every step (and
once at t = 0, matching the initial jump of a barrier strategy) the
strategy is applied in bursts of h-increments until it asks for no
further control. That burst mechanism is exactly the approximating
chain's control move, not a reflected-SDE solve, so the estimate
cross-checks the object the grid solver actually computes. Prices are
evaluated at the pre-jump state for every increment.

Determinism: path i of an estimate uses the generator seeded with
base_seed + i, so results do not depend on chunking or on the number of
worker threads, and a standalone ``simulate_path`` with the same seed
reproduces the path bit for bit.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .grid import Grid
from .model import Model
from .solver import Thresholds1D

_NOISE_BUDGET = 25_000_000  # floats per noise chunk (~200 MB)
_FEAS_TOL = 1e-9

ENV_THREADS = "HARVESTKIT_THREADS"


class SimulationError(RuntimeError):
    pass


@dataclass(eq=False)
class Strategy:
    """Total action rule on [0, U]^d: grid-policy lookup or 1-D thresholds.

    Action codes match the policy field: i harvests species i, -i seeds it,
    0 leaves the dynamics alone. Lookups clamp to the lattice, so states
    that drift slightly outside [0, U]^d still resolve.
    """

    h: float
    bound: float
    dim: int
    policy: Optional[np.ndarray] = None
    grid: Optional[Grid] = None
    thresholds: Optional[Thresholds1D] = None

    @classmethod
    def from_policy(cls, policy: np.ndarray, grid: Grid) -> "Strategy":
        policy = np.asarray(policy, dtype=np.int64)
        if policy.shape != (grid.n_states,):
            raise SimulationError(
                f"policy has shape {policy.shape}, expected ({grid.n_states},)"
            )
        return cls(h=grid.h, bound=grid.bound, dim=grid.dim, policy=policy, grid=grid)

    @classmethod
    def from_thresholds(cls, thresholds: Thresholds1D, h: float, bound: float) -> "Strategy":
        return cls(h=h, bound=bound, dim=1, thresholds=thresholds)

    def action_batch(self, states: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        if self.thresholds is not None:
            x = np.maximum(states[..., 0], 0.0)  # float dust below 0 is not "under the seed barrier"
            codes = (x >= self.thresholds.harvest_level).astype(np.int64)
            codes -= x < self.thresholds.seed_level
            return codes
        flats = self.grid.nearest_flat(states)
        return self.policy[flats]

    def action(self, x) -> int:
        return int(self.action_batch(np.asarray(x, dtype=float).reshape(1, self.dim))[0])


@dataclass(eq=False)
class Path:
    """Recorded trajectory: post-control state, cumulative harvest/seeding,
    discounted payoff, and the individual control increments (t, code)."""

    dt: float
    horizon: float
    times: np.ndarray
    states: np.ndarray
    harvest: np.ndarray
    seeding: np.ndarray
    payoff: float
    controls: list

    def to_csv(self, path) -> None:
        d = self.states.shape[1]
        with open(path, "w", encoding="utf-8") as fh:
            cols = (
                ["t"]
                + [f"x{i + 1}" for i in range(d)]
                + [f"y{i + 1}" for i in range(d)]
                + [f"z{i + 1}" for i in range(d)]
            )
            fh.write(",".join(cols) + "\n")
            for k in range(len(self.times)):
                row = [repr(float(self.times[k]))]
                row += [repr(float(v)) for v in self.states[k]]
                row += [repr(float(v)) for v in self.harvest[k]]
                row += [repr(float(v)) for v in self.seeding[k]]
                fh.write(",".join(row) + "\n")


@dataclass(frozen=True)
class PayoffEstimate:
    mean: float
    stderr: float
    paths: int
    truncation_bound: float


@dataclass(frozen=True)
class SimOptions:
    paths: int = 10_000
    horizon: float = 200.0
    dt: float = 1e-3
    base_seed: int = 0
    workers: Optional[int] = None  # None: read HARVESTKIT_THREADS, default 1


def _apply_controls(model, strategy, X, Y, Z, payoff, t, record_controls):
    """Burst of h-increments at time t until the strategy says diffuse.

    Infeasible requests (harvest below h, seed above U - h) count as
    "diffuse"; a burst longer than the lattice diameter is a runaway.
    """
    h = strategy.h
    disc = math.exp(-model.discount * t)
    max_iter = strategy.dim * int(round(strategy.bound / h)) + 16
    codes = strategy.action_batch(X)
    rows = np.nonzero(codes)[0]
    codes = codes[rows]
    for _ in range(max_iter):
        if rows.size == 0:
            return
        sp = np.abs(codes) - 1
        vals = X[rows, sp]
        harvesting = codes > 0
        feasible = np.where(
            harvesting,
            vals >= h - _FEAS_TOL,
            vals <= strategy.bound - h + _FEAS_TOL,
        )
        rows, sp, harvesting = rows[feasible], sp[feasible], harvesting[feasible]
        if rows.size == 0:
            return
        hrows, hsp = rows[harvesting], sp[harvesting]
        srows, ssp = rows[~harvesting], sp[~harvesting]
        if hrows.size:
            pf = np.asarray(model.harvest_price(X[hrows]), dtype=float)
            payoff[hrows] += disc * h * pf[np.arange(hrows.size), hsp]
            X[hrows, hsp] -= h
            Y[hrows, hsp] += h
        if srows.size:
            pg = np.asarray(model.seed_cost(X[srows]), dtype=float)
            payoff[srows] -= disc * h * pg[np.arange(srows.size), ssp]
            X[srows, ssp] += h
            Z[srows, ssp] += h
        X[hrows] = np.maximum(X[hrows], 0.0)  # near-h remnants leave float dust
        if record_controls is not None:
            for s, is_h in zip(sp, harvesting):
                record_controls.append((t, int((s + 1) if is_h else -(s + 1))))
        # only paths that just acted can still want control
        codes = strategy.action_batch(X[rows])
        live = np.nonzero(codes)[0]
        rows = rows[live]
        codes = codes[live]
    raise SimulationError(f"runaway control burst at t={t}: policy never settles")


def _run_paths(model, strategy, x0, horizon, dt, seeds, record):
    """Vectorized engine over one block of paths; per-path generators."""
    d = model.dim
    m = len(seeds)
    x0 = np.asarray(x0, dtype=float).reshape(d)
    X = np.tile(x0, (m, 1))
    Y = np.zeros((m, d))
    Z = np.zeros((m, d))
    payoff = np.zeros(m)
    gens = [np.random.default_rng(int(s)) for s in seeds]
    steps = int(round(horizon / dt))
    sqrt_dt = math.sqrt(dt)
    full_sigma = model.diffusion_matrix is not None

    controls = [] if record else None
    if record:
        times = np.arange(steps + 1) * dt
        rec_X = np.empty((steps + 1, d))
        rec_Y = np.empty((steps + 1, d))
        rec_Z = np.empty((steps + 1, d))

    _apply_controls(model, strategy, X, Y, Z, payoff, 0.0, controls)
    if record:
        rec_X[0], rec_Y[0], rec_Z[0] = X[0], Y[0], Z[0]

    # Noise is drawn in large per-path rows (stream order matches step order)
    # and consumed through small step-major sub-blocks: the (m, chunk) buffer
    # is touched in 64-step windows so each cache line is reused across the
    # whole window instead of missing once per path per step.
    chunk = max(1, min(steps, _NOISE_BUDGET // max(1, m * d)))
    sub = 64
    step = 0
    while step < steps:
        k = min(chunk, steps - step)
        noise = np.empty((m, k * d))
        for p in range(m):
            gens[p].standard_normal(out=noise[p])
        for j0 in range(0, k, sub):
            width = min(sub, k - j0)
            block = np.ascontiguousarray(
                noise[:, j0 * d:(j0 + width) * d].reshape(m, width, d).transpose(1, 0, 2)
            )
            for i in range(width):
                drift = np.asarray(model.drift(X), dtype=float)
                if full_sigma:
                    sig = np.asarray(model.diffusion_matrix(X), dtype=float)
                    shock = np.einsum("...ij,...j->...i", sig, block[i])
                else:
                    shock = np.asarray(model.diffusion_row(X), dtype=float) * block[i]
                X += dt * drift
                X += sqrt_dt * shock
                np.maximum(X, 0.0, out=X)
                t = (step + j0 + i + 1) * dt
                _apply_controls(model, strategy, X, Y, Z, payoff, t, controls)
                if record:
                    rec_X[step + j0 + i + 1] = X[0]
                    rec_Y[step + j0 + i + 1] = Y[0]
                    rec_Z[step + j0 + i + 1] = Z[0]
        step += k

    path = None
    if record:
        path = Path(
            dt=dt,
            horizon=horizon,
            times=times,
            states=rec_X,
            harvest=rec_Y,
            seeding=rec_Z,
            payoff=float(payoff[0]),
            controls=controls,
        )
    return payoff, path


def simulate_path(
    model: Model,
    strategy: Strategy,
    x0,
    horizon: float,
    dt: float,
    seed: int = 0,
) -> Path:
    """One controlled trajectory with full recording."""
    if dt <= 0 or horizon <= 0:
        raise SimulationError("dt and horizon must be positive")
    x0 = np.asarray(x0, dtype=float).reshape(model.dim)
    if np.any(x0 < 0) or np.any(x0 > strategy.bound):
        raise SimulationError(f"x0 {tuple(x0)} outside [0, {strategy.bound}]^{model.dim}")
    _, path = _run_paths(model, strategy, x0, horizon, dt, [seed], record=True)
    return path


def estimate_value(
    model: Model,
    strategy: Strategy,
    x0,
    options: Optional[SimOptions] = None,
) -> PayoffEstimate:
    """Average discounted harvest income minus seeding cost over paths.

    Path i uses seed base_seed + i. The reported truncation bound
    exp(-delta T) sum_i f_i(0) U is the one-sided error from cutting the
    infinite horizon at T.
    """
    opts = options or SimOptions()
    if opts.paths < 1:
        raise SimulationError("paths must be >= 1")
    if opts.dt <= 0 or opts.horizon <= 0:
        raise SimulationError("dt and horizon must be positive")
    x0 = np.asarray(x0, dtype=float).reshape(model.dim)
    if np.any(x0 < 0) or np.any(x0 > strategy.bound):
        raise SimulationError(f"x0 {tuple(x0)} outside [0, {strategy.bound}]^{model.dim}")

    workers = opts.workers
    if workers is None:
        workers = max(1, int(os.environ.get(ENV_THREADS, "1")))
    seeds = [opts.base_seed + i for i in range(opts.paths)]

    if workers <= 1 or opts.paths < 2 * workers:
        payoffs, _ = _run_paths(model, strategy, x0, opts.horizon, opts.dt, seeds, record=False)
    else:
        blocks = np.array_split(np.asarray(seeds), workers)
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(
                ex.map(
                    lambda blk: _run_paths(
                        model, strategy, x0, opts.horizon, opts.dt, list(blk), record=False
                    )[0],
                    blocks,
                )
            )
        payoffs = np.concatenate(parts)

    mean = float(payoffs.mean())
    stderr = float(payoffs.std(ddof=1) / math.sqrt(opts.paths)) if opts.paths > 1 else 0.0
    f0 = np.asarray(model.harvest_price(np.zeros(model.dim)), dtype=float)
    truncation = math.exp(-model.discount * opts.horizon) * float(f0.sum() * strategy.bound)
    return PayoffEstimate(
        mean=mean, stderr=stderr, paths=opts.paths, truncation_bound=truncation
    )
