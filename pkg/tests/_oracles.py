"""Independent oracles used by the tests.

Nothing here goes through the solver's update machinery: policies are
evaluated by solving the linear fixed-point system directly, and stencil
moments are summed from the raw move lists. Expected values asserted in
the tests come from these routines or from hand evaluation of the
defining formulas.
"""

from __future__ import annotations

import numpy as np

from harvestkit import diffusion_transitions


def policy_value(model, grid, kernel, policy):
    """Exact value of a stationary policy: solve (I - D P_pi) V = r_pi.

    Harvest/seed rows are undiscounted unit shifts with the price as
    reward; diffusion rows discount the stencil expectation; degenerate
    diffusion rows pin the value to 0.
    """
    n = grid.n_states
    pts = grid.points()
    f = np.asarray(model.harvest_price(pts), dtype=float)
    g = np.asarray(model.seed_cost(pts), dtype=float)
    strides = np.array(grid.strides, dtype=np.int64)
    A = np.eye(n)
    b = np.zeros(n)
    for s in range(n):
        a = int(policy[s])
        if a > 0:
            i = a - 1
            A[s, s - strides[i]] -= 1.0
            b[s] = f[s, i] * grid.h
        elif a < 0:
            i = -a - 1
            A[s, s + strides[i]] -= 1.0
            b[s] = -g[s, i] * grid.h
        else:
            tr = kernel.transitions(s)
            if tr is not None:
                dt, pairs = tr
                disc = np.exp(-model.discount * dt)
                for tgt, p in pairs:
                    A[s, tgt] -= disc * p
    return np.linalg.solve(A, b)


def best_barrier_value_1d(model, grid, kernel, at_flat, max_i1=12, max_i2=40):
    """Brute-force search over 1-D barrier policies (seed below i1*h,
    harvest from i2*h); returns (best value at at_flat, (i1, i2))."""
    n = grid.n_states
    best = (-np.inf, None)
    for i1 in range(0, min(max_i1, n - 1)):
        for i2 in range(max(i1 + 1, 1), min(max_i2, n)):
            pol = np.zeros(n, dtype=np.int64)
            pol[:i1] = -1
            pol[i2:] = 1
            v = policy_value(model, grid, kernel, pol)
            if v[at_flat] > best[0]:
                best = (float(v[at_flat]), (i1, i2))
    return best


def raw_stencil_moments(model, grid, x):
    """(prob_sum, mean, second, cross) of the unclamped diffusion stencil
    at x, summed move by move; None when the state is degenerate."""
    step = diffusion_transitions(model, grid, x, clamp=False)
    if step is None:
        return None
    x = np.asarray(x, dtype=float).reshape(grid.dim)
    psum = 0.0
    mean = np.zeros(grid.dim)
    second = np.zeros(grid.dim)
    cross = np.zeros((grid.dim, grid.dim))
    for target, p in step.moves:
        d = np.asarray(target) - x
        psum += p
        mean += p * d
        second += p * d * d
        cross += p * np.outer(d, d)
    return step.dt, psum, mean, second, cross


def refinement_gap(coarse_grid, coarse_value, fine_grid, fine_value):
    """sup |V_coarse - V_fine| over coarse states shared with the fine grid."""
    pts = coarse_grid.points()
    k = np.rint(pts / fine_grid.h).astype(np.int64)
    shared = np.all(np.abs(k * fine_grid.h - pts) <= 1e-9, axis=1)
    strides = np.array(fine_grid.strides, dtype=np.int64)
    fine_flat = (k[shared] * strides).sum(axis=1)
    return float(np.max(np.abs(coarse_value[shared] - fine_value[fine_flat])))
