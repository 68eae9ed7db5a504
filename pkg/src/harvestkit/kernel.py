"""Locally consistent controlled Markov chain on the truncated lattice.

Diffusion-step transition probabilities follow the standard upwind
finite-difference construction: with a(x) = sigma(x) sigma(x)' and

    Q(x) = sum_i a_ii(x) - (1/2) sum_{i != j} |a_ij(x)| + h sum_i |b_i(x)|,

the interpolation interval is dt(x) = h^2 / Q(x) and

    p(x, x + h e_i) = (a_ii/2 - sum_{j != i} |a_ij|/2 + b_i^+ h) / Q,
    p(x, x - h e_i) = (a_ii/2 - sum_{j != i} |a_ij|/2 + b_i^- h) / Q,
    p(x, x ± h(e_i + e_j)) = a_ij^+ / (2Q),
    p(x, x ± h(e_i - e_j)) = a_ij^- / (2Q)      (unordered pairs i < j).

The chain then matches the diffusion's conditional mean b(x) dt and
covariance a(x) dt exactly up to the h|b| dt correction on the diagonal.
Control steps are deterministic h-shifts (harvest: x -> x - h e_i,
seed: x -> x + h e_i) and consume no time on the discount clock.

Grid truncation: moves that would exit [0, U]^d have their mass
reassigned to a self-loop and the state is flagged; the solver's forced
harvest at the upper faces keeps flagged stencils off the optimal chain.
States with Q(x) = 0 (the origin, once noise and drift vanish there) are
degenerate: the chain never leaves, and full discounting makes the
diffusion action worth zero there.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grid import Grid
from .model import Model

_PROB_TOL = 1e-12


class KernelError(RuntimeError):
    """Ill-formed transition structure (usually a diagonal-dominance failure)."""


@dataclass(frozen=True)
class DiffusionStep:
    """Single-state diffusion stencil: dt plus (target-state, probability) moves."""

    dt: float
    moves: tuple[tuple[tuple[float, ...], float], ...]
    clamped: bool = False

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([p for _, p in self.moves])


def _coefficients(model: Model, x: np.ndarray, h: float):
    """Per-state pieces of the stencil: b, a_ii, row-sums of |a_ij| (j != i), Q."""
    x = np.asarray(x, dtype=float)
    b = np.asarray(model.drift(x), dtype=float)
    if model.diffusion_matrix is None:
        a_diag = model.covariance_diag(x)
        off_row = np.zeros_like(a_diag)
        a_full = None
    else:
        a_full = model.covariance(x)
        a_diag = np.diagonal(a_full, axis1=-2, axis2=-1)
        off_row = np.sum(np.abs(a_full), axis=-1) - np.abs(a_diag)
    q = a_diag.sum(axis=-1) - 0.5 * off_row.sum(axis=-1) + h * np.abs(b).sum(axis=-1)
    return b, a_diag, off_row, a_full, q


def q_factor(model: Model, x, h: float) -> float:
    """Normalizing factor Q(x) of the diffusion stencil; >= 0 under diagonal dominance."""
    x = np.asarray(x, dtype=float).reshape(model.dim)
    _, _, _, _, q = _coefficients(model, x, h)
    q = float(q)
    if q < -_PROB_TOL:
        raise KernelError(f"negative q-factor {q} at state {tuple(x)}; diagonal dominance violated")
    return max(q, 0.0)


def control_transition(grid: Grid, x, action: int):
    """Apply a harvest (+i) or seed (-i) step of size h at state x.

    Returns (new_state, dY, dZ); zero time elapses. Raises when the move
    would leave [0, U]^d.
    """
    x = np.asarray(x, dtype=float).reshape(grid.dim)
    if action == 0 or abs(action) > grid.dim:
        raise KernelError(f"control action must be in ±{{1..{grid.dim}}}, got {action}")
    i = abs(action) - 1
    shift = np.zeros(grid.dim)
    shift[i] = grid.h
    dy = np.zeros(grid.dim)
    dz = np.zeros(grid.dim)
    tol = 1e-9 * max(1.0, grid.bound)
    if action > 0:
        if x[i] < grid.h - tol:
            raise KernelError(f"cannot harvest species {action} at state {tuple(x)}: below grid")
        new = x - shift
        dy[i] = grid.h
    else:
        if x[i] > grid.bound - grid.h + tol:
            raise KernelError(f"cannot seed species {-action} at state {tuple(x)}: above grid")
        new = x + shift
        dz[i] = grid.h
    return new, dy, dz


def diffusion_transitions(model: Model, grid: Grid, x, clamp: bool = True) -> Optional[DiffusionStep]:
    """Diffusion-action stencil at a single state; None marks Q(x) = 0.

    With clamp=True (default) exiting moves become a flagged self-loop;
    clamp=False returns the raw stencil whose targets may leave the grid.
    """
    x = np.asarray(x, dtype=float).reshape(grid.dim)
    h = grid.h
    d = grid.dim
    b, a_diag, off_row, a_full, q = _coefficients(model, x, h)
    q = float(q)
    if q < -_PROB_TOL:
        raise KernelError(f"negative q-factor {q} at state {tuple(x)}")
    if q <= 0.0:
        return None

    moves: list[tuple[np.ndarray, float]] = []
    up = (a_diag / 2 - off_row / 2 + np.maximum(b, 0.0) * h) / q
    dn = (a_diag / 2 - off_row / 2 + np.maximum(-b, 0.0) * h) / q
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        moves.append((x + e, float(up[i])))
        moves.append((x - e, float(dn[i])))
    if a_full is not None:
        for i in range(d):
            for j in range(i + 1, d):
                aij = float(a_full[i, j])
                pos, neg = max(aij, 0.0) / (2 * q), max(-aij, 0.0) / (2 * q)
                ei = np.zeros(d); ei[i] = h
                ej = np.zeros(d); ej[j] = h
                moves.append((x + ei + ej, pos))
                moves.append((x - ei - ej, pos))
                moves.append((x + ei - ej, neg))
                moves.append((x - ei + ej, neg))

    for target, p in moves:
        if p < -_PROB_TOL or p > 1 + _PROB_TOL:
            raise KernelError(
                f"probability {p} for move {tuple(x)} -> {tuple(target)} outside [0, 1]; "
                "diagonal dominance violated"
            )

    clamped = False
    if clamp:
        tol = 1e-9 * max(1.0, grid.bound)
        kept = []
        self_mass = 0.0
        for target, p in moves:
            inside = np.all(target >= -tol) and np.all(target <= grid.bound + tol)
            if inside:
                kept.append((target, p))
            else:
                self_mass += p
                clamped = clamped or p > 0.0
        if self_mass > 0.0:
            kept.append((x.copy(), self_mass))
        moves = kept

    out = tuple((tuple(t), float(p)) for t, p in moves if p > 0.0 or not clamp)
    return DiffusionStep(dt=h * h / q, moves=out, clamped=clamped)


@dataclass(eq=False)
class TransitionKernel:
    """Precomputed diffusion stencils for every state, in flat order.

    nbr_index/nbr_prob hold, per state, the move targets (flat indices)
    and probabilities; the final column is the self-loop that absorbs
    clamped boundary mass. dt is +inf at degenerate states.
    """

    grid: Grid
    q: np.ndarray
    dt: np.ndarray
    nbr_index: np.ndarray
    nbr_prob: np.ndarray
    degenerate: np.ndarray
    clamped: np.ndarray
    forced_species: np.ndarray  # 0-based species of the forced harvest, -1 if free

    @property
    def n_states(self) -> int:
        return self.grid.n_states

    def transitions(self, flat: int):
        """(dt, [(flat_target, prob), ...]) for the diffusion action, or None."""
        if self.degenerate[flat]:
            return None
        pairs = [
            (int(t), float(p))
            for t, p in zip(self.nbr_index[flat], self.nbr_prob[flat])
            if p > 0.0
        ]
        return float(self.dt[flat]), pairs


def build_kernel(model: Model, grid: Grid) -> TransitionKernel:
    """Vectorized stencil construction over the whole lattice."""
    if model.dim != grid.dim:
        raise KernelError(f"model dim {model.dim} != grid dim {grid.dim}")
    h = grid.h
    d = grid.dim
    n = grid.n_states
    pts = grid.points()
    multi = grid.multi_indices()
    strides = np.array(grid.strides, dtype=np.int64)
    flat = np.arange(n, dtype=np.int64)

    b, a_diag, off_row, a_full, q = _coefficients(model, pts, h)
    if float(q.min()) < -_PROB_TOL:
        bad = int(np.argmin(q))
        raise KernelError(
            f"negative q-factor {q[bad]} at state {tuple(pts[bad])}; diagonal dominance violated"
        )
    q = np.maximum(q, 0.0)
    degenerate = q == 0.0
    with np.errstate(divide="ignore"):
        dt = np.where(degenerate, np.inf, h * h / np.maximum(q, 1e-300))

    n_cross = 4 * (d * (d - 1) // 2) if a_full is not None else 0
    n_cols = 2 * d + n_cross + 1  # ±e_i, cross moves, self-loop
    nbr_index = np.tile(flat[:, None], (1, n_cols))
    nbr_prob = np.zeros((n, n_cols))

    safe_q = np.where(degenerate, 1.0, q)
    col = 0
    exits = np.zeros(n)
    at_top = multi == grid.n_per_axis - 1
    at_bottom = multi == 0

    def place(col: int, prob: np.ndarray, offset: np.ndarray, valid: np.ndarray) -> None:
        """Store a move column; invalid targets dump their mass on the self-loop."""
        prob = np.where(degenerate, 0.0, prob)
        if np.any(prob < -_PROB_TOL) or np.any(prob > 1 + _PROB_TOL):
            bad = int(np.argmax(np.abs(prob - 0.5)))
            raise KernelError(
                f"probability {prob[bad]} at state {tuple(pts[bad])} outside [0, 1]; "
                "diagonal dominance violated"
            )
        prob = np.clip(prob, 0.0, 1.0)
        keep = valid & (prob > 0.0)
        nbr_index[keep, col] = flat[keep] + offset[keep]
        nbr_prob[keep, col] = prob[keep]
        exits[~valid] += prob[~valid]

    for i in range(d):
        up = (a_diag[:, i] / 2 - off_row[:, i] / 2 + np.maximum(b[:, i], 0.0) * h) / safe_q
        dn = (a_diag[:, i] / 2 - off_row[:, i] / 2 + np.maximum(-b[:, i], 0.0) * h) / safe_q
        place(col, up, strides[i] * np.ones(n, dtype=np.int64), ~at_top[:, i]); col += 1
        place(col, dn, -strides[i] * np.ones(n, dtype=np.int64), ~at_bottom[:, i]); col += 1

    if a_full is not None:
        for i in range(d):
            for j in range(i + 1, d):
                aij = a_full[:, i, j]
                pos = np.maximum(aij, 0.0) / (2 * safe_q)
                neg = np.maximum(-aij, 0.0) / (2 * safe_q)
                si, sj = strides[i], strides[j]
                place(col, pos, (si + sj) * np.ones(n, dtype=np.int64),
                      ~at_top[:, i] & ~at_top[:, j]); col += 1
                place(col, pos, (-si - sj) * np.ones(n, dtype=np.int64),
                      ~at_bottom[:, i] & ~at_bottom[:, j]); col += 1
                place(col, neg, (si - sj) * np.ones(n, dtype=np.int64),
                      ~at_top[:, i] & ~at_bottom[:, j]); col += 1
                place(col, neg, (-si + sj) * np.ones(n, dtype=np.int64),
                      ~at_bottom[:, i] & ~at_top[:, j]); col += 1

    nbr_prob[:, -1] = exits  # self-loop column
    clamped = exits > 0.0

    forced = np.full(n, -1, dtype=np.int64)
    for i in range(d - 1, -1, -1):
        forced = np.where(at_top[:, i], i, forced)

    total = nbr_prob.sum(axis=1)
    live = ~degenerate
    if live.any() and float(np.max(np.abs(total[live] - 1.0))) > 1e-9:
        bad = int(np.argmax(np.abs(total - 1.0) * live))
        raise KernelError(f"probabilities at state {tuple(pts[bad])} sum to {total[bad]}")

    return TransitionKernel(
        grid=grid,
        q=q,
        dt=dt,
        nbr_index=nbr_index,
        nbr_prob=nbr_prob,
        degenerate=degenerate,
        clamped=clamped,
        forced_species=forced,
    )
