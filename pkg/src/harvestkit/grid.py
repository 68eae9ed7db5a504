"""Truncated uniform lattice {0, h, 2h, ..., U}^d with flat indexing.

States are multi-indices k = (k_1, ..., k_d), k_i in {0, ..., U/h}; the
flat index is the C-order ravel of k, so moving one lattice step along
axis j changes the flat index by the axis stride. The mapping is a
bijection and round-trips exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GridError(ValueError):
    """Invalid lattice geometry."""


@dataclass(frozen=True)
class Grid:
    h: float
    bound: float
    dim: int
    n_per_axis: int

    @property
    def n_states(self) -> int:
        return self.n_per_axis**self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_per_axis,) * self.dim

    @property
    def strides(self) -> tuple[int, ...]:
        return tuple(self.n_per_axis ** (self.dim - 1 - j) for j in range(self.dim))

    def points(self) -> np.ndarray:
        """Coordinates of every state, shape (n_states, dim), flat order."""
        return self.multi_indices().astype(float) * self.h

    def multi_indices(self) -> np.ndarray:
        """Multi-index of every state, shape (n_states, dim), flat order."""
        idx = np.unravel_index(np.arange(self.n_states), self.shape)
        return np.stack(idx, axis=-1)

    def flat_index(self, multi) -> int:
        multi = tuple(int(k) for k in np.atleast_1d(multi))
        if len(multi) != self.dim:
            raise GridError(f"multi-index {multi} has wrong dimension (expected {self.dim})")
        if any(k < 0 or k >= self.n_per_axis for k in multi):
            raise GridError(f"multi-index {multi} outside the lattice")
        return int(np.ravel_multi_index(multi, self.shape))

    def multi_index(self, flat: int) -> tuple[int, ...]:
        if flat < 0 or flat >= self.n_states:
            raise GridError(f"flat index {flat} outside the lattice")
        return tuple(int(k) for k in np.unravel_index(flat, self.shape))

    def state(self, flat: int) -> np.ndarray:
        return np.array(self.multi_index(flat), dtype=float) * self.h

    def flat_of_state(self, x) -> int:
        """Flat index of an exact grid point (1e-9-relative snapping)."""
        x = np.asarray(x, dtype=float).reshape(self.dim)
        k = np.rint(x / self.h)
        if np.any(np.abs(k * self.h - x) > 1e-9 * max(1.0, self.bound)):
            raise GridError(f"{tuple(x)} is not a lattice point (h={self.h})")
        return self.flat_index(k.astype(int))

    def nearest_flat(self, x: np.ndarray) -> np.ndarray:
        """Flat index of the nearest state, clamped into [0, U]^d; batched."""
        x = np.asarray(x, dtype=float)
        k = np.clip(np.rint(x / self.h).astype(np.int64), 0, self.n_per_axis - 1)
        strides = np.array(self.strides, dtype=np.int64)
        return (k * strides).sum(axis=-1)


def build_grid(h: float, bound: float, dim: int, max_states: int = 100_000_000) -> Grid:
    """Lattice over [0, U]^d with spacing h; U must be an integer multiple of h."""
    if h <= 0:
        raise GridError(f"h must be positive, got {h}")
    if bound < 0:
        raise GridError(f"bound must be nonnegative, got {bound}")
    if dim < 1:
        raise GridError(f"dim must be a positive integer, got {dim}")
    ratio = bound / h
    if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
        raise GridError(f"bound {bound} is not an integer multiple of h={h}")
    n = int(round(ratio)) + 1
    if n**dim > max_states:
        raise GridError(f"{n**dim} states exceed the cap of {max_states}")
    return Grid(h=float(h), bound=float(bound), dim=int(dim), n_per_axis=n)
