"""Uniform box grids, grid functions and the dual frequency lattice.

All operators in the package act on complex vectors indexed by the points of a
:class:`BoxGrid`, flattened row-major with axis 0 slowest.  Use
:meth:`BoxGrid.points` / :meth:`BoxGrid.index` rather than re-deriving the order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

DEFAULT_BUDGET = 4096


class GridError(ValueError):
    """Invalid grid construction or mismatched grid functions."""


class BudgetError(GridError):
    """Point count exceeds the dense-matrix budget."""


@dataclass(frozen=True)
class BoxGrid:
    """Grid on the box [-L/2, L/2)^d with N points per axis."""

    d: int
    L: float
    N: int
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        if self.d < 2:
            raise GridError(f"d must be >= 2, got {self.d}")
        if self.N < 4 or self.N % 2:
            raise GridError(f"N must be an even integer >= 4, got {self.N}")
        if not self.L > 0:
            raise GridError(f"L must be positive, got {self.L}")
        if self.N ** self.d > self.budget:
            raise BudgetError(
                f"N^d = {self.N ** self.d} exceeds the matrix budget {self.budget}")

    @property
    def h(self) -> float:
        return self.L / self.N

    @property
    def size(self) -> int:
        return self.N ** self.d

    @property
    def cell_volume(self) -> float:
        return self.h ** self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    def axis(self) -> np.ndarray:
        return -self.L / 2 + self.h * np.arange(self.N)

    def multi_index(self) -> np.ndarray:
        """(size, d) integer indices in canonical order."""
        grids = np.meshgrid(*([np.arange(self.N)] * self.d), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def points(self) -> np.ndarray:
        """(size, d) coordinates in canonical order."""
        return -self.L / 2 + self.h * self.multi_index()

    def index(self, k) -> np.ndarray | int:
        """Flat index of integer multi-index ``k`` (last axis has length d)."""
        k = np.asarray(k)
        return np.ravel_multi_index(tuple(np.moveaxis(k, -1, 0)), self.shape)

    def nearest(self, x) -> int:
        """Flat index of the grid point closest to ``x`` (must lie in the box)."""
        x = np.asarray(x, dtype=float)
        k = np.rint((x + self.L / 2) / self.h).astype(int)
        if np.any(k < 0) or np.any(k >= self.N):
            raise GridError(f"point {x.tolist()} lies outside the box")
        return int(self.index(k))

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.all((x >= -self.L / 2) & (x < self.L / 2), axis=-1)

    def dual(self) -> DualLattice:
        return DualLattice.for_grid(self)


@dataclass(frozen=True)
class DualLattice:
    """Frequencies (2 pi / L) k with k in [-N/2, N/2)^d, in FFT order per axis."""

    grid: BoxGrid
    axis_freqs: np.ndarray = field(repr=False)

    @classmethod
    def for_grid(cls, g: BoxGrid) -> DualLattice:
        return cls(g, 2 * np.pi * np.fft.fftfreq(g.N, d=g.h))

    @property
    def weight(self) -> float:
        """Riemann weight of one frequency for the measure (2 pi)^-d d xi."""
        return self.grid.L ** (-self.grid.d)

    @property
    def nyquist(self) -> float:
        return np.pi / self.grid.h

    def frequencies(self) -> np.ndarray:
        """(size, d) frequencies; row order matches ``np.fft.fftn`` output raveled."""
        grids = np.meshgrid(*([self.axis_freqs] * self.grid.d), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def nyquist_mask(self) -> np.ndarray:
        """(size, d) booleans marking components sitting on the Nyquist row."""
        return np.isclose(self.frequencies(), -self.nyquist)


@dataclass(frozen=True)
class GridFunction:
    grid: BoxGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).ravel()
        if v.size != self.grid.size:
            raise GridError(f"expected {self.grid.size} values, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise GridError("grid function has non-finite entries")
        object.__setattr__(self, "values", v)

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def norm(self) -> float:
        return float(np.sqrt(l2_inner(self, self).real))

    def __add__(self, other: GridFunction) -> GridFunction:
        _same_grid(self, other)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other: GridFunction) -> GridFunction:
        _same_grid(self, other)
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, c) -> GridFunction:
        return GridFunction(self.grid, self.values * c)

    __rmul__ = __mul__


def make_grid(d: int, L: float, N: int, budget: int = DEFAULT_BUDGET) -> BoxGrid:
    if int(N) != N:
        raise GridError(f"N must be an integer, got {N}")
    return BoxGrid(int(d), float(L), int(N), budget)


def sample(f: Callable[[np.ndarray], np.ndarray], g: BoxGrid) -> GridFunction:
    """Evaluate a vectorized pointwise function (takes (n, d) points) on the grid."""
    x = g.points()
    with np.errstate(all="ignore"):
        vals = np.broadcast_to(np.asarray(f(x), dtype=complex), (g.size,))
    bad = ~np.isfinite(vals)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise GridError(f"non-finite sample at grid point {x[k].tolist()}")
    return GridFunction(g, vals.copy())


def _same_grid(u: GridFunction, v: GridFunction):
    if u.grid != v.grid:
        raise GridError("grid functions live on different grids")


def l2_inner(u: GridFunction, v: GridFunction) -> complex:
    _same_grid(u, v)
    return complex(u.grid.cell_volume * np.vdot(v.values, u.values))


def fourier_norm_sq(u: GridFunction) -> float:
    """Squared L2 norm computed on the dual lattice (Parseval partner of ``l2_inner``)."""
    g = u.grid
    uhat = np.fft.fftn(u.as_array()) * g.cell_volume
    return float(g.dual().weight * np.sum(np.abs(uhat) ** 2))
