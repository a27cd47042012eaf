"""Piecewise-constant vector functions on a uniform time grid.

Everything downstream works in the discretized function space: a function
h : [0, horizon] -> R^m is stored as one value per (cell, component).  For
step functions the L2 inner product is the exact finite sum
``dt * sum_k <h_k, g_k>``, so no quadrature error enters any residual.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ShapeMismatch


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, horizon] into `cells` intervals."""

    horizon: float
    cells: int

    def __post_init__(self):
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError(f"horizon must be positive and finite, got {self.horizon}")
        if not (isinstance(self.cells, (int, np.integer)) and self.cells >= 1):
            raise ValueError(f"cells must be a positive integer, got {self.cells}")

    @property
    def dt(self) -> float:
        return self.horizon / self.cells

    def midpoints(self) -> np.ndarray:
        return (np.arange(self.cells) + 0.5) * self.dt


def make_grid(horizon: float, cells: int) -> TimeGrid:
    """Validate and build a uniform grid over [0, horizon]."""
    return TimeGrid(float(horizon), int(cells))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """A step function with `components` values per grid cell.

    Instances are treated as immutable: the value array is copied on
    construction and write-locked, and all arithmetic returns new objects.
    """

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2 or vals.shape[0] != self.grid.cells:
            raise ShapeMismatch(
                f"values must have shape ({self.grid.cells}, m), got {np.shape(self.values)}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def components(self) -> int:
        return self.values.shape[1]

    @classmethod
    def zeros(cls, grid: TimeGrid, components: int) -> "GridFunction":
        return cls(grid, np.zeros((grid.cells, components)))

    @classmethod
    def constant(cls, grid: TimeGrid, vec) -> "GridFunction":
        """Constant-in-time function with cell value `vec` (scalar or length-m)."""
        row = np.atleast_1d(np.asarray(vec, dtype=float))
        return cls(grid, np.tile(row, (grid.cells, 1)))

    @classmethod
    def from_callable(cls, grid: TimeGrid, fn: Callable[[float], Sequence[float]]) -> "GridFunction":
        """Sample a closed-form curve at cell midpoints."""
        rows = [np.atleast_1d(np.asarray(fn(t), dtype=float)) for t in grid.midpoints()]
        return cls(grid, np.vstack(rows))

    def with_values(self, vals: np.ndarray) -> "GridFunction":
        return GridFunction(self.grid, vals)

    def refine(self, factor: int) -> "GridFunction":
        """The same step function represented on a grid with `factor` x cells."""
        if factor < 1:
            raise ValueError("refinement factor must be >= 1")
        fine = TimeGrid(self.grid.horizon, self.grid.cells * int(factor))
        return GridFunction(fine, np.repeat(self.values, int(factor), axis=0))

    def __add__(self, other: "GridFunction") -> "GridFunction":
        _check_same_shape(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        _check_same_shape(self, other)
        return self.with_values(self.values - other.values)

    def __neg__(self) -> "GridFunction":
        return self.with_values(-self.values)

    def __mul__(self, scalar: float) -> "GridFunction":
        return self.with_values(self.values * float(scalar))

    __rmul__ = __mul__


class PriceCurve(GridFunction):
    """A grid function whose value in every cell lies on the unit simplex."""

    _SIMPLEX_TOL = 1e-9

    def __post_init__(self):
        super().__post_init__()
        sums = self.values.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > self._SIMPLEX_TOL) or np.any(self.values < -1e-12):
            raise ValueError("price curve must lie on the per-cell unit simplex")

    @classmethod
    def uniform(cls, grid: TimeGrid, goods: int) -> "PriceCurve":
        return cls(grid, np.full((grid.cells, goods), 1.0 / goods))


def _check_same_shape(h: GridFunction, g: GridFunction) -> None:
    if h.grid != g.grid or h.components != g.components:
        raise ShapeMismatch(
            f"grid mismatch: ({h.grid}, m={h.components}) vs ({g.grid}, m={g.components})"
        )


def inner_product(h: GridFunction, g: GridFunction) -> float:
    """Exact L2 pairing of two step functions: dt * sum of cellwise dot products."""
    _check_same_shape(h, g)
    return float(h.grid.dt * np.sum(h.values * g.values))


def norm(h: GridFunction) -> float:
    """L2 norm induced by `inner_product`."""
    return float(np.sqrt(h.grid.dt) * np.linalg.norm(h.values))


def integrate_component(h: GridFunction, j: int) -> float:
    """Time integral of one component, used by market clearing and cap sets."""
    if not 0 <= j < h.components:
        raise ValueError(f"component index {j} out of range [0, {h.components})")
    return float(h.grid.dt * h.values[:, j].sum())


def stack_components(fns: Sequence[GridFunction]) -> GridFunction:
    """Concatenate the component axes of same-grid functions into one function."""
    if not fns:
        raise ValueError("need at least one grid function to stack")
    grid = fns[0].grid
    for f in fns[1:]:
        if f.grid != grid:
            raise ShapeMismatch("all stacked functions must share the grid")
    return GridFunction(grid, np.hstack([f.values for f in fns]))


def split_components(h: GridFunction, blocks: int) -> list[GridFunction]:
    """Inverse of `stack_components` for equally sized blocks."""
    if h.components % blocks != 0:
        raise ShapeMismatch(f"cannot split {h.components} components into {blocks} blocks")
    width = h.components // blocks
    return [h.with_values(h.values[:, i * width : (i + 1) * width]) for i in range(blocks)]
