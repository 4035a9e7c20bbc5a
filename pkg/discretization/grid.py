"""Tensor-product grids on box domains with trapezoid quadrature.

Node ordering: axis 0 varies fastest (Fortran order). CSV fields and
every flattened array in the package follow this convention.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Sequence

import numpy as np

from discretization.errors import FieldMismatchError, GridError

logger = logging.getLogger(__name__)

MEASURE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class Grid:
    """Box grid with nodal trapezoid weights."""

    dim: int
    bounds: tuple[tuple[float, float], ...]
    n: tuple[int, ...]
    nodes: np.ndarray
    h: tuple[float, ...]
    quad_weights: np.ndarray

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @property
    def key(self) -> tuple:
        """Identity used to bind fields to this grid."""
        return (self.dim, self.bounds, self.n)

    @property
    def measure(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.bounds]))

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        idx = np.indices(self.n)
        mask = np.zeros(self.n, dtype=bool)
        for axis, count in enumerate(self.n):
            mask |= (idx[axis] == 0) | (idx[axis] == count - 1)
        flat = mask.ravel(order="F")
        flat.setflags(write=False)
        return flat

    @property
    def interior_mask(self) -> np.ndarray:
        return ~self.boundary_mask

    def is_boundary(self, index: int) -> bool:
        return bool(self.boundary_mask[index])

    def to_shape(self, values: np.ndarray) -> np.ndarray:
        """Reshape a flat nodal array to the per-axis shape."""
        return np.asarray(values).reshape(self.n, order="F")

    def to_flat(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values).ravel(order="F")

    def axis(self, k: int) -> np.ndarray:
        lo, hi = self.bounds[k]
        return np.linspace(lo, hi, self.n[k])

    def to_dict(self) -> dict[str, Any]:
        return {
            "dim": self.dim,
            "bounds": [list(b) for b in self.bounds],
            "n": list(self.n),
        }


def _trapezoid_weights(count: int, h: float) -> np.ndarray:
    w = np.full(count, h)
    w[0] = w[-1] = 0.5 * h
    return w


def build_grid(bounds: Sequence[Sequence[float]], n: Sequence[int]) -> Grid:
    """Build a 1D or 2D tensor grid.

    Args:
        bounds: per-axis (low, high) pairs
        n: per-axis node counts, boundary nodes included (each >= 3)

    Returns:
        Grid with trapezoid quadrature weights.
    """
    bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
    n = tuple(int(c) for c in n)

    if len(bounds) not in (1, 2):
        raise GridError(f"Only 1D and 2D grids are supported, got {len(bounds)} axes")
    if len(n) != len(bounds):
        raise GridError(f"Got {len(n)} node counts for {len(bounds)} axes")
    for axis, ((lo, hi), count) in enumerate(zip(bounds, n)):
        if count < 3:
            raise GridError(f"Axis {axis}: need at least 3 nodes, got {count}")
        if not (np.isfinite(lo) and np.isfinite(hi)) or not lo < hi:
            raise GridError(f"Axis {axis}: degenerate bounds ({lo}, {hi})")

    h = tuple((hi - lo) / (count - 1) for (lo, hi), count in zip(bounds, n))
    axes = [np.linspace(lo, hi, count) for (lo, hi), count in zip(bounds, n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.column_stack([m.ravel(order="F") for m in mesh])

    weights = _trapezoid_weights(n[0], h[0])
    for count, step in zip(n[1:], h[1:]):
        weights = np.multiply.outer(weights, _trapezoid_weights(count, step))
    weights = np.asarray(weights).ravel(order="F")

    nodes.setflags(write=False)
    weights.setflags(write=False)
    grid = Grid(dim=len(n), bounds=bounds, n=n, nodes=nodes, h=h, quad_weights=weights)

    total = float(weights.sum())
    if abs(total - grid.measure) > MEASURE_RTOL * grid.measure:
        raise GridError(f"Quadrature weights sum to {total}, expected {grid.measure}")

    logger.debug("Built %dD grid n=%s h=%s", grid.dim, n, h)
    return grid


def nodal_values(grid: Grid, w: Any) -> np.ndarray:
    """Return the flat value array of a field or array, checking it belongs to grid."""
    owner = getattr(w, "grid", None)
    if owner is not None and owner.key != grid.key:
        raise FieldMismatchError(f"Field lives on grid {owner.key}, expected {grid.key}")
    values = np.asarray(getattr(w, "values", w), dtype=float)
    if values.shape != (grid.size,):
        raise FieldMismatchError(f"Expected {grid.size} nodal values, got shape {values.shape}")
    return values


def quadrature(grid: Grid, w: Any) -> float:
    """Trapezoid approximation of the integral of w over the domain."""
    return float(grid.quad_weights @ nodal_values(grid, w))


def inner_product(grid: Grid, v: Any, w: Any) -> float:
    """Quadrature inner product <v, w>."""
    return float(grid.quad_weights @ (nodal_values(grid, v) * nodal_values(grid, w)))
