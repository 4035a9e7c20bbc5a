"""Nodal scalar fields, discrete gradients and Hölder-norm surrogates."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd

from discretization.errors import FieldError, FieldMismatchError
from discretization.grid import Grid, nodal_values

logger = logging.getLogger(__name__)

# Above this node count the Hölder pair scan uses strided pairs only.
HOLDER_PAIR_THRESHOLD = 4096
_PAIR_BLOCK = 256


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Values of a function at the nodes of a grid."""

    grid: Grid
    values: np.ndarray

    # numpy operands defer to the reflected operators below
    __array_ufunc__ = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.size,):
            raise FieldMismatchError(
                f"Expected {self.grid.size} nodal values, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise FieldError(f"Non-finite value at node {bad}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: Grid) -> ScalarField:
        return cls(grid, np.zeros(grid.size))

    @classmethod
    def constant(cls, grid: Grid, value: float) -> ScalarField:
        return cls(grid, np.full(grid.size, float(value)))

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[..., np.ndarray]) -> ScalarField:
        """Tabulate fn(x0, x1, ...) at the grid nodes."""
        coords = [grid.nodes[:, k] for k in range(grid.dim)]
        return cls(grid, np.broadcast_to(fn(*coords), (grid.size,)))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def _other(self, other) -> np.ndarray | float:
        if isinstance(other, ScalarField) or np.ndim(other) > 0:
            return nodal_values(self.grid, other)
        return float(other)

    def __add__(self, other) -> ScalarField:
        return ScalarField(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other) -> ScalarField:
        return ScalarField(self.grid, self.values - self._other(other))

    def __rsub__(self, other) -> ScalarField:
        return ScalarField(self.grid, self._other(other) - self.values)

    def __mul__(self, other) -> ScalarField:
        return ScalarField(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other: float) -> ScalarField:
        return ScalarField(self.grid, self.values / float(other))

    def __neg__(self) -> ScalarField:
        return ScalarField(self.grid, -self.values)

    def to_frame(self, name: str = "value") -> pd.DataFrame:
        """One row per node: coordinates then value."""
        columns = {f"x{k}": self.grid.nodes[:, k] for k in range(self.grid.dim)}
        columns[name] = self.values
        return pd.DataFrame(columns)

    def write_csv(self, path: Path, name: str = "value") -> Path:
        self.to_frame(name).to_csv(path, index=False, float_format="%.17g")
        return path


@dataclass(frozen=True)
class HolderParams:
    """Derivative order k and Hölder exponent beta of |.|_{k,beta}."""

    k: int = 0
    beta: float = 0.0

    def __post_init__(self):
        if self.k not in (0, 1):
            raise FieldError(f"Hölder order k must be 0 or 1, got {self.k}")
        if not 0.0 <= self.beta < 1.0:
            raise FieldError(f"Hölder exponent beta must lie in [0, 1), got {self.beta}")


def gradient(grid: Grid, u) -> tuple[ScalarField, ...]:
    """Per-axis derivatives: central inside, one-sided second order at the boundary."""
    shaped = grid.to_shape(nodal_values(grid, u))
    parts = np.gradient(shaped, *grid.h, edge_order=2)
    if grid.dim == 1:
        parts = [parts]
    return tuple(ScalarField(grid, grid.to_flat(p)) for p in parts)


def _pair_seminorm_full(nodes: np.ndarray, values: np.ndarray, beta: float) -> float:
    best = 0.0
    count = len(values)
    for start in range(0, count, _PAIR_BLOCK):
        stop = min(start + _PAIR_BLOCK, count)
        diff = np.abs(values[start:stop, None] - values[None, :])
        dist = np.linalg.norm(nodes[start:stop, None, :] - nodes[None, :, :], axis=-1)
        upper = np.arange(count)[None, :] > np.arange(start, stop)[:, None]
        if not upper.any():
            continue
        ratio = diff[upper] / dist[upper] ** beta
        best = max(best, float(ratio.max()))
    return best


def _pair_seminorm_strided(nodes: np.ndarray, values: np.ndarray, beta: float) -> float:
    # pairs (i, i + s) for s = 1, 2, 4, ... in flat node order
    best = 0.0
    count = len(values)
    stride = 1
    while stride < count:
        diff = np.abs(values[stride:] - values[:-stride])
        dist = np.linalg.norm(nodes[stride:] - nodes[:-stride], axis=-1)
        best = max(best, float((diff / dist**beta).max()))
        stride *= 2
    return best


def holder_norm(
    grid: Grid,
    w,
    p: HolderParams,
    pair_threshold: int = HOLDER_PAIR_THRESHOLD,
) -> float:
    """Discrete surrogate of |w|_{k,beta}.

    Sum over orders j <= k of the nodal sup of |D^gamma w|, plus (for beta > 0)
    the largest pairwise beta-difference quotient of the order-k derivatives.
    Grids with more than pair_threshold nodes use strided pairs only.
    """
    values = nodal_values(grid, w)
    derivatives = [values]
    total = float(np.max(np.abs(values)))
    if p.k == 1:
        derivatives = [g.values for g in gradient(grid, values)]
        total += max(float(np.max(np.abs(d))) for d in derivatives)

    if p.beta > 0.0:
        scan = _pair_seminorm_full if grid.size <= pair_threshold else _pair_seminorm_strided
        total += max(scan(grid.nodes, d, p.beta) for d in derivatives)
    return total
