"""Finite-difference solver for -div(a grad u) = f with zero Dirichlet data.

The interior system is stored in LAPACK upper banded form and factorized once
per coefficient field; forward and adjoint solves share the factorization.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded

from discretization.errors import CoefficientError, SolverError
from discretization.field import ScalarField
from discretization.grid import Grid, nodal_values

logger = logging.getLogger(__name__)

RESIDUAL_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class EllipticOperator:
    grid: Grid
    a: ScalarField
    system: np.ndarray  # upper banded form, row `bandwidth` is the diagonal
    factor: np.ndarray

    @property
    def bandwidth(self) -> int:
        return self.system.shape[0] - 1

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Apply the interior system matrix to x."""
        u = self.bandwidth
        y = self.system[u] * x
        for d in range(1, u + 1):
            sup = self.system[u - d, d:]
            y[:-d] += sup * x[d:]
            y[d:] += sup * x[:-d]
        return y

    def dense(self) -> np.ndarray:
        """Dense interior system, for inspection and tests."""
        u = self.bandwidth
        out = np.diag(self.system[u].copy())
        for d in range(1, u + 1):
            sup = self.system[u - d, d:]
            out += np.diag(sup, d) + np.diag(sup, -d)
        return out


def harmonic_mean(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    return 2.0 * left * right / (left + right)


def _check_positive(grid: Grid, a: np.ndarray):
    bad = np.flatnonzero(~(a > 0.0))
    if bad.size:
        node = int(bad[0])
        raise CoefficientError(
            f"Coefficient must be positive; a={a[node]!r} at node {node} "
            f"(x={grid.nodes[node].tolist()})",
            node=node,
        )


def build_operator(grid: Grid, a) -> EllipticOperator:
    """Assemble the 3-point (1D) or 5-point (2D) stencil with harmonic edge coefficients."""
    values = nodal_values(grid, a)
    _check_positive(grid, values)
    field = a if isinstance(a, ScalarField) else ScalarField(grid, values)
    shaped = grid.to_shape(values)

    if grid.dim == 1:
        (h,) = grid.h
        edge = harmonic_mean(shaped[:-1], shaped[1:]) / h**2
        m = grid.n[0] - 2
        system = np.zeros((2, m))
        system[1] = edge[:-1] + edge[1:]
        system[0, 1:] = -edge[1:-1]
    else:
        h0, h1 = grid.h
        n0, n1 = grid.n
        m0, m1 = n0 - 2, n1 - 2
        ex = harmonic_mean(shaped[:-1, :], shaped[1:, :]) / h0**2  # (n0-1, n1)
        ey = harmonic_mean(shaped[:, :-1], shaped[:, 1:]) / h1**2  # (n0, n1-1)
        diag = ex[:-1, 1:-1] + ex[1:, 1:-1] + ey[1:-1, :-1] + ey[1:-1, 1:]
        # coupling of interior (i0, i1) to (i0+1, i1); zero across the i0 = n0-2 edge
        east = -ex[1:, 1:-1].copy()
        east[-1, :] = 0.0
        north = -ey[1:-1, 1:-1]  # (m0, m1-1): the top row couples to the boundary
        system = np.zeros((m0 + 1, m0 * m1))
        system[m0] = diag.ravel(order="F")
        system[m0 - 1, 1:] = east.ravel(order="F")[:-1]
        system[0, m0:] = north.ravel(order="F")

    try:
        factor = cholesky_banded(system, lower=False)
    except LinAlgError as e:
        raise SolverError(f"Banded Cholesky failed for grid n={grid.n}: {e}") from e

    system.setflags(write=False)
    factor.setflags(write=False)
    return EllipticOperator(grid=grid, a=field, system=system, factor=factor)


def solve(op: EllipticOperator, rhs, check: bool = True) -> ScalarField:
    """Solve the Dirichlet problem; boundary entries of rhs are ignored."""
    grid = op.grid
    interior = grid.interior_mask
    b = nodal_values(grid, rhs)[interior]
    x = cho_solve_banded((op.factor, False), b)

    if check:
        residual = np.max(np.abs(op.matvec(x) - b))
        scale = np.max(np.abs(b)) + np.max(np.abs(op.system)) * np.max(np.abs(x))
        if residual > RESIDUAL_RTOL * max(scale, np.finfo(float).tiny):
            raise SolverError(f"Elliptic solve residual {residual:.3e} exceeds tolerance (scale {scale:.3e})")

    u = np.zeros(grid.size)
    u[interior] = x
    return ScalarField(grid, u)
