"""Covariance kernels, the integral operator C, the energy K and Gaussian field sampling.

Kernels and the HolderParams they support:
    squared_exponential: smooth samples, k=1 with any beta is legitimate
    exponential        : rough samples, only k=0 (beta < 1/2) is legitimate
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cholesky
from scipy.spatial.distance import cdist

from discretization.errors import CovarianceError
from discretization.field import ScalarField
from discretization.grid import Grid, inner_product, nodal_values

logger = logging.getLogger(__name__)

KERNEL_KINDS = ("squared_exponential", "exponential")
JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8, 1e-6)
ENERGY_RTOL = 1e-12


@dataclass(frozen=True)
class CovarianceKernel:
    kind: str
    length_scale: float

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise CovarianceError(f"Unknown kernel kind '{self.kind}', expected one of {KERNEL_KINDS}")
        if not self.length_scale > 0:
            raise CovarianceError(f"Kernel length_scale must be positive, got {self.length_scale}")

    def of_distance(self, dist: np.ndarray) -> np.ndarray:
        dist = np.asarray(dist, dtype=float)
        if self.kind == "squared_exponential":
            return np.exp(-(dist**2) / (2.0 * self.length_scale**2))
        return np.exp(-dist / self.length_scale)

    def __call__(self, x: Sequence[float], y: Sequence[float]) -> float:
        dist = np.linalg.norm(np.atleast_1d(np.asarray(x, float) - np.asarray(y, float)))
        return float(self.of_distance(dist))


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """Assembled covariance matrix with a lower Cholesky factor of matrix + jitter*I."""

    grid: Grid
    kernel: CovarianceKernel
    matrix: np.ndarray
    factor: np.ndarray
    jitter: float


def assemble(grid: Grid, kernel: CovarianceKernel, jitter_ladder: Sequence[float] = JITTER_LADDER) -> CovarianceModel:
    """Fill the covariance matrix and factorize it, escalating jitter until Cholesky succeeds."""
    matrix = kernel.of_distance(cdist(grid.nodes, grid.nodes))
    matrix = 0.5 * (matrix + matrix.T)
    np.fill_diagonal(matrix, 1.0)

    identity = np.eye(grid.size)
    for jitter in jitter_ladder:
        try:
            factor = cholesky(matrix + jitter * identity, lower=True)
        except LinAlgError:
            logger.warning("Cholesky failed with jitter %.0e, escalating", jitter)
            continue
        if jitter > 0:
            logger.warning(
                "Covariance (%s, l=%g) on %d nodes needed jitter %.0e",
                kernel.kind, kernel.length_scale, grid.size, jitter,
            )
        matrix.setflags(write=False)
        factor.setflags(write=False)
        logger.info("Assembled %s covariance on %d nodes (jitter %.0e)", kernel.kind, grid.size, jitter)
        return CovarianceModel(grid=grid, kernel=kernel, matrix=matrix, factor=factor, jitter=float(jitter))

    raise CovarianceError(
        f"Covariance matrix for {kernel.kind} kernel (l={kernel.length_scale}) on grid n={grid.n} "
        f"is not positive definite even with jitter {jitter_ladder[-1]:.0e}"
    )


def apply_C(model: CovarianceModel, w) -> ScalarField:
    """(Cw)_i = sum_j C_ij q_j w_j, the quadrature form of the integral operator."""
    values = nodal_values(model.grid, w)
    return ScalarField(model.grid, model.matrix @ (model.grid.quad_weights * values))


def k_energy(model: CovarianceModel, w) -> float:
    """K(w) = <w, Cw>; round-off negatives are clamped to zero."""
    values = nodal_values(model.grid, w)
    energy = inner_product(model.grid, values, apply_C(model, values))
    if energy < 0.0:
        weighted = np.abs(model.grid.quad_weights * values)
        scale = max(1.0, float(weighted @ np.abs(model.matrix) @ weighted))
        if energy < -ENERGY_RTOL * scale:
            raise CovarianceError(f"Covariance energy is negative ({energy:.3e}); matrix is indefinite")
        energy = 0.0
    return energy


def substream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for sub-stream `index` of the master seed."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def sample_values(model: CovarianceModel, rng: np.random.Generator, size: int) -> np.ndarray:
    """Draw `size` fields as rows of a (size, nodes) array."""
    z = rng.standard_normal((size, model.grid.size))
    return z @ model.factor.T


def sample(model: CovarianceModel, rng: np.random.Generator) -> ScalarField:
    """Draw one mean-zero Gaussian field with covariance matrix + jitter*I."""
    return ScalarField(model.grid, sample_values(model, rng, 1)[0])
