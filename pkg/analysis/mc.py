"""Monte Carlo references for P{G(sigma xi) > b}: crude sampling and exponentially tilted importance sampling.

Samples are drawn in fixed-size chunks, chunk k from the sub-stream
SeedSequence(seed, spawn_key=(k,)). Chunks are evaluated on a thread pool and
reassembled in chunk order, so an estimate depends only on (seed, n, chunk_size).

The importance measure shifts the field mean to C xi*, not to xi*.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from analysis.errors import EstimationError
from analysis.functional import eval_G, exp_integral_values
from analysis.optimizer import AsymptoticParams, KktSolution
from analysis.problem import Problem
from discretization.covariance import CovarianceModel, apply_C, k_energy, sample_values, substream
from discretization.errors import TailProbError
from discretization.grid import nodal_values

logger = logging.getLogger(__name__)

MC_METHODS = ("crude", "importance")
DEFAULT_CHUNK_SIZE = 1000
ESS_WARN_FRACTION = 0.01
Z95 = 1.96


@dataclass(frozen=True, eq=False)
class McEstimate:
    mean: float
    std_error: float
    n: int
    hits: int
    ci95: tuple[float, float]
    method: str
    seed: int
    ess: float | None = None
    log_weight_span: float | None = None
    samples: pd.DataFrame | None = field(default=None, repr=False)

    @property
    def relative_error(self) -> float:
        return self.std_error / self.mean if self.mean > 0 else math.inf

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std_error": self.std_error,
            "n": self.n,
            "hits": self.hits,
            "ci95": list(self.ci95),
            "method": self.method,
            "seed": self.seed,
            "ess": self.ess,
            "log_weight_span": self.log_weight_span,
        }


def _log_weights(rows: np.ndarray, tilt: np.ndarray, tilt_energy: float) -> np.ndarray:
    # tilt = q * xi*, so rows @ tilt is <xi*, xi> row by row
    return -(rows @ tilt) + 0.5 * tilt_energy


def log_likelihood_ratio(model: CovarianceModel, xi, xi_star) -> float:
    """log dP/dQ at xi: -<xi*, xi> + K(xi*)/2."""
    star = nodal_values(model.grid, xi_star)
    return float(_log_weights(nodal_values(model.grid, xi), model.grid.quad_weights * star, k_energy(model, star)))


def likelihood_ratio(model: CovarianceModel, xi, xi_star) -> float:
    """dP/dQ at xi; inf when the log-ratio is beyond float range."""
    with np.errstate(over="ignore"):
        return float(np.exp(log_likelihood_ratio(model, xi, xi_star)))


def _chunks(n: int, chunk_size: int) -> list[tuple[int, int, int]]:
    """(chunk index, first sample index, size)."""
    return [(k, start, min(chunk_size, n - start)) for k, start in enumerate(range(0, n, chunk_size))]


def _g_rows(problem: Problem, sigma: float, rows: np.ndarray, offset: int) -> np.ndarray:
    if problem.functional.kind == "exp_integral":
        return exp_integral_values(problem, sigma * rows)
    out = np.empty(rows.shape[0])
    for i, row in enumerate(rows):
        try:
            out[i] = eval_G(problem, sigma * row)
        except TailProbError as e:
            raise EstimationError(f"Sample {offset + i} failed: {e}", sample_index=offset + i) from e
    return out


def _sample_chunk(problem: Problem, params: AsymptoticParams, seed: int, chunk: tuple[int, int, int],
                  mean: np.ndarray | None, tilt: np.ndarray | None, tilt_energy: float) -> tuple[np.ndarray, np.ndarray]:
    index, start, size = chunk
    rows = sample_values(problem.covariance, substream(seed, index), size)
    if mean is not None:
        rows = rows + mean
    values = _g_rows(problem, params.sigma, rows, start)
    if tilt is None:
        return values, np.zeros(size)
    return values, _log_weights(rows, tilt, tilt_energy)


def _draw(problem: Problem, params: AsymptoticParams, n: int, seed: int, workers: int, chunk_size: int,
          xi_star=None) -> tuple[np.ndarray, np.ndarray]:
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    if workers < 1 or chunk_size < 1:
        raise ValueError("workers and chunk_size must be positive")

    mean = tilt = None
    tilt_energy = 0.0
    if xi_star is not None:
        star = nodal_values(problem.grid, xi_star)
        mean = apply_C(problem.covariance, star).values
        tilt = problem.grid.quad_weights * star
        tilt_energy = k_energy(problem.covariance, star)

    chunks = _chunks(n, chunk_size)
    run = lambda chunk: _sample_chunk(problem, params, seed, chunk, mean, tilt, tilt_energy)  # noqa: E731
    if workers == 1:
        parts = [run(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _summarize(values: np.ndarray, log_weights: np.ndarray, b: float, method: str, seed: int,
               keep_samples: bool) -> McEstimate:
    n = values.size
    hit = values > b
    hits = int(np.count_nonzero(hit))

    ess = span = None
    if hits:
        hit_weights = log_weights[hit]
        shift = float(np.max(hit_weights))
        span = float(shift - np.min(hit_weights))
        scaled = np.where(hit, np.exp(np.where(hit, log_weights - shift, 0.0)), 0.0)
        with np.errstate(over="ignore"):
            scale = float(np.exp(shift))
        mean = scale * float(np.mean(scaled))
        second = float(np.mean(scaled**2))
        variance = max(second - float(np.mean(scaled)) ** 2, 0.0)
        std_error = scale * math.sqrt(variance / n)
        ess = float(np.sum(scaled)) ** 2 / float(np.sum(scaled**2))
    else:
        mean = std_error = 0.0
        ess = 0.0

    samples = None
    if keep_samples:
        samples = pd.DataFrame({
            "sample_index": np.arange(n),
            "G_value": values,
            "indicator": hit.astype(int),
            "log_weight": log_weights,
        })
    return McEstimate(
        mean=mean,
        std_error=std_error,
        n=n,
        hits=hits,
        ci95=(mean - Z95 * std_error, mean + Z95 * std_error),
        method=method,
        seed=seed,
        ess=ess,
        log_weight_span=span,
        samples=samples,
    )


def crude_mc(problem: Problem, params: AsymptoticParams, n: int, seed: int, workers: int = 1,
             chunk_size: int = DEFAULT_CHUNK_SIZE, keep_samples: bool = False) -> McEstimate:
    """Fraction of n fields xi ~ N(0, C) with G(sigma xi) > b."""
    logger.info("Crude MC: n=%d seed=%d workers=%d", n, seed, workers)
    values, log_weights = _draw(problem, params, n, seed, workers, chunk_size)
    estimate = _summarize(values, log_weights, params.b, "crude", seed, keep_samples)
    logger.info("Crude MC done: mean=%.6g se=%.3g hits=%d", estimate.mean, estimate.std_error, estimate.hits)
    return estimate


def importance_sampling(problem: Problem, params: AsymptoticParams, solution: KktSolution, n: int, seed: int,
                        workers: int = 1, chunk_size: int = DEFAULT_CHUNK_SIZE, keep_samples: bool = False,
                        ess_warn_fraction: float = ESS_WARN_FRACTION) -> McEstimate:
    """Tilted estimator: sample under mean C xi*, weight hits by dP/dQ."""
    logger.info("Importance sampling: n=%d seed=%d workers=%d", n, seed, workers)
    values, log_weights = _draw(problem, params, n, seed, workers, chunk_size, xi_star=solution.xi_star)
    estimate = _summarize(values, log_weights, params.b, "importance", seed, keep_samples)
    if estimate.ess < ess_warn_fraction * n:
        logger.warning(
            "Effective sample size %.1f is below %.0f%% of n=%d; sigma may be outside the asymptotic regime",
            estimate.ess, 100 * ess_warn_fraction, n,
        )
    logger.info("Importance sampling done: mean=%.6g se=%.3g hits=%d ess=%.1f",
                estimate.mean, estimate.std_error, estimate.hits, estimate.ess)
    return estimate
