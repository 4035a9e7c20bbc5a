"""Sharp small-noise tail approximation.

    P{G(sigma xi) > b} ~ c1 sigma^(1-alpha) exp(-K*/2),   c1 = kappa^-1 sqrt(K(G'[0]) / 2pi)

For linear_pde, G'[0] = a0 grad g0 . grad u0, so c1 is the PDE prefactor
without a separate code path. Everything is computed in log space.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

from analysis.errors import DegenerateFunctionalError
from analysis.optimizer import DEGENERATE_ENERGY, AsymptoticParams, KktSolution
from analysis.problem import Problem

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TailEstimate:
    probability: float
    log_probability: float
    c1: float
    k_star: float
    sigma: float
    alpha: float
    kappa: float
    b: float
    trust_region_ok: bool = True
    jitter: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def prefactor_c1(problem: Problem, params: AsymptoticParams) -> float:
    if problem.k_gprime0 <= DEGENERATE_ENERGY:
        raise DegenerateFunctionalError(f"K(G'[0]) = {problem.k_gprime0:.3e}; prefactor undefined")
    if params.kappa == 0:
        return math.inf
    return math.sqrt(problem.k_gprime0 / (2.0 * math.pi)) / params.kappa


def tail_probability(solution: KktSolution, problem: Problem, params: AsymptoticParams) -> TailEstimate:
    c1 = prefactor_c1(problem, params)
    log_p = math.log(c1) + (1.0 - params.alpha) * math.log(params.sigma) - 0.5 * solution.k_star
    probability = 1.0 if log_p >= 0.0 else math.exp(log_p)
    logger.info("Tail estimate: log p = %.8g (p = %.6g, K* = %.8g, c1 = %.6g)",
                log_p, probability, solution.k_star, c1)
    return TailEstimate(
        probability=probability,
        log_probability=log_p,
        c1=c1,
        k_star=solution.k_star,
        sigma=params.sigma,
        alpha=params.alpha,
        kappa=params.kappa,
        b=params.b,
        trust_region_ok=solution.trust_region_ok,
        jitter=problem.covariance.jitter,
    )
