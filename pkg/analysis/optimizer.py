"""Dominating point — min K(xi) subject to G(sigma C xi) = b, by nested fixed-point iteration.

Outer map:  Xi[w] = Lambda[w] * G'[sigma C w]
Inner map:  T_w(lambda) = lambda - (G(sigma C lambda G'[sigma C w]) - b) / (sigma K(G'[0]))

Lambda[w] is the fixed point of T_w. Each outer step computes G'[sigma C w] and
its image under C once; the inner loop only re-evaluates G.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, NamedTuple

import numpy as np
from scipy.optimize import brentq

from analysis.errors import ConvergenceError, DegenerateFunctionalError
from analysis.functional import eval_G, frechet_G
from analysis.problem import Problem
from discretization.covariance import apply_C, k_energy
from discretization.errors import TailProbError
from discretization.field import HOLDER_PAIR_THRESHOLD, HolderParams, ScalarField, holder_norm

logger = logging.getLogger(__name__)

LAMBDA_SOLVERS = ("auto", "contraction", "bracketed")
DEGENERATE_ENERGY = 1e-14
_MAX_BRACKET_EXPANSIONS = 80


@dataclass(frozen=True)
class AsymptoticParams:
    sigma: float
    alpha: float
    kappa: float
    epsilon: float = 0.05

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not math.isfinite(self.kappa):
            raise ValueError(f"kappa must be finite, got {self.kappa}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def b(self) -> float:
        return self.kappa * self.sigma**self.alpha

    @property
    def radius(self) -> float:
        """Radius sigma^(alpha - 1 - epsilon) of the trust region B."""
        return self.sigma ** (self.alpha - 1.0 - self.epsilon)


@dataclass(frozen=True)
class OptimizerSettings:
    tol_lambda: float = 1e-12
    tol_xi: float = 1e-10
    max_outer: int = 200
    max_inner: int = 100
    lambda_solver: str = "auto"
    constraint_rtol: float = 1e-10
    fixed_point_rtol: float = 1e-9
    holder: HolderParams | None = None
    holder_pair_threshold: int = HOLDER_PAIR_THRESHOLD

    def __post_init__(self):
        if self.lambda_solver not in LAMBDA_SOLVERS:
            raise ValueError(f"lambda_solver must be one of {LAMBDA_SOLVERS}, got {self.lambda_solver}")


@dataclass(frozen=True, eq=False)
class KktSolution:
    xi_star: ScalarField
    lambda_star: float
    k_star: float
    constraint_residual: float
    fixed_point_residual: float
    outer_iterations: int
    trust_region_ok: bool
    holder_norm: float = 0.0
    trace: list[dict] = field(default_factory=list)

    def contraction_factors(self) -> list[float]:
        """Ratios of successive outer step sizes."""
        steps = [t["step"] for t in self.trace]
        return [b / a for a, b in zip(steps, steps[1:]) if a > 0]

    def to_dict(self) -> dict[str, Any]:
        return {
            "k_star": self.k_star,
            "lambda_star": self.lambda_star,
            "constraint_residual": self.constraint_residual,
            "fixed_point_residual": self.fixed_point_residual,
            "iterations": self.outer_iterations,
            "trust_region_ok": self.trust_region_ok,
            "holder_norm": self.holder_norm,
            "trace": self.trace,
        }


class LambdaResult(NamedTuple):
    value: float
    iterations: int
    method: str
    residual: float
    contraction: float | None


def default_holder_params(problem: Problem) -> HolderParams:
    """k=1 for the PDE functional on a smooth kernel; k=0 otherwise."""
    if problem.functional.kind == "linear_pde" and problem.covariance.kernel.kind == "squared_exponential":
        return HolderParams(k=1, beta=0.5)
    if problem.functional.kind == "linear_pde":
        return HolderParams(k=0, beta=0.25)
    return HolderParams(k=0, beta=0.0)


def _k0(problem: Problem) -> float:
    if problem.k_gprime0 <= DEGENERATE_ENERGY:
        raise DegenerateFunctionalError(
            f"K(G'[0]) = {problem.k_gprime0:.3e} is numerically zero; the functional is degenerate"
        )
    return problem.k_gprime0


def first_order_xi(problem: Problem, params: AsymptoticParams) -> ScalarField:
    """kappa sigma^(alpha-1) G'[0] / K(G'[0])."""
    coefficient = params.kappa * params.sigma ** (params.alpha - 1.0) / _k0(problem)
    return coefficient * problem.gprime0


def _direction(problem: Problem, params: AsymptoticParams, w) -> tuple[ScalarField, ScalarField]:
    """G'[sigma C w] and its image under C."""
    g = frechet_G(problem, params.sigma * apply_C(problem.covariance, w))
    return g, apply_C(problem.covariance, g)


def _constraint_gap(problem: Problem, params: AsymptoticParams, cg: ScalarField, lam: float) -> float:
    return eval_G(problem, (params.sigma * lam) * cg) - params.b


def _t_value(problem: Problem, params: AsymptoticParams, cg: ScalarField, lam: float) -> float:
    return lam - _constraint_gap(problem, params, cg, lam) / (_k0(problem) * params.sigma)


def t_map(problem: Problem, params: AsymptoticParams, w, lam: float) -> float:
    """T_w(lambda)."""
    _, cg = _direction(problem, params, w)
    return _t_value(problem, params, cg, lam)


def _safe_gap(problem: Problem, params: AsymptoticParams, cg: ScalarField, lam: float) -> float | None:
    try:
        gap = _constraint_gap(problem, params, cg, lam)
    except TailProbError:
        return None
    return gap if math.isfinite(gap) else None


def _bracketed(problem: Problem, params: AsymptoticParams, cg: ScalarField, start: float,
               settings: OptimizerSettings) -> LambdaResult:
    """Brent root of lambda -> G(sigma C lambda g) - b, bracket grown geometrically from start."""
    gap0 = _safe_gap(problem, params, cg, start)
    if gap0 is None:
        start = 0.0
        gap0 = _safe_gap(problem, params, cg, start)
    if gap0 is None:
        raise ConvergenceError("Constraint cannot be evaluated near lambda = 0")
    if gap0 == 0.0:
        return LambdaResult(start, 0, "bracketed", 0.0, None)

    # G increases along +lambda when the gap is negative, so search in that direction first
    direction = 1.0 if gap0 < 0 else -1.0
    step = 0.1 * max(abs(start), 1.0)
    other = start
    for _ in range(_MAX_BRACKET_EXPANSIONS):
        trial = start + direction * step
        gap = _safe_gap(problem, params, cg, trial)
        if gap is None:
            step *= 0.5
            continue
        if np.sign(gap) != np.sign(gap0):
            other = trial
            break
        step *= 2.0
    else:
        raise ConvergenceError(f"Could not bracket the multiplier starting from lambda={start:.6g}")

    lo, hi = sorted((start, other))
    xtol = 0.1 * settings.tol_lambda * max(1.0, abs(lo), abs(hi))
    root, info = brentq(
        lambda lam: _constraint_gap(problem, params, cg, lam),
        lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500, full_output=True,
    )
    residual = abs(_constraint_gap(problem, params, cg, root))
    return LambdaResult(float(root), int(info.iterations), "bracketed", residual, None)


def _contraction(problem: Problem, params: AsymptoticParams, cg: ScalarField,
                 settings: OptimizerSettings) -> tuple[LambdaResult | None, float, float | None]:
    """Iterate T_w from the first-order multiplier. Returns (result or None, last iterate, ratio)."""
    lam = params.kappa * params.sigma ** (params.alpha - 1.0) / _k0(problem)
    last_step = None
    ratio = None
    for it in range(1, settings.max_inner + 1):
        try:
            new = _t_value(problem, params, cg, lam)
        except TailProbError as e:
            logger.debug("T_w evaluation failed at lambda=%.6g: %s", lam, e)
            return None, lam, ratio
        if not math.isfinite(new):
            return None, lam, ratio
        step = abs(new - lam)
        if last_step:
            ratio = step / last_step
        lam = new
        if step <= settings.tol_lambda * max(1.0, abs(lam)):
            residual = abs(_constraint_gap(problem, params, cg, lam))
            return LambdaResult(lam, it, "contraction", residual, ratio), lam, ratio
        if ratio is not None and ratio >= 1.0 and settings.lambda_solver == "auto":
            return None, lam, ratio
        last_step = step
    return None, lam, ratio


def _solve_lambda(problem: Problem, params: AsymptoticParams, cg: ScalarField,
                  settings: OptimizerSettings) -> LambdaResult:
    tolerance = settings.constraint_rtol * max(1.0, abs(params.b))
    if settings.lambda_solver == "bracketed":
        result = _bracketed(problem, params, cg, params.kappa * params.sigma ** (params.alpha - 1.0) / _k0(problem), settings)
    else:
        result, last, ratio = _contraction(problem, params, cg, settings)
        if result is None or result.residual > tolerance:
            if settings.lambda_solver == "contraction":
                raise ConvergenceError(
                    f"T_w iteration did not converge in {settings.max_inner} steps "
                    f"(contraction estimate {ratio}); sigma may be too large for the asymptotic regime",
                    last_residual=result.residual if result else None,
                )
            logger.warning(
                "T_w iteration stalled (contraction estimate %s); switching to bracketed solve",
                f"{ratio:.3g}" if ratio is not None else "n/a",
            )
            start = result.value if result is not None else last
            result = _bracketed(problem, params, cg, start if math.isfinite(start) else 0.0, settings)

    if result.residual > tolerance:
        raise ConvergenceError(
            f"Multiplier solve left constraint residual {result.residual:.3e} (tolerance {tolerance:.1e})",
            last_residual=result.residual,
        )
    return result


def lambda_fixed_point(problem: Problem, params: AsymptoticParams, w,
                       settings: OptimizerSettings | None = None) -> float:
    """Lambda[w]: the multiplier with G(sigma C Lambda G'[sigma C w]) = b."""
    settings = settings or OptimizerSettings()
    _, cg = _direction(problem, params, w)
    return _solve_lambda(problem, params, cg, settings).value


def _xi_step(problem: Problem, params: AsymptoticParams, w,
             settings: OptimizerSettings) -> tuple[ScalarField, LambdaResult]:
    g, cg = _direction(problem, params, w)
    result = _solve_lambda(problem, params, cg, settings)
    return result.value * g, result


def xi_map(problem: Problem, params: AsymptoticParams, w,
           settings: OptimizerSettings | None = None) -> ScalarField:
    """Xi[w] = Lambda[w] G'[sigma C w]."""
    return _xi_step(problem, params, w, settings or OptimizerSettings())[0]


def iteration_floor(alpha: float) -> int:
    """ceil(2 (1 - alpha) / alpha) + 2 outer steps."""
    return math.ceil(2.0 * (1.0 - alpha) / alpha) + 2


def solve_kkt(problem: Problem, params: AsymptoticParams,
              settings: OptimizerSettings | None = None) -> KktSolution:
    """Run the outer Xi iteration from the first-order solution.

    The returned xi_star is the last feasible iterate; its fixed-point residual
    is the size of the step Xi[xi_star] - xi_star.
    """
    settings = settings or OptimizerSettings()
    floor = iteration_floor(params.alpha)
    current = first_order_xi(problem, params)
    trace: list[dict] = []
    logger.info(
        "Solving KKT system: sigma=%g alpha=%g kappa=%g b=%.6g (floor %d, cap %d)",
        params.sigma, params.alpha, params.kappa, params.b, floor, settings.max_outer,
    )

    for it in range(1, settings.max_outer + 1):
        try:
            nxt, lam = _xi_step(problem, params, current, settings)
        except ConvergenceError as e:
            raise ConvergenceError(
                f"Outer iteration {it}: {e}", trace=trace, last_residual=e.last_residual
            ) from e
        step = float(np.max(np.abs(nxt.values - current.values)))
        trace.append({
            "iteration": it,
            "step": step,
            "lambda": lam.value,
            "lambda_method": lam.method,
            "lambda_iterations": lam.iterations,
            "constraint_residual": lam.residual,
        })
        logger.debug("outer %d: step=%.3e lambda=%.12g (%s, %d)", it, step, lam.value, lam.method, lam.iterations)
        if not math.isfinite(step):
            break

        scale = current.max_abs()
        if it >= floor and step <= settings.tol_xi * scale:
            return _finish(problem, params, settings, current, lam.value, step, it, trace)
        current = nxt

    last = trace[-1]["step"] if trace else None
    raise ConvergenceError(
        f"Xi iteration did not converge in {settings.max_outer} steps; sigma may be too large "
        f"for the contraction regime",
        trace=trace, last_residual=last,
    )


def _finish(problem: Problem, params: AsymptoticParams, settings: OptimizerSettings, xi_star: ScalarField,
            lambda_star: float, step: float, iterations: int,
            trace: list[dict]) -> KktSolution:
    constraint = abs(eval_G(problem, params.sigma * apply_C(problem.covariance, xi_star)) - params.b)
    k_star = k_energy(problem.covariance, xi_star)
    holder = settings.holder or default_holder_params(problem)
    norm = holder_norm(problem.grid, xi_star, holder, pair_threshold=settings.holder_pair_threshold)
    trust_ok = norm <= params.radius
    if not trust_ok:
        logger.warning(
            "|xi*|_{%d,%g} = %.4g exceeds the trust-region radius sigma^(alpha-1-eps) = %.4g",
            holder.k, holder.beta, norm, params.radius,
        )

    if constraint > settings.constraint_rtol * max(1.0, abs(params.b)):
        raise ConvergenceError(f"Constraint residual {constraint:.3e} above tolerance", trace=trace,
                               last_residual=constraint)
    if step > settings.fixed_point_rtol * xi_star.max_abs():
        raise ConvergenceError(f"Fixed-point residual {step:.3e} above tolerance", trace=trace,
                               last_residual=step)

    logger.info("KKT converged in %d outer steps: K*=%.10g lambda*=%.10g", iterations, k_star, lambda_star)
    return KktSolution(
        xi_star=xi_star,
        lambda_star=lambda_star,
        k_star=k_star,
        constraint_residual=constraint,
        fixed_point_residual=step,
        outer_iterations=iterations,
        trust_region_ok=bool(trust_ok),
        holder_norm=norm,
        trace=trace,
    )
