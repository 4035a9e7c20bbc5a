"""Problem assembly — grid, covariance, PDE data and functional bundled with the G'[0] diagnostics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from analysis.errors import DegenerateFunctionalError
from analysis.functional import FunctionalSpec, evaluate
from discretization.covariance import CovarianceModel, k_energy
from discretization.errors import FieldError
from discretization.field import ScalarField
from discretization.grid import Grid
from discretization.pde import build_operator, solve

logger = logging.getLogger(__name__)

NONDEGENERACY_FLOOR = 1e-12
EXPRESSIONS = ("constant:<v>", "one_plus_x", "x_times_one_minus_x")


@dataclass(frozen=True, eq=False)
class Problem:
    grid: Grid
    covariance: CovarianceModel
    functional: FunctionalSpec
    a0: ScalarField | None = None
    f: ScalarField | None = None
    u0: ScalarField | None = None
    exp_base: float = 0.0
    gprime0: ScalarField | None = None
    k_gprime0: float = 0.0


def is_expression(expr) -> bool:
    """True if `expr` names a field from the declared menu."""
    if isinstance(expr, bool):
        return False
    if isinstance(expr, (int, float)):
        return np.isfinite(expr)
    text = str(expr).strip()
    if text.startswith("constant:"):
        try:
            return bool(np.isfinite(float(text.split(":", 1)[1])))
        except ValueError:
            return False
    return text in ("one_plus_x", "x_times_one_minus_x")


def field_from_expression(grid: Grid, expr) -> ScalarField:
    """Tabulate one of the declared field expressions.

    `constant:v` (or a bare number), `one_plus_x` (1 + x along axis 0) and
    `x_times_one_minus_x` (product over axes of x_k (1 - x_k)).
    """
    if isinstance(expr, (int, float)) and not isinstance(expr, bool):
        return ScalarField.constant(grid, float(expr))
    text = str(expr).strip()
    if text.startswith("constant:"):
        try:
            return ScalarField.constant(grid, float(text.split(":", 1)[1]))
        except ValueError as e:
            raise FieldError(f"Bad constant expression '{text}'") from e
    if text == "one_plus_x":
        return ScalarField(grid, 1.0 + grid.nodes[:, 0])
    if text == "x_times_one_minus_x":
        return ScalarField(grid, np.prod(grid.nodes * (1.0 - grid.nodes), axis=1))
    raise FieldError(f"Unknown field expression '{text}', expected one of {EXPRESSIONS}")


def build_problem(
    grid: Grid,
    covariance: CovarianceModel,
    functional: FunctionalSpec,
    a0: ScalarField | None = None,
    f: ScalarField | None = None,
    nondegeneracy_floor: float = NONDEGENERACY_FLOOR,
) -> Problem:
    """Solve the unperturbed problem and check that G'[0] is not identically zero."""
    if covariance.grid.key != grid.key:
        raise FieldError("Covariance model was assembled on a different grid")

    problem = Problem(grid=grid, covariance=covariance, functional=functional)
    if functional.kind == "linear_pde":
        if a0 is None or f is None:
            raise FieldError("linear_pde functional needs the coefficient a0 and the load f")
        u0 = solve(build_operator(grid, a0), f)
        problem = replace(problem, a0=a0, f=f, u0=u0)
    else:
        # same reduction as exp_integral_values so that G(0) is exactly zero
        base = float((np.exp(functional.mu.values)[None, :] @ grid.quad_weights)[0])
        problem = replace(problem, exp_base=base)

    gprime0 = evaluate(problem, ScalarField.zeros(grid)).derivative
    if gprime0.max_abs() <= nondegeneracy_floor:
        raise DegenerateFunctionalError(
            f"G'[0] vanishes (max |G'[0]| = {gprime0.max_abs():.3e}); the functional is degenerate"
        )
    k0 = k_energy(covariance, gprime0)
    logger.info("Problem ready: %s, max|G'[0]|=%.4g, K(G'[0])=%.6g", functional.kind, gprime0.max_abs(), k0)
    return replace(problem, gprime0=gprime0, k_gprime0=k0)
