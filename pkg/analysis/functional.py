"""Functionals G(w) = H(J[w]) and their Fréchet derivatives.

Two backends:
    linear_pde  : H(u) = integral of phi * (u - u0), u solving the PDE with a = a0 * exp(-w)
    exp_integral: G(w) = integral of exp(w + mu) - integral of exp(mu), closed form

For linear_pde, H'[u] = phi for every u, so the adjoint right-hand side is fixed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from discretization.errors import FieldError
from discretization.field import ScalarField, gradient
from discretization.grid import nodal_values, quadrature
from discretization.pde import EllipticOperator, build_operator, solve

if TYPE_CHECKING:
    from analysis.problem import Problem

logger = logging.getLogger(__name__)

FUNCTIONAL_KINDS = ("linear_pde", "exp_integral")
DERIVATIVE_MODES = ("adjoint_formula", "discrete_adjoint")


@dataclass(frozen=True, eq=False)
class FunctionalSpec:
    kind: str
    weight: ScalarField | None = None
    mu: ScalarField | None = None
    derivative: str = "adjoint_formula"

    def __post_init__(self):
        if self.kind not in FUNCTIONAL_KINDS:
            raise FieldError(f"Unknown functional kind '{self.kind}', expected one of {FUNCTIONAL_KINDS}")
        if self.derivative not in DERIVATIVE_MODES:
            raise FieldError(f"Unknown derivative mode '{self.derivative}', expected one of {DERIVATIVE_MODES}")
        if self.kind == "linear_pde":
            if self.weight is None:
                raise FieldError("linear_pde functional needs a weight field phi")
            if not np.any(self.weight.values != 0.0):
                raise FieldError("linear_pde weight phi is identically zero")
        if self.kind == "exp_integral" and self.mu is None:
            raise FieldError("exp_integral functional needs a mu field")


@dataclass(frozen=True, eq=False)
class GEvaluation:
    value: float
    derivative: ScalarField | None = None
    u_w: ScalarField | None = None
    g_w: ScalarField | None = None


def coefficient(problem: Problem, w) -> ScalarField:
    """a_w = a0 * exp(-w), nodewise."""
    values = nodal_values(problem.grid, w)
    return ScalarField(problem.grid, problem.a0.values * np.exp(-values))


def _forward(problem: Problem, w) -> tuple[EllipticOperator, ScalarField]:
    op = build_operator(problem.grid, coefficient(problem, w))
    return op, solve(op, problem.f)


def _adjoint_formula(problem: Problem, op: EllipticOperator, u: ScalarField) -> tuple[ScalarField, ScalarField]:
    g = solve(op, problem.functional.weight)
    grid = problem.grid
    product = sum(dg.values * du.values for dg, du in zip(gradient(grid, g), gradient(grid, u)))
    return ScalarField(grid, op.a.values * product), g


def _discrete_adjoint(problem: Problem, op: EllipticOperator, u: ScalarField) -> tuple[ScalarField, ScalarField]:
    # exact gradient of the discrete G, divided by the quadrature weights
    grid = problem.grid
    weights = grid.quad_weights
    g = solve(op, problem.functional.weight)
    # the multiplier solves with rhs q * phi; interior trapezoid weights all equal prod(h)
    a = grid.to_shape(op.a.values)
    U = grid.to_shape(u.values)
    L = grid.to_shape(float(np.prod(grid.h)) * g.values)
    sens = np.zeros(grid.n)
    for axis, h in enumerate(grid.h):
        left = [slice(None)] * grid.dim
        right = [slice(None)] * grid.dim
        left[axis] = slice(None, -1)
        right[axis] = slice(1, None)
        left, right = tuple(left), tuple(right)
        a_l, a_r = a[left], a[right]
        flux = np.diff(L, axis=axis) * np.diff(U, axis=axis) / h**2
        denom = (a_l + a_r) ** 2
        sens[left] += flux * 2.0 * a_r**2 / denom * a_l
        sens[right] += flux * 2.0 * a_l**2 / denom * a_r
    return ScalarField(grid, grid.to_flat(sens) / weights), g


def exp_integral_values(problem: Problem, rows: np.ndarray) -> np.ndarray:
    """G for each row of a (samples, nodes) array, exp_integral backend."""
    mu = problem.functional.mu.values
    return np.exp(rows + mu) @ problem.grid.quad_weights - problem.exp_base


def evaluate(problem: Problem, w, derivative: bool = True) -> GEvaluation:
    """Evaluate G(w) and, if requested, G'[w] (one factorization serves both solves)."""
    spec = problem.functional
    values = nodal_values(problem.grid, w)

    if spec.kind == "exp_integral":
        value = float(exp_integral_values(problem, values[None, :])[0])
        if not derivative:
            return GEvaluation(value=value)
        return GEvaluation(value=value, derivative=ScalarField(problem.grid, np.exp(values + spec.mu.values)))

    op, u = _forward(problem, values)
    value = quadrature(problem.grid, spec.weight.values * (u.values - problem.u0.values))
    if not derivative:
        return GEvaluation(value=value, u_w=u)
    if spec.derivative == "discrete_adjoint":
        dG, g = _discrete_adjoint(problem, op, u)
    else:
        dG, g = _adjoint_formula(problem, op, u)
    return GEvaluation(value=value, derivative=dG, u_w=u, g_w=g)


def eval_G(problem: Problem, w) -> float:
    """G(w) = H(J[w])."""
    return evaluate(problem, w, derivative=False).value


def frechet_G(problem: Problem, w) -> ScalarField:
    """Fréchet derivative G'[w] as a nodal field."""
    return evaluate(problem, w, derivative=True).derivative
