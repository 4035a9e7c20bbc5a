import dataclasses
import logging
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.optimize import brentq

from analysis.errors import ConvergenceError, DegenerateFunctionalError
from analysis.functional import eval_G
from analysis.optimizer import (
    AsymptoticParams,
    OptimizerSettings,
    default_holder_params,
    first_order_xi,
    iteration_floor,
    lambda_fixed_point,
    solve_kkt,
    t_map,
    xi_map,
)
from discretization.covariance import apply_C, k_energy, sample_values, substream
from discretization.field import ScalarField

SIGMAS = (0.2, 0.1, 0.05)


def _rank_one_root(problem, sigma, b):
    """s with G(sigma s C1) = b, the exact constrained point along the constant direction."""
    c_one = apply_C(problem.covariance, np.ones(problem.grid.size)).values
    q = problem.grid.quad_weights
    return brentq(lambda s: float(np.exp(sigma * s * c_one) @ q - q.sum()) - b, 0.0, 10.0 / sigma, xtol=1e-14)


def _relative_gap(a, b):
    return np.max(np.abs(a.values - b.values)) / np.max(np.abs(a.values))


def test_iteration_floor():
    assert iteration_floor(0.5) == 4
    assert iteration_floor(0.3) == 7
    assert iteration_floor(0.7) == 3


def test_params_validation():
    assert AsymptoticParams(0.1, 0.5, 2.0).b == pytest.approx(2.0 * math.sqrt(0.1))
    for bad in [dict(sigma=0.0), dict(alpha=1.0), dict(alpha=0.0), dict(kappa=math.inf)]:
        kwargs = dict(sigma=0.1, alpha=0.5, kappa=1.0) | bad
        with pytest.raises(ValueError):
            AsymptoticParams(**kwargs)
    with pytest.raises(ValueError):
        OptimizerSettings(lambda_solver="newton")


def test_first_order_xi(rank_one_problem):
    params = AsymptoticParams(sigma=0.1, alpha=0.5, kappa=1.0)
    xi0 = first_order_xi(rank_one_problem, params)
    assert_allclose(xi0.values, 0.1**-0.5, rtol=1e-6)
    doubled = first_order_xi(rank_one_problem, dataclasses.replace(params, kappa=2.0))
    assert_allclose(doubled.values, 2.0 * xi0.values, rtol=0, atol=0)
    zero = first_order_xi(rank_one_problem, dataclasses.replace(params, kappa=0.0))
    assert zero.max_abs() == 0.0


def test_degenerate_energy_is_rejected(rank_one_problem):
    degenerate = dataclasses.replace(rank_one_problem, k_gprime0=0.0)
    with pytest.raises(DegenerateFunctionalError):
        first_order_xi(degenerate, AsymptoticParams(0.1, 0.5, 1.0))


def test_t_map_at_zero(smooth_exp_problem):
    params = AsymptoticParams(sigma=0.1, alpha=0.5, kappa=1.0)
    w = first_order_xi(smooth_exp_problem, params)
    expected = params.kappa * params.sigma ** (params.alpha - 1) / smooth_exp_problem.k_gprime0
    assert t_map(smooth_exp_problem, params, w, 0.0) == pytest.approx(expected, rel=1e-14)


def test_lambda_matches_scalar_root(rank_one_problem):
    params = AsymptoticParams(sigma=0.01, alpha=0.5, kappa=1.0)
    zero = ScalarField.zeros(rank_one_problem.grid)
    lam = lambda_fixed_point(rank_one_problem, params, zero)
    assert lam == pytest.approx(_rank_one_root(rank_one_problem, params.sigma, params.b), rel=1e-9)
    assert lam == pytest.approx(math.log(1.1) / 0.01, rel=1e-6)
    # fixed point of T
    assert t_map(rank_one_problem, params, zero, lam) == pytest.approx(lam, rel=1e-10)


def test_t_map_contracts_on_trust_region(rank_one_problem):
    params = AsymptoticParams(sigma=0.01, alpha=0.5, kappa=1.0)
    zero = ScalarField.zeros(rank_one_problem.grid)
    radius = params.radius
    for l1, l2 in [(-radius, radius), (0.0, radius / 2), (-radius / 3, radius / 5)]:
        ratio = abs(t_map(rank_one_problem, params, zero, l1) - t_map(rank_one_problem, params, zero, l2)) / abs(l1 - l2)
        assert ratio < 1.0


def test_lambda_approaches_first_order_value(rank_one_problem):
    zero = ScalarField.zeros(rank_one_problem.grid)
    deviations = []
    for sigma in SIGMAS:
        params = AsymptoticParams(sigma=sigma, alpha=0.5, kappa=1.0)
        first_order = params.kappa * sigma ** (params.alpha - 1) / rank_one_problem.k_gprime0
        deviations.append(abs(lambda_fixed_point(rank_one_problem, params, zero) / first_order - 1))
    assert deviations[0] > deviations[1] > deviations[2]


def test_zero_level_gives_zero_multiplier(smooth_exp_problem):
    params = AsymptoticParams(sigma=0.1, alpha=0.5, kappa=0.0)
    w = ScalarField.constant(smooth_exp_problem.grid, 0.7)
    assert lambda_fixed_point(smooth_exp_problem, params, w) == 0.0
    assert xi_map(smooth_exp_problem, params, w).max_abs() == 0.0


def test_xi_map_closed_form(smooth_exp_problem):
    problem = smooth_exp_problem
    params = AsymptoticParams(sigma=0.1, alpha=0.5, kappa=1.0)
    w = first_order_xi(problem, params)
    lam = lambda_fixed_point(problem, params, w)
    expected = lam * np.exp(params.sigma * apply_C(problem.covariance, w).values + problem.functional.mu.values)
    assert_allclose(xi_map(problem, params, w).values, expected, rtol=1e-12)


def test_xi_map_contraction_shrinks_with_sigma(smooth_exp_problem):
    problem = smooth_exp_problem
    eta = np.cos(np.pi * problem.grid.nodes[:, 0])
    ratios = []
    for sigma in (0.1, 0.05):
        params = AsymptoticParams(sigma=sigma, alpha=0.5, kappa=1.0)
        w1 = first_order_xi(problem, params)
        w2 = w1 + 0.05 * w1.max_abs() * eta
        gap = np.max(np.abs(xi_map(problem, params, w1).values - xi_map(problem, params, w2).values))
        ratios.append(gap / np.max(np.abs(w1.values - w2.values)))
    assert ratios[0] < 1.0
    assert ratios[1] < ratios[0]


def test_bracketed_and_contraction_agree(smooth_exp_problem):
    params = AsymptoticParams(sigma=0.05, alpha=0.5, kappa=1.0)
    w = first_order_xi(smooth_exp_problem, params)
    a = lambda_fixed_point(smooth_exp_problem, params, w, OptimizerSettings(lambda_solver="contraction"))
    b = lambda_fixed_point(smooth_exp_problem, params, w, OptimizerSettings(lambda_solver="bracketed"))
    assert a == pytest.approx(b, rel=1e-10)


def test_auto_solver_falls_back_to_bracketing(smooth_exp_problem, caplog):
    params = AsymptoticParams(sigma=0.1, alpha=0.5, kappa=1.0)
    with caplog.at_level(logging.WARNING, logger="analysis.optimizer"):
        solution = solve_kkt(smooth_exp_problem, params, OptimizerSettings(max_inner=2))
    assert "switching to bracketed" in caplog.text
    assert {t["lambda_method"] for t in solution.trace} == {"bracketed"}
    reference = solve_kkt(smooth_exp_problem, params)
    assert solution.k_star == pytest.approx(reference.k_star, rel=1e-9)


def test_contraction_only_solver_raises(smooth_exp_problem):
    params = AsymptoticParams(sigma=0.1, alpha=0.5, kappa=1.0)
    with pytest.raises(ConvergenceError):
        solve_kkt(smooth_exp_problem, params, OptimizerSettings(lambda_solver="contraction", max_inner=1))


def test_outer_cap_raises_with_trace(smooth_exp_problem):
    params = AsymptoticParams(sigma=0.1, alpha=0.5, kappa=1.0)
    with pytest.raises(ConvergenceError) as info:
        solve_kkt(smooth_exp_problem, params, OptimizerSettings(max_outer=2))
    assert len(info.value.trace) == 2
    assert info.value.last_residual == info.value.trace[-1]["step"]


def test_zero_level_solution(smooth_exp_problem):
    solution = solve_kkt(smooth_exp_problem, AsymptoticParams(sigma=0.1, alpha=0.5, kappa=0.0))
    assert solution.xi_star.max_abs() == 0.0
    assert solution.lambda_star == 0.0
    assert solution.k_star == 0.0


def test_rank_one_reduced_oracle(rank_one_problem):
    params = AsymptoticParams(sigma=0.05, alpha=0.5, kappa=1.0)
    solution = solve_kkt(rank_one_problem, params)
    s = _rank_one_root(rank_one_problem, params.sigma, params.b)
    oracle = s**2 * k_energy(rank_one_problem.covariance, np.ones(rank_one_problem.grid.size))
    assert solution.k_star == pytest.approx(oracle, rel=1e-6)
    assert_allclose(solution.xi_star.values, s, rtol=1e-6)
    assert solution.trust_region_ok


@pytest.mark.parametrize("sigma", SIGMAS)
@pytest.mark.parametrize("alpha", (0.3, 0.5, 0.7))
@pytest.mark.parametrize("backend", ("exp_integral", "linear_pde"))
def test_kkt_residuals(backend, alpha, sigma, smooth_exp_problem, smooth_pde_problem):
    problem, kappa = (smooth_exp_problem, 1.0) if backend == "exp_integral" else (smooth_pde_problem, 0.05)
    params = AsymptoticParams(sigma=sigma, alpha=alpha, kappa=kappa)
    solution = solve_kkt(problem, params)

    g = eval_G(problem, sigma * apply_C(problem.covariance, solution.xi_star))
    assert abs(g - params.b) <= 1e-10 * max(1.0, abs(params.b))
    step = xi_map(problem, params, solution.xi_star) - solution.xi_star
    assert step.max_abs() <= 1e-9 * solution.xi_star.max_abs()
    assert solution.outer_iterations >= iteration_floor(alpha)
    assert solution.k_star == pytest.approx(k_energy(problem.covariance, solution.xi_star))


@pytest.mark.parametrize("backend", ("exp_integral", "linear_pde"))
def test_contraction_and_first_order_trends(backend, smooth_exp_problem, smooth_pde_problem):
    problem, kappa = (smooth_exp_problem, 1.0) if backend == "exp_integral" else (smooth_pde_problem, 0.05)
    factors, gaps = [], []
    for sigma in SIGMAS:
        params = AsymptoticParams(sigma=sigma, alpha=0.5, kappa=kappa)
        solution = solve_kkt(problem, params)
        factors.append(solution.contraction_factors()[0])
        gaps.append(_relative_gap(solution.xi_star, first_order_xi(problem, params)))
    assert factors[0] > factors[1] > factors[2]
    assert gaps[0] > gaps[1] > gaps[2]


def test_k_star_increases_with_level(smooth_exp_problem):
    values = [solve_kkt(smooth_exp_problem, AsymptoticParams(0.1, 0.5, kappa)).k_star for kappa in (0.5, 1.0, 2.0)]
    assert values[0] < values[1] < values[2]


def _constrained_rescale(problem, params, field):
    def gap(t):
        return eval_G(problem, params.sigma * apply_C(problem.covariance, t * field)) - params.b

    return brentq(gap, 0.0, 4.0, xtol=1e-15)


@pytest.mark.parametrize("backend", ("exp_integral", "linear_pde"))
def test_local_optimality(backend, smooth_exp_problem, discrete_pde_problem):
    problem, kappa = (smooth_exp_problem, 1.0) if backend == "exp_integral" else (discrete_pde_problem, 0.05)
    params = AsymptoticParams(sigma=0.1, alpha=0.5, kappa=kappa)
    solution = solve_kkt(problem, params)
    xi_star = solution.xi_star
    for k in range(20):
        eta = sample_values(problem.covariance, substream(100, k), 1)[0]
        eta *= 0.05 * xi_star.max_abs() / np.max(np.abs(eta))
        perturbed = xi_star + eta
        t = _constrained_rescale(problem, params, perturbed)
        assert k_energy(problem.covariance, t * perturbed) >= solution.k_star - 1e-9


def test_default_holder_params(smooth_exp_problem, smooth_pde_problem):
    assert default_holder_params(smooth_exp_problem).k == 0
    assert default_holder_params(smooth_pde_problem).k == 1
