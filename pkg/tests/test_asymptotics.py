import dataclasses
import math

import pytest
from scipy.stats import norm

from analysis.asymptotics import prefactor_c1, tail_probability
from analysis.optimizer import AsymptoticParams, solve_kkt


def _tail(problem, sigma, alpha=0.5, kappa=1.0):
    params = AsymptoticParams(sigma=sigma, alpha=alpha, kappa=kappa)
    return tail_probability(solve_kkt(problem, params), problem, params)


def test_prefactor_rank_one(rank_one_problem):
    params = AsymptoticParams(sigma=0.1, alpha=0.5, kappa=1.0)
    c1 = prefactor_c1(rank_one_problem, params)
    assert c1 == pytest.approx(1.0 / math.sqrt(2 * math.pi), rel=1e-6)
    assert prefactor_c1(rank_one_problem, dataclasses.replace(params, kappa=2.0)) == c1 / 2


def test_prefactor_for_the_pde_functional(make_pde_problem):
    # G'[0] = (1 - 2x)^2 / 4 integrates to 1/12
    problem = make_pde_problem(n=65, length_scale=1.0e6)
    c1 = prefactor_c1(problem, AsymptoticParams(sigma=0.1, alpha=0.5, kappa=1.0))
    assert c1 == pytest.approx((1 / 12) / math.sqrt(2 * math.pi), rel=0.01)
    assert c1 == pytest.approx(0.033249, rel=0.01)


def test_zero_level_is_clamped(smooth_exp_problem):
    estimate = _tail(smooth_exp_problem, sigma=0.1, kappa=0.0)
    assert estimate.k_star == 0.0
    assert estimate.probability == 1.0


def test_fields_and_log_space(smooth_exp_problem):
    estimate = _tail(smooth_exp_problem, sigma=0.05)
    expected = math.log(estimate.c1) + 0.5 * math.log(0.05) - 0.5 * estimate.k_star
    assert estimate.log_probability == pytest.approx(expected, rel=1e-14)
    assert estimate.probability == pytest.approx(math.exp(expected), rel=1e-14)
    assert estimate.b == pytest.approx(math.sqrt(0.05))
    assert set(estimate.to_dict()) == {
        "probability", "log_probability", "c1", "k_star", "sigma", "alpha", "kappa", "b", "trust_region_ok", "jitter",
    }


def test_estimate_is_reproducible(rank_one_problem):
    assert _tail(rank_one_problem, sigma=0.05) == _tail(rank_one_problem, sigma=0.05)


def test_log_probability_decreases_with_level(smooth_exp_problem):
    values = [_tail(smooth_exp_problem, sigma=0.1, kappa=k).log_probability for k in (0.5, 1.0, 2.0)]
    assert values[0] > values[1] > values[2]


@pytest.mark.parametrize("sigma", [1e-3, 1e-4])
def test_finite_when_probability_underflows(rank_one_problem, sigma):
    estimate = _tail(rank_one_problem, sigma=sigma)
    assert math.isfinite(estimate.log_probability)
    assert estimate.log_probability < -400


def test_converges_to_exact_rank_one_tail(rank_one_problem):
    # with mu = 0 and a constant field, P{G > b} = P{Z > log(1 + b) / sigma}
    deviations = []
    for sigma in (1e-2, 1e-3):
        estimate = _tail(rank_one_problem, sigma=sigma)
        exact = norm.logsf(math.log1p(estimate.b) / sigma)
        deviations.append(abs(math.exp(estimate.log_probability - exact) - 1))
    assert deviations[1] < deviations[0] < 0.05
