"""Shared fixtures: small grids and ready-built problems for both functional backends."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
import yaml

from analysis.functional import FunctionalSpec
from analysis.problem import build_problem, field_from_expression
from discretization.covariance import CovarianceKernel, assemble
from discretization.grid import build_grid

LONG = 1.0e6  # correlation length that makes the field a single random constant


def exp_problem(n=33, length_scale=0.3, mu="x_times_one_minus_x", kind="squared_exponential"):
    grid = build_grid([(0.0, 1.0)], [n])
    covariance = assemble(grid, CovarianceKernel(kind, length_scale))
    functional = FunctionalSpec("exp_integral", mu=field_from_expression(grid, mu))
    return build_problem(grid, covariance, functional)


def pde_problem(n=33, length_scale=0.5, a0="constant:1", f="constant:1", weight="constant:1",
                derivative="adjoint_formula", dim=1):
    grid = build_grid([(0.0, 1.0)] * dim, [n] * dim)
    covariance = assemble(grid, CovarianceKernel("squared_exponential", length_scale))
    functional = FunctionalSpec("linear_pde", weight=field_from_expression(grid, weight), derivative=derivative)
    return build_problem(
        grid, covariance, functional,
        a0=field_from_expression(grid, a0),
        f=field_from_expression(grid, f),
    )


@pytest.fixture(scope="session")
def make_exp_problem():
    return exp_problem


@pytest.fixture(scope="session")
def make_pde_problem():
    return pde_problem


@pytest.fixture(scope="session")
def rank_one_problem():
    """exp_integral with mu = 0 and a near-constant kernel on 65 nodes."""
    return exp_problem(n=65, length_scale=LONG, mu="constant:0")


@pytest.fixture(scope="session")
def smooth_exp_problem():
    return exp_problem()


@pytest.fixture(scope="session")
def smooth_pde_problem():
    return pde_problem()


@pytest.fixture(scope="session")
def discrete_pde_problem():
    return pde_problem(derivative="discrete_adjoint")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def write_config(tmp_path: Path):
    """Write a dotted-key YAML run config; output goes to tmp_path/out."""

    def _write(name: str = "run.yaml", **values) -> Path:
        data = {"output.dir": str(tmp_path / "out")}
        data.update({k.replace("__", "."): v for k, v in values.items()})
        path = tmp_path / name
        path.write_text(yaml.safe_dump(data), encoding="utf-8")
        return path

    return _write
