"""Exception types raised by the analysis and pipeline layers."""

from __future__ import annotations

from discretization.errors import TailProbError


class ConfigError(TailProbError):
    """Invalid run configuration; `problems` lists one message per offending key."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


class DegenerateFunctionalError(TailProbError):
    """G'[0] vanishes (numerically), so the tail formula and first-order solution are undefined."""


class ConvergenceError(TailProbError):
    """Fixed-point iteration did not converge."""

    def __init__(self, message: str, trace: list[dict] | None = None, last_residual: float | None = None):
        super().__init__(message)
        self.trace = list(trace or [])
        self.last_residual = last_residual


class EstimationError(TailProbError):
    """A Monte Carlo sample could not be evaluated."""

    def __init__(self, message: str, sample_index: int):
        super().__init__(message)
        self.sample_index = sample_index
