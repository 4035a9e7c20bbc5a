"""Orchestrator — builds the problem from a RunConfig and runs solve / optimize / estimate / sweep.

Every command returns a report dict with `status` ("ok" or "error") and
writes it as JSON under output.dir. Library errors become an `error` block;
anything else propagates.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Callable

from analysis.asymptotics import prefactor_c1, tail_probability
from analysis.errors import ConfigError, ConvergenceError
from analysis.functional import FunctionalSpec, evaluate
from analysis.mc import crude_mc, importance_sampling
from analysis.optimizer import AsymptoticParams, OptimizerSettings, solve_kkt
from analysis.problem import Problem, build_problem, field_from_expression
from discretization.covariance import CovarianceKernel, assemble
from discretization.errors import TailProbError
from discretization.field import ScalarField
from discretization.grid import build_grid
from pipeline.reporting import print_summary, sweep_frame, write_fields, write_json, write_samples
from pipeline.settings import RunConfig

logger = logging.getLogger(__name__)


def build_problem_from_config(config: RunConfig) -> Problem:
    grid = build_grid(config["grid.bounds"], config["grid.n"])
    logger.info("Grid: dim=%d n=%s", grid.dim, list(grid.n))
    kernel = CovarianceKernel(config["kernel.kind"], float(config["kernel.length_scale"]))
    covariance = assemble(grid, kernel, tuple(config.thresholds["covariance.jitter_ladder"]))

    kind = config["functional.kind"]
    if kind == "linear_pde":
        functional = FunctionalSpec(
            kind=kind,
            weight=field_from_expression(grid, config["functional.weight"]),
            derivative=config["functional.derivative"],
        )
        return build_problem(
            grid, covariance, functional,
            a0=field_from_expression(grid, config["pde.a0"]),
            f=field_from_expression(grid, config["pde.f"]),
            nondegeneracy_floor=config.thresholds["problem.nondegeneracy_floor"],
        )
    functional = FunctionalSpec(
        kind=kind,
        mu=field_from_expression(grid, config["functional.mu"]),
        derivative=config["functional.derivative"],
    )
    return build_problem(grid, covariance, functional,
                         nondegeneracy_floor=config.thresholds["problem.nondegeneracy_floor"])


def asymptotic_params(config: RunConfig, sigma: float | None = None) -> AsymptoticParams:
    return AsymptoticParams(
        sigma=float(config["asymptotics.sigma"] if sigma is None else sigma),
        alpha=float(config["asymptotics.alpha"]),
        kappa=float(config["asymptotics.kappa"]),
        epsilon=float(config["optimizer.epsilon"]),
    )


def optimizer_settings(config: RunConfig) -> OptimizerSettings:
    return OptimizerSettings(
        tol_lambda=float(config["optimizer.tol_lambda"]),
        tol_xi=float(config["optimizer.tol_xi"]),
        max_outer=config["optimizer.max_outer"],
        max_inner=config["optimizer.max_inner"],
        lambda_solver=config["optimizer.lambda_solver"],
        constraint_rtol=config.thresholds["optimizer.constraint_rtol"],
        fixed_point_rtol=config.thresholds["optimizer.fixed_point_rtol"],
        holder_pair_threshold=config.thresholds["field.holder_pair_threshold"],
    )


def _error_block(error: TailProbError) -> dict[str, Any]:
    block: dict[str, Any] = {"type": type(error).__name__, "message": str(error)}
    if isinstance(error, ConvergenceError):
        block["trace"] = error.trace
        block["last_residual"] = error.last_residual
    return block


def _run(command: str, config: RunConfig, body: Callable[[dict, Path], None]) -> dict[str, Any]:
    """Shared envelope: config echo, error capture, JSON output."""
    out_dir = Path(config["output.dir"])
    report: dict[str, Any] = {"command": command, "config": config.to_dict(), "status": "ok"}
    try:
        body(report, out_dir)
    except TailProbError as e:
        logger.error("%s failed: %s: %s", command, type(e).__name__, e)
        report["status"] = "error"
        report["error"] = _error_block(e)
    write_json(report, out_dir / f"{command}.json")
    return report


def _describe(report: dict, problem: Problem):
    report["grid"] = problem.grid.to_dict()
    report["jitter"] = problem.covariance.jitter


def cmd_solve(config: RunConfig) -> dict[str, Any]:
    """Unperturbed solve: G(0), G'[0], K(G'[0]) and the prefactor."""

    def body(report: dict, out_dir: Path):
        problem = build_problem_from_config(config)
        _describe(report, problem)
        params = asymptotic_params(config)
        at_zero = evaluate(problem, ScalarField.zeros(problem.grid))
        report["G_at_0"] = at_zero.value
        report["K_of_Gprime0"] = problem.k_gprime0
        report["c1"] = prefactor_c1(problem, params) if params.kappa > 0 else None
        if config["output.emit_fields"]:
            fields = {"gprime0": problem.gprime0}
            if problem.u0 is not None:
                fields = {"u0": problem.u0, "g0": at_zero.g_w, **fields}
            report["fields"] = write_fields(fields, out_dir)
        print_summary("solve", {"G(0)": report["G_at_0"], "K(G'[0])": problem.k_gprime0})

    return _run("solve", config, body)


def cmd_optimize(config: RunConfig) -> dict[str, Any]:
    """Dominating point xi* from the nested fixed-point iteration."""

    def body(report: dict, out_dir: Path):
        problem = build_problem_from_config(config)
        _describe(report, problem)
        solution = solve_kkt(problem, asymptotic_params(config), optimizer_settings(config))
        report["optimizer"] = solution.to_dict()
        if config["output.emit_fields"]:
            report["fields"] = write_fields({"xi_star": solution.xi_star}, out_dir)
        print_summary("optimize", {
            "K*": solution.k_star,
            "lambda*": solution.lambda_star,
            "iterations": solution.outer_iterations,
            "trust region ok": solution.trust_region_ok,
        })

    return _run("optimize", config, body)


def _methods(config: RunConfig) -> list[str]:
    method = config["mc.method"]
    return ["crude", "importance"] if method == "both" else [method]


def _estimate(config: RunConfig, problem: Problem, sigma: float, out_dir: Path, suffix: str = "") -> dict[str, Any]:
    params = asymptotic_params(config, sigma)
    if params.kappa <= 0:
        raise ConfigError(["asymptotics.kappa: must be positive for estimate and sweep"])
    solution = solve_kkt(problem, params, optimizer_settings(config))
    asymptotic = tail_probability(solution, problem, params)
    record: dict[str, Any] = {
        "sigma": sigma,
        "asymptotic": asymptotic.to_dict(),
        "optimizer": {k: v for k, v in solution.to_dict().items() if k != "trace"},
        "mc": {},
        "ratio": {},
    }

    keep = config["output.emit_samples"]
    common = dict(n=config["mc.n"], seed=config["mc.seed"], workers=config["mc.workers"],
                  chunk_size=config["mc.chunk_size"], keep_samples=keep)
    for method in _methods(config):
        if method == "crude":
            estimate = crude_mc(problem, params, **common)
        else:
            estimate = importance_sampling(problem, params, solution,
                                           ess_warn_fraction=config.thresholds["mc.ess_warn_fraction"], **common)
        record["mc"][method] = estimate.to_dict()
        record["ratio"][method] = estimate.mean / asymptotic.probability if asymptotic.probability > 0 else None
        if keep:
            write_samples(estimate.samples, out_dir / f"samples_{method}{suffix}.csv")
    return record


def cmd_estimate(config: RunConfig) -> dict[str, Any]:
    """Tail formula next to the configured Monte Carlo reference(s)."""

    def body(report: dict, out_dir: Path):
        problem = build_problem_from_config(config)
        _describe(report, problem)
        record = _estimate(config, problem, float(config["asymptotics.sigma"]), out_dir)
        report.update(record)
        rows = {"log p (formula)": record["asymptotic"]["log_probability"],
                "p (formula)": record["asymptotic"]["probability"]}
        for method, estimate in record["mc"].items():
            rows[f"p ({method})"] = estimate["mean"]
            rows[f"ratio ({method})"] = record["ratio"][method]
        print_summary("estimate", rows)

    return _run("estimate", config, body)


def cmd_sweep(config: RunConfig, sigmas: list[float] | None = None) -> dict[str, Any]:
    """cmd_estimate over a list of sigmas; one record per sigma, failures recorded per sigma."""
    sigmas = [float(s) for s in (sigmas or config["sweep.sigmas"])]

    def body(report: dict, out_dir: Path):
        problem = build_problem_from_config(config)
        _describe(report, problem)
        records = []
        for sigma in sigmas:
            logger.info("Sweep: sigma=%g", sigma)
            try:
                record = _estimate(config, problem, sigma, out_dir, suffix=f"_sigma{sigma:g}")
                record["status"] = "ok"
            except TailProbError as e:
                logger.error("sigma=%g failed: %s", sigma, e)
                record = {"sigma": sigma, "status": "error", "error": _error_block(e)}
            records.append(record)
        report["records"] = records
        if any(r["status"] != "ok" for r in records):
            report["status"] = "error"
        frame = sweep_frame(records)
        out_dir.mkdir(parents=True, exist_ok=True)
        frame.to_csv(out_dir / "sweep.csv", index=False, float_format="%.17g")
        print_summary("sweep", {f"sigma={r['sigma']:g}": r["status"] for r in records})

    return _run("sweep", config, body)


COMMANDS = {
    "solve": cmd_solve,
    "optimize": cmd_optimize,
    "estimate": cmd_estimate,
    "sweep": cmd_sweep,
}
