"""Run configuration: defaults, run files, environment and CLI overrides, validated into a RunConfig.

Keys are dotted paths (`grid.n`, `mc.seed`). Run files may be YAML (nested or
dotted keys) or the flat `key = value` text format (`.cfg`, `.txt`), whose
values are parsed as YAML scalars and lists.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping

import yaml

from analysis.errors import ConfigError
from analysis.functional import DERIVATIVE_MODES, FUNCTIONAL_KINDS
from analysis.mc import MC_METHODS
from analysis.optimizer import LAMBDA_SOLVERS
from analysis.problem import EXPRESSIONS, is_expression
from discretization.covariance import KERNEL_KINDS

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).parent.parent / "config"
TEXT_SUFFIXES = (".cfg", ".txt")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
ENV_OVERRIDES = {
    "TAILPROB_OUTPUT_DIR": "output.dir",
    "TAILPROB_LOG_LEVEL": "logging.level",
}
THRESHOLD_PREFIX = "thresholds."


@dataclass(frozen=True)
class RunConfig:
    """Validated dotted-key configuration plus the numerical thresholds."""

    values: Mapping[str, Any]
    thresholds: Mapping[str, Any]

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def section(self, name: str) -> dict[str, Any]:
        prefix = name + "."
        return {k[len(prefix):]: v for k, v in self.values.items() if k.startswith(prefix)}

    def replace(self, **updates: Any) -> RunConfig:
        """Copy with dotted keys updated (double underscores stand for dots)."""
        values = dict(self.values)
        values.update({k.replace("__", "."): v for k, v in updates.items()})
        return validate(values, self.thresholds)

    def to_dict(self) -> dict[str, Any]:
        """Values plus `thresholds.`-prefixed tolerances; loads back to the same config."""
        merged = dict(self.values)
        merged.update({THRESHOLD_PREFIX + k: v for k, v in self.thresholds.items()})
        return dict(sorted(merged.items()))


def flatten(nested: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    """{'grid': {'n': [65]}} -> {'grid.n': [65]}; dotted keys pass through."""
    flat: dict[str, Any] = {}
    for key, value in nested.items():
        path = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(flatten(value, path + "."))
        else:
            flat[path] = value
    return flat


def _load_yaml(path: Path) -> dict[str, Any]:
    with open(path, encoding="utf-8") as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, Mapping):
        raise ConfigError([f"{path}: top level must be a mapping"])
    return flatten(data)


def _load_text(path: Path) -> dict[str, Any]:
    values: dict[str, Any] = {}
    problems: list[str] = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, text = line.partition("=")
            if not sep or not key.strip():
                problems.append(f"{path}:{lineno}: expected 'key = value'")
                continue
            try:
                values[key.strip()] = yaml.safe_load(text.strip())
            except yaml.YAMLError as e:
                problems.append(f"{path}:{lineno}: {key.strip()}: cannot parse value ({e})")
    if problems:
        raise ConfigError(problems)
    return values


def read_config_file(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"config file not found: {path}"])
    if path.suffix in TEXT_SUFFIXES:
        return _load_text(path)
    return _load_yaml(path)


def load_defaults() -> dict[str, Any]:
    return _load_yaml(CONFIG_DIR / "settings.yaml")


def load_thresholds() -> dict[str, Any]:
    return _load_yaml(CONFIG_DIR / "thresholds.yaml")


# --- validation -------------------------------------------------------------

def _number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _integer(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _positive(v) -> str | None:
    return None if _number(v) and v > 0 else "must be a positive number"


def _at_least(low: int) -> Callable[[Any], str | None]:
    return lambda v: None if _integer(v) and v >= low else f"must be an integer >= {low}"


def _one_of(options) -> Callable[[Any], str | None]:
    return lambda v: None if v in options else f"must be one of {list(options)}, got {v!r}"


def _boolean(v) -> str | None:
    return None if isinstance(v, bool) else "must be true or false"


def _text(v) -> str | None:
    return None if isinstance(v, str) and v else "must be a non-empty string"


def _expression(v) -> str | None:
    return None if is_expression(v) else f"must be a number or one of {list(EXPRESSIONS)}, got {v!r}"


def _alpha(v) -> str | None:
    return None if _number(v) and 0 < v < 1 else f"must lie strictly between 0 and 1, got {v!r}"


def _kappa(v) -> str | None:
    return None if _number(v) and v >= 0 else f"must be a finite number >= 0, got {v!r}"


def _seed(v) -> str | None:
    return None if _integer(v) and v >= 0 else "must be a non-negative integer"


def _sigmas(v) -> str | None:
    if isinstance(v, list) and all(_number(s) and s > 0 for s in v):
        return None
    return "must be a list of positive numbers"


def _bounds(v) -> str | None:
    if not isinstance(v, list) or not 1 <= len(v) <= 2:
        return "must be a list of one or two [low, high] pairs"
    for pair in v:
        if not (isinstance(pair, list) and len(pair) == 2 and all(_number(x) for x in pair)):
            return "each entry must be a [low, high] pair of numbers"
        if not pair[0] < pair[1]:
            return f"needs low < high, got {pair}"
    return None


def _node_counts(v) -> str | None:
    if not isinstance(v, list) or not 1 <= len(v) <= 2:
        return "must be a list of one or two node counts"
    if not all(_integer(c) and c >= 3 for c in v):
        return f"every node count must be an integer >= 3, got {v}"
    return None


SCHEMA: dict[str, Callable[[Any], str | None]] = {
    "grid.bounds": _bounds,
    "grid.n": _node_counts,
    "kernel.kind": _one_of(KERNEL_KINDS),
    "kernel.length_scale": _positive,
    "pde.a0": _expression,
    "pde.f": _expression,
    "functional.kind": _one_of(FUNCTIONAL_KINDS),
    "functional.weight": _expression,
    "functional.mu": _expression,
    "functional.derivative": _one_of(DERIVATIVE_MODES),
    "asymptotics.sigma": _positive,
    "asymptotics.alpha": _alpha,
    "asymptotics.kappa": _kappa,
    "optimizer.tol_lambda": _positive,
    "optimizer.tol_xi": _positive,
    "optimizer.max_outer": _at_least(1),
    "optimizer.max_inner": _at_least(1),
    "optimizer.epsilon": _positive,
    "optimizer.lambda_solver": _one_of(LAMBDA_SOLVERS),
    "mc.n": _at_least(1),
    "mc.seed": _seed,
    "mc.workers": _at_least(1),
    "mc.method": _one_of(MC_METHODS + ("both",)),
    "mc.chunk_size": _at_least(1),
    "output.dir": _text,
    "output.emit_fields": _boolean,
    "output.emit_samples": _boolean,
    "sweep.sigmas": _sigmas,
    "logging.level": _one_of(LOG_LEVELS),
    "logging.format": _text,
}

REAL_KEYS = (
    "kernel.length_scale", "asymptotics.sigma", "asymptotics.alpha", "asymptotics.kappa",
    "optimizer.tol_lambda", "optimizer.tol_xi", "optimizer.epsilon",
)


def _normalize(values: dict[str, Any]) -> dict[str, Any]:
    # PyYAML reads exponents without a dot (1e-12) as strings
    for key in REAL_KEYS:
        if isinstance(values.get(key), str):
            try:
                values[key] = float(values[key])
            except ValueError:
                pass
    # a single axis may be written without the outer list
    bounds = values.get("grid.bounds")
    if isinstance(bounds, list) and len(bounds) == 2 and all(_number(x) for x in bounds):
        values["grid.bounds"] = [bounds]
    if _integer(values.get("grid.n")):
        values["grid.n"] = [values["grid.n"]]
    if isinstance(values.get("logging.level"), str):
        values["logging.level"] = values["logging.level"].upper()
    return values


def _threshold(default, value) -> str | None:
    if _integer(default):
        return None if _integer(value) and value > 0 else "must be a positive integer"
    if _number(default):
        return None if _number(value) and value >= 0 else "must be a finite number >= 0"
    if isinstance(value, list) and value and all(_number(x) and x >= 0 for x in value):
        return None
    return "must be a non-empty list of numbers >= 0"


def validate(values: Mapping[str, Any], thresholds: Mapping[str, Any]) -> RunConfig:
    """Check every key; all problems are reported together."""
    values = _normalize(dict(values))
    thresholds = dict(thresholds)
    problems = []
    for key in sorted(k for k in values if k.startswith(THRESHOLD_PREFIX)):
        name = key[len(THRESHOLD_PREFIX):]
        value = values.pop(key)
        if name not in thresholds:
            problems.append(f"{key}: unknown threshold")
        elif message := _threshold(thresholds[name], value):
            problems.append(f"{key}: {message}")
        else:
            thresholds[name] = value
    problems += [f"{key}: unknown configuration key" for key in sorted(values) if key not in SCHEMA]
    for key, check in SCHEMA.items():
        if key not in values:
            problems.append(f"{key}: missing")
            continue
        message = check(values[key])
        if message:
            problems.append(f"{key}: {message}")

    bounds, counts = values.get("grid.bounds"), values.get("grid.n")
    if isinstance(bounds, list) and isinstance(counts, list) and len(bounds) != len(counts):
        problems.append(f"grid.n: has {len(counts)} entries but grid.bounds has {len(bounds)}")

    if problems:
        raise ConfigError(problems)
    return RunConfig(values=values, thresholds=thresholds)


def load_config(
    path: str | Path | None = None,
    overrides: Mapping[str, Any] | None = None,
    environ: Mapping[str, str] | None = None,
) -> RunConfig:
    """defaults < run file < environment < overrides."""
    values = load_defaults()
    if path is not None:
        values.update(read_config_file(path))

    environ = os.environ if environ is None else environ
    for name, key in ENV_OVERRIDES.items():
        if environ.get(name):
            values[key] = environ[name]
            logger.debug("%s set from $%s", key, name)

    values.update({k: v for k, v in (overrides or {}).items() if v is not None})

    return validate(values, load_thresholds())
