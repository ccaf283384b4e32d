"""Experiment configuration: INI files, overrides, validation, echo.

A configuration is a flat INI document with sections ``model``,
``payoff``, ``grid``, ``algorithm`` and optionally ``execution`` and
``output``.  Unknown sections or keys are rejected by name.  Overrides
are ``section.key=value`` strings applied before validation, so a file
plus its overrides always round-trips through the resolved echo:
parsing the echo reproduces the same experiment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import configparser
import numpy as np

from .models import BlackScholesParams, HestonParams, TimeGrid
from .parallel import (
    DEFAULT_GROUP_SIZE,
    GRANULARITIES,
    ExecutionOptions,
    default_workers,
)
from .payoffs import PayoffSpec


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the offending entry."""


_MODEL_KEYS = {
    "heston": ("kind", "s0", "rate", "v0", "kappa", "theta", "xi", "rho"),
    "black_scholes": ("kind", "s0", "rate", "vol", "correlation"),
}
_PAYOFF_KEYS = {
    "put": ("kind", "strike"),
    "basket_put": ("kind", "strike", "weights"),
    "moving_average_call": ("kind", "window", "delay"),
}
_GRID_KEYS = ("maturity", "exercise_dates", "steps")
_ALGORITHM_KEYS = ("chaos_order", "paths", "runs", "seed", "itm_rule",
                   "union_exercise", "fit")
_FIT_MODES = ("mean", "least_squares")
_EXECUTION_KEYS = ("workers", "granularity", "group_size")
_OUTPUT_KEYS = ("path", "format")
_SECTIONS = ("model", "payoff", "grid", "algorithm", "execution", "output")


@dataclass
class ExperimentConfig:
    """Fully resolved pricing experiment."""

    model: BlackScholesParams | HestonParams
    payoff: PayoffSpec
    grid: TimeGrid
    chaos_order: int
    path_count: int
    runs: int
    seed: int
    itm_rule: bool
    union_exercise: bool
    fit: str
    workers: int
    granularity: str
    group_size: int
    output_path: str | None
    output_format: str
    resolved: dict[str, dict[str, str]] = field(repr=False, default_factory=dict)

    def execution_options(self, **overrides) -> ExecutionOptions:
        values = {
            "workers": self.workers,
            "granularity": self.granularity,
            "group_size": self.group_size,
        }
        values.update(overrides)
        return ExecutionOptions(**values)

    def echo(self) -> str:
        """Canonical INI rendering of the resolved configuration."""
        lines = []
        for section in _SECTIONS:
            entries = self.resolved.get(section)
            if not entries:
                continue
            lines.append(f"[{section}]")
            for key, value in entries.items():
                lines.append(f"{key} = {value}")
            lines.append("")
        return "\n".join(lines)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple, np.ndarray)):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


class _Section:
    """Typed, consumed-key view of one INI section."""

    def __init__(self, name: str, entries: dict[str, str]):
        self.name = name
        self.entries = dict(entries)
        self.used: set[str] = set()

    def has(self, key: str) -> bool:
        return key in self.entries

    def raw(self, key: str, default=None, required: bool = False) -> str | None:
        if key not in self.entries:
            if required:
                raise ConfigError(f"missing required key {self.name}.{key}")
            return default
        self.used.add(key)
        return self.entries[key].strip()

    def typed(self, key: str, convert, default=None, required: bool = False):
        raw = self.raw(key, None, required)
        if raw is None:
            return default
        try:
            return convert(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {self.name}.{key}: {exc}") from None

    def check_unknown(self, allowed) -> None:
        unknown = sorted(set(self.entries) - set(allowed))
        if unknown:
            raise ConfigError(
                f"unknown key {self.name}.{unknown[0]} "
                f"(allowed: {', '.join(sorted(allowed))})"
            )


def _to_bool(raw: str) -> bool:
    lowered = raw.lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _to_float_list(raw: str) -> list[float]:
    parts = [p for p in (s.strip() for s in raw.split(",")) if p]
    if not parts:
        raise ValueError("expected a comma-separated list of numbers")
    return [float(p) for p in parts]


def _to_positive_int(raw: str) -> int:
    value = int(float(raw)) if ("e" in raw.lower() or "." in raw) else int(raw)
    if float(raw) != value:
        raise ValueError(f"expected an integer, got {raw!r}")
    if value < 1:
        raise ValueError(f"expected a positive integer, got {value}")
    return value


def parse_overrides(pairs) -> dict[str, dict[str, str]]:
    """Parse ``section.key=value`` strings."""
    out: dict[str, dict[str, str]] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not of the form "
                              "section.key=value")
        target, value = pair.split("=", 1)
        if "." not in target:
            raise ConfigError(f"override {pair!r} is not of the form "
                              "section.key=value")
        section, key = target.split(".", 1)
        section = section.strip().lower()
        key = key.strip().lower()
        if section not in _SECTIONS:
            raise ConfigError(f"override names unknown section {section!r}")
        out.setdefault(section, {})[key] = value.strip()
    return out


def parse_config(text: str, overrides=()) -> ExperimentConfig:
    """Parse an INI document (plus overrides) into a validated experiment."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None

    sections = {name.lower(): dict(parser.items(name))
                for name in parser.sections()}
    unknown_sections = sorted(set(sections) - set(_SECTIONS))
    if unknown_sections:
        raise ConfigError(f"unknown section [{unknown_sections[0]}]")
    for section, entries in parse_overrides(overrides).items():
        sections.setdefault(section, {}).update(entries)
    for required in ("model", "payoff", "grid", "algorithm"):
        if required not in sections:
            raise ConfigError(f"missing required section [{required}]")

    resolved: dict[str, dict[str, str]] = {}

    # Grid first: payoff validation needs it.
    grid_sec = _Section("grid", sections["grid"])
    grid_sec.check_unknown(_GRID_KEYS)
    maturity = grid_sec.typed("maturity", float, required=True)
    exercise_dates = grid_sec.typed("exercise_dates", _to_positive_int,
                                    required=True)
    steps = grid_sec.typed("steps", _to_positive_int, default=None)
    try:
        grid = TimeGrid.regular(maturity, exercise_dates, steps)
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None
    resolved["grid"] = {
        "maturity": _fmt(maturity),
        "exercise_dates": _fmt(exercise_dates),
        "steps": _fmt(grid.steps),
    }

    model_sec = _Section("model", sections["model"])
    kind = (model_sec.raw("kind", required=True) or "").lower()
    if kind not in _MODEL_KEYS:
        raise ConfigError(f"model.kind {kind!r} not in "
                          f"{tuple(sorted(_MODEL_KEYS))}")
    model_sec.check_unknown(_MODEL_KEYS[kind])
    try:
        if kind == "heston":
            model = HestonParams(
                spot=model_sec.typed("s0", float, required=True),
                rate=model_sec.typed("rate", float, required=True),
                v0=model_sec.typed("v0", float, required=True),
                kappa=model_sec.typed("kappa", float, required=True),
                theta=model_sec.typed("theta", float, required=True),
                xi=model_sec.typed("xi", float, required=True),
                rho=model_sec.typed("rho", float, required=True),
            )
            resolved["model"] = {
                "kind": kind,
                "s0": _fmt(model.spot), "rate": _fmt(model.rate),
                "v0": _fmt(model.v0), "kappa": _fmt(model.kappa),
                "theta": _fmt(model.theta), "xi": _fmt(model.xi),
                "rho": _fmt(model.rho),
            }
        else:
            model = BlackScholesParams(
                spot=np.array(model_sec.typed("s0", _to_float_list,
                                              required=True)),
                rate=model_sec.typed("rate", float, required=True),
                vol=np.array(model_sec.typed("vol", _to_float_list,
                                             required=True)),
                correlation=model_sec.typed("correlation", float, default=0.0),
            )
            resolved["model"] = {
                "kind": kind,
                "s0": _fmt(model.spot), "rate": _fmt(model.rate),
                "vol": _fmt(model.vol),
                "correlation": _fmt(model.correlation),
            }
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from None

    payoff_sec = _Section("payoff", sections["payoff"])
    pkind = (payoff_sec.raw("kind", required=True) or "").lower()
    if pkind not in _PAYOFF_KEYS:
        raise ConfigError(f"payoff.kind {pkind!r} not in "
                          f"{tuple(sorted(_PAYOFF_KEYS))}")
    payoff_sec.check_unknown(_PAYOFF_KEYS[pkind])
    try:
        if pkind == "put":
            payoff = PayoffSpec(kind=pkind,
                                strike=payoff_sec.typed("strike", float,
                                                        required=True))
            resolved["payoff"] = {"kind": pkind, "strike": _fmt(payoff.strike)}
        elif pkind == "basket_put":
            weights = payoff_sec.typed("weights", _to_float_list, default=None)
            payoff = PayoffSpec(
                kind=pkind,
                strike=payoff_sec.typed("strike", float, required=True),
                weights=None if weights is None else np.array(weights),
            )
            resolved["payoff"] = {"kind": pkind, "strike": _fmt(payoff.strike)}
            if payoff.weights is not None:
                resolved["payoff"]["weights"] = _fmt(payoff.weights)
        else:
            payoff = PayoffSpec(
                kind=pkind,
                window=payoff_sec.typed("window", float, required=True),
                delay=payoff_sec.typed("delay", float, default=0.0),
            )
            resolved["payoff"] = {"kind": pkind, "window": _fmt(payoff.window),
                                  "delay": _fmt(payoff.delay)}
        # Consistency with the model and grid, checked early for a clear error.
        if pkind in ("put", "moving_average_call") and model.asset_count != 1:
            raise ValueError(f"{pkind} payoff needs a single-asset model")
        if pkind == "basket_put" and payoff.weights is not None \
                and payoff.weights.shape[0] != model.asset_count:
            raise ValueError(
                f"{payoff.weights.shape[0]} weights for {model.asset_count} assets"
            )
        payoff.first_exercise_index(grid)
    except ValueError as exc:
        raise ConfigError(f"payoff: {exc}") from None

    algo_sec = _Section("algorithm", sections["algorithm"])
    algo_sec.check_unknown(_ALGORITHM_KEYS)
    chaos_order = algo_sec.typed("chaos_order", _to_positive_int, required=True)
    path_count = algo_sec.typed("paths", _to_positive_int, required=True)
    runs = algo_sec.typed("runs", _to_positive_int, default=1)
    seed = algo_sec.typed("seed", int, default=0)
    if seed < 0:
        raise ConfigError(f"algorithm.seed must be nonnegative, got {seed}")
    itm_rule = algo_sec.typed("itm_rule", _to_bool, default=True)
    union_exercise = algo_sec.typed("union_exercise", _to_bool, default=False)
    fit = (algo_sec.raw("fit", default="mean") or "").lower()
    if fit not in _FIT_MODES:
        raise ConfigError(f"algorithm.fit {fit!r} not in {_FIT_MODES}")
    resolved["algorithm"] = {
        "chaos_order": _fmt(chaos_order), "paths": _fmt(path_count),
        "runs": _fmt(runs), "seed": _fmt(seed),
        "itm_rule": _fmt(itm_rule), "union_exercise": _fmt(union_exercise),
        "fit": fit,
    }

    exec_sec = _Section("execution", sections.get("execution", {}))
    exec_sec.check_unknown(_EXECUTION_KEYS)
    workers_raw = exec_sec.raw("workers", default="auto")
    if workers_raw == "auto":
        try:
            workers = default_workers()
        except ValueError as exc:
            raise ConfigError(f"execution.workers: {exc}") from None
    else:
        try:
            workers = _to_positive_int(workers_raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for execution.workers: {exc}") from None
    granularity = (exec_sec.raw("granularity", default="fixed") or "").lower()
    if granularity not in GRANULARITIES:
        raise ConfigError(
            f"execution.granularity {granularity!r} not in {GRANULARITIES}"
        )
    group_size = exec_sec.typed("group_size", _to_positive_int,
                                default=DEFAULT_GROUP_SIZE)
    workers = min(workers, path_count)
    resolved["execution"] = {
        "workers": _fmt(workers), "granularity": granularity,
        "group_size": _fmt(group_size),
    }

    out_sec = _Section("output", sections.get("output", {}))
    out_sec.check_unknown(_OUTPUT_KEYS)
    output_path = out_sec.raw("path", default=None)
    output_format = (out_sec.raw("format", default="csv") or "").lower()
    if output_format != "csv":
        raise ConfigError(f"output.format {output_format!r} unsupported "
                          "(only csv)")
    resolved["output"] = {"format": output_format}
    if output_path:
        resolved["output"]["path"] = output_path

    return ExperimentConfig(
        model=model, payoff=payoff, grid=grid,
        chaos_order=chaos_order, path_count=path_count, runs=runs, seed=seed,
        itm_rule=itm_rule, union_exercise=union_exercise, fit=fit,
        workers=workers, granularity=granularity, group_size=group_size,
        output_path=output_path, output_format=output_format,
        resolved=resolved,
    )


def load_config(path: str, overrides=()) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from None
    return parse_config(text, overrides)
