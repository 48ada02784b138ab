"""Flat ``key = value`` run configuration.

Times are stored in femtoseconds.  Time values may carry an fs, ps or ns
suffix; a bare number is read as femtoseconds.  Decay rates (lambda1,
lambda2) are dimensionless, in units of 1 / delta_t.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, fields, replace
from typing import Any

from .collapse import (
    EffectiveSymmetric,
    RouteKinematics,
    SingleShapeCovariant,
    StateAmplitudes,
    TwoShapeExponential,
    TwoShapeLinear,
)
from .errors import ConfigurationError
from .montecarlo import Scenario, TrialConfig
from .profiles import ExperimentGeometry, PulseProfile, Shape

TIME_UNITS = {"fs": 1.0, "ps": 1.0e3, "ns": 1.0e6}
FAMILY_NAMES = ("symmetric", "exponential", "linear", "covariant")
LAMBDA_SOURCES = ("analytics", "paper_literal")
OUTPUT_FORMATS = ("json", "csv")
TIME_KEYS = ("sigma_t", "delay_T", "window_dt", "delta_t", "window_origin")


@dataclass(frozen=True)
class RunConfig:
    alpha2: float = 0.75
    profile: str = "sech2"
    sigma_t: float = 1000.0
    delay_T: float = 3.3
    window_dt: float = 1.0e6
    window_origin: float | None = None
    delta_t: float = 0.1
    scenario: str = "finite"
    family: str = "symmetric"
    lambda1: float = 5.0
    lambda2: float = 5.0
    exponent1: float = 1.0
    exponent2: float = 1.0
    n_trials: int = 1_000_000
    seed: int = 1
    partitions: int = 1
    lambda_source: str = "analytics"
    confidence_level: float = 0.95
    output_path: str | None = None
    output_format: str = "json"

    def __post_init__(self):
        self.validate()

    # -- validation ---------------------------------------------------
    def validate(self) -> None:
        if not 0.0 < self.alpha2 < 1.0:
            raise ConfigurationError("alpha2: must lie strictly between 0 and 1")
        if self.profile not in (s.value for s in Shape):
            raise ConfigurationError(f"profile: unknown profile {self.profile!r}")
        if not (self.sigma_t > 0 and math.isfinite(self.sigma_t)):
            raise ConfigurationError("sigma_t: must be positive")
        if not math.isfinite(self.delay_T):
            raise ConfigurationError("delay_T: must be finite")
        if not (self.window_dt > 0 and math.isfinite(self.window_dt)):
            raise ConfigurationError("window_dt: must be positive")
        if self.window_origin is not None and not math.isfinite(self.window_origin):
            raise ConfigurationError("window_origin: must be finite")
        if not (0.0 <= self.delta_t < self.window_dt):
            raise ConfigurationError("delta_t: must satisfy 0 <= delta_t < window_dt")
        if self.scenario not in (s.value for s in Scenario):
            raise ConfigurationError(f"scenario: unknown scenario {self.scenario!r}")
        if self.family not in FAMILY_NAMES:
            raise ConfigurationError(f"family: unknown family {self.family!r}")
        for key in ("lambda1", "lambda2"):
            v = getattr(self, key)
            if not (math.isfinite(v) and abs(v) <= 700.0):
                raise ConfigurationError(f"{key}: rate must be finite with |rate| <= 700")
        for key in ("exponent1", "exponent2"):
            if not getattr(self, key) > 0:
                raise ConfigurationError(f"{key}: must be positive")
        if self.n_trials < 1:
            raise ConfigurationError("n_trials: must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError("seed: must be an unsigned 64-bit integer")
        if self.partitions < 1:
            raise ConfigurationError("partitions: must be >= 1")
        if self.lambda_source not in LAMBDA_SOURCES:
            raise ConfigurationError(f"lambda_source: must be one of {LAMBDA_SOURCES}")
        if not 0.0 < self.confidence_level < 1.0:
            raise ConfigurationError("confidence_level: must lie in (0, 1)")
        if self.output_format not in OUTPUT_FORMATS:
            raise ConfigurationError(f"output_format: must be one of {OUTPUT_FORMATS}")
        # component invariants
        self.geometry()
        self.kinematics()

    # -- component builders ---------------------------------------------
    def state(self) -> StateAmplitudes:
        return StateAmplitudes.from_alpha2(self.alpha2)

    def geometry(self) -> ExperimentGeometry:
        return ExperimentGeometry(
            base=PulseProfile(Shape(self.profile), self.sigma_t, 0.0),
            delay_T=self.delay_T,
            window_dt=self.window_dt,
            window_origin=self.window_origin,
        )

    def family_object(self):
        if self.family == "exponential":
            return TwoShapeExponential(self.lambda1, self.lambda2)
        if self.family == "linear":
            return TwoShapeLinear(self.exponent1, self.exponent2)
        if self.family == "covariant":
            return SingleShapeCovariant(self.lambda2)
        return EffectiveSymmetric(self.lambda2)

    def kinematics(self) -> RouteKinematics:
        return RouteKinematics(self.state(), self.delta_t, self.family_object())

    def trial_config(self, kinematics: RouteKinematics | None = None) -> TrialConfig:
        return TrialConfig(
            state=self.state(),
            geometry=self.geometry(),
            kinematics=kinematics or self.kinematics(),
            scenario=Scenario(self.scenario),
            n_trials=self.n_trials,
            seed=self.seed,
        )

    def lambda_eff(self, report) -> float:
        """Lambda entering the count-deviation and planning formulas."""
        if self.lambda_source == "paper_literal":
            return report.lambda_quoted
        return report.lambda_cond * report.p_less

    def with_axis(self, axis: str, value: float) -> "RunConfig":
        key = {"T": "delay_T", "lambda_rate": "lambda2"}.get(axis, axis)
        return replace(self, **{key: value})

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_INT_KEYS = ("n_trials", "seed", "partitions")
_STR_KEYS = ("profile", "scenario", "family", "lambda_source", "output_format", "output_path")
_SCENARIO_ALIASES = {"instantaneous": "instantaneous", "finite": "finite", "finitetime": "finite",
                     "finite_time": "finite"}
_TIME_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(fs|ps|ns)?\s*$")


def parse_time(text: str) -> float:
    m = _TIME_RE.match(text)
    if not m:
        raise ValueError(f"cannot read time value {text!r}")
    return float(m.group(1)) * TIME_UNITS[m.group(2) or "fs"]


def _parse_int(text: str) -> int:
    text = text.strip().replace("_", "")
    try:
        return int(text)
    except ValueError:
        f = float(text)
        if not f.is_integer():
            raise ValueError(f"expected an integer, got {text!r}")
        return int(f)


def _convert(key: str, raw: str):
    raw = raw.strip()
    if key in ("window_origin", "output_path") and raw.lower() in ("", "auto", "none"):
        return None
    if key in TIME_KEYS:
        return parse_time(raw)
    if key in _INT_KEYS:
        return _parse_int(raw)
    if key == "scenario":
        norm = raw.lower().replace("-", "_")
        if norm not in _SCENARIO_ALIASES:
            raise ValueError(f"unknown scenario {raw!r}")
        return _SCENARIO_ALIASES[norm]
    if key in _STR_KEYS:
        return raw
    return float(raw)


def parse_assignments(pairs, base: RunConfig | None = None) -> RunConfig:
    """Apply (line_number, key, raw_value) triples on top of ``base``."""
    values = (base or RunConfig()).to_dict()
    for lineno, key, raw in pairs:
        where = f"line {lineno}: " if lineno else ""
        if key not in _FIELD_TYPES:
            raise ConfigurationError(f"{where}unknown key {key!r}")
        try:
            values[key] = _convert(key, raw)
        except ValueError as exc:
            raise ConfigurationError(f"{where}{key}: {exc}") from None
    try:
        return RunConfig(**values)
    except ConfigurationError as exc:
        # validation messages start with the offending key; point back at its line
        key = str(exc).split(":", 1)[0]
        lines = {k: n for n, k, _ in pairs if n}
        where = f"line {lines[key]}: " if key in lines else ""
        raise ConfigurationError(f"{where}invalid configuration: {exc}") from None


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse a flat ``key = value`` document; ``#`` starts a comment."""
    pairs = []
    seen = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key in seen:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r} (first set on line {seen[key]})")
        seen[key] = lineno
        pairs.append((lineno, key, raw))
    return parse_assignments(pairs, base)


def emit_config(cfg: RunConfig) -> str:
    """Serialize to the flat format; parse_config(emit_config(c)) == c."""
    lines = []
    for key, value in cfg.to_dict().items():
        if value is None:
            text = "auto" if key == "window_origin" else "none"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"
