"""Run configuration: a flat ``key = value`` document with ``#`` comments.

Example::

    preset = paper-ee   # start from a compiled-in preset
    alpha  = 0.9
    steps  = 3000
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Any

from fracsir.epidemics import IncidenceModel, ModelParams, get_incidence
from fracsir.solver import (
    GridSpec,
    InitialCondition,
    constant_initial_condition,
    decaying_initial_condition,
)

__all__ = [
    "PRESETS",
    "ConfigError",
    "ParseError",
    "RunConfig",
    "ValidationError",
    "parse_config",
]


class ConfigError(ValueError):
    pass


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    def __init__(self, key: str, message: str) -> None:
        super().__init__(f"{key}: {message}")
        self.key = key


# document key -> RunConfig field, for the few that differ
_ALIASES = {"lambda": "lam"}
_FIELD_TO_KEY = {v: k for k, v in _ALIASES.items()}


@dataclass(frozen=True)
class RunConfig:
    alpha: float = 0.8
    dt: float = 0.1
    a: float = 0.0
    b: float = 5.0
    M: int = 50
    steps: int = 2000

    lam: float = 0.2
    beta: float = 0.2144
    gamma: float = 0.2
    delta: float = 0.2
    mu: float = 0.2
    r: float = 0.25
    d1: float = 1.0
    d2: float = 1.0
    d3: float = 1.0

    incidence: str = "bilinear"
    w: float = 1.0

    ic: str = "decay"
    ic_S: float = 0.5
    ic_I: float = 0.1
    ic_R: float = 0.0

    out: str = "out"
    tol: float = 1.0e-10
    window: int = 50
    slack: float = 1.0e-10
    seed: int = 0
    workers: int = 4

    def __post_init__(self) -> None:
        for name in ("alpha", "dt", "lam", "beta", "gamma", "delta", "mu", "r", "w",
                     "tol", "slack", "ic_S"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValidationError(_FIELD_TO_KEY.get(name, name), f"must be positive, got {value!r}")

        for name in ("d1", "d2", "d3", "ic_I", "ic_R"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValidationError(name, f"must be non-negative, got {value!r}")

        if not self.alpha <= 1.0:
            raise ValidationError("alpha", f"must lie in (0, 1], got {self.alpha!r}")
        if not self.b > self.a:
            raise ValidationError("b", f"must exceed a = {self.a!r}")
        if self.M < 2:
            raise ValidationError("M", f"must be at least 2, got {self.M}")
        if self.steps < 1:
            raise ValidationError("steps", f"must be at least 1, got {self.steps}")
        if self.window < 1:
            raise ValidationError("window", f"must be at least 1, got {self.window}")
        if self.workers < 1:
            raise ValidationError("workers", f"must be at least 1, got {self.workers}")
        if self.incidence not in ("bilinear", "saturated"):
            raise ValidationError("incidence", f"unknown incidence {self.incidence!r}")
        if self.ic not in ("decay", "constant"):
            raise ValidationError("ic", f"unknown initial condition {self.ic!r}")

    # {{{ derived objects

    @property
    def dx(self) -> float:
        return (self.b - self.a) / self.M

    @property
    def params(self) -> ModelParams:
        return ModelParams(
            lam=self.lam, beta=self.beta, gamma=self.gamma, delta=self.delta,
            mu=self.mu, r=self.r, d1=self.d1, d2=self.d2, d3=self.d3,
        )

    @property
    def incidence_model(self) -> IncidenceModel:
        if self.incidence == "saturated":
            return get_incidence("saturated", w=self.w)
        return get_incidence(self.incidence)

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.a, self.b, self.M, self.dt, self.steps)

    @property
    def initial_condition(self) -> InitialCondition:
        if self.ic == "decay":
            return decaying_initial_condition
        return constant_initial_condition(self.ic_S, self.ic_I, self.ic_R)

    # }}}

    def replace(self, **changes: Any) -> RunConfig:
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        """Serialise to a document that :func:`parse_config` maps back to an
        equal configuration."""
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            lines.append(f"{_FIELD_TO_KEY.get(f.name, f.name)} = {_format(value)}")
        return "\n".join(lines) + "\n"


def _format(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


PRESETS: dict[str, dict[str, Any]] = {
    "paper-dfe": dict(
        lam=0.2, beta=0.2144, gamma=0.2, delta=0.2, mu=0.2, r=0.25,
        alpha=0.8, dt=0.1, a=0.0, b=5.0, M=50, d1=1.0, d2=1.0, d3=1.0,
        incidence="bilinear", ic="decay", steps=5000,
    ),
    "paper-ee": dict(
        lam=0.2, beta=0.6217, gamma=0.2, delta=0.2, mu=0.2, r=0.25,
        alpha=0.8, dt=0.1, a=0.0, b=5.0, M=50, d1=1.0, d2=1.0, d3=1.0,
        incidence="bilinear", ic="decay", steps=10000,
    ),
}

_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _convert(key: str, name: str, raw: str) -> Any:
    kind = _FIELDS[name].type
    try:
        if kind == "int":
            value = float(raw)
            if not value.is_integer():
                raise ValueError
            return int(value)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ValidationError(key, f"expected a number, got {raw!r}") from None

    return raw


def parse_config(text: str, *, preset: str | None = None, **overrides: Any) -> RunConfig:
    """Parse a configuration document.

    Values are applied in order: defaults, then the preset (named by the
    *preset* argument or a ``preset`` key), then the document, then
    *overrides*. ``dx`` may be given instead of ``M``.

    :raises ParseError: on malformed lines or duplicate keys.
    :raises ValidationError: on unknown keys or out-of-range values.
    """
    values: dict[str, Any] = {}
    dx: float | None = None

    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected 'key = value', got {line!r}")

        key, raw = (s.strip() for s in line.split("=", 1))
        if not key or not raw:
            raise ParseError(f"line {lineno}: empty key or value")

        if key == "preset":
            if preset is not None and preset != raw:
                raise ValidationError("preset", f"conflicting presets {preset!r} and {raw!r}")
            preset = raw
            continue

        if key == "dx":
            try:
                dx = float(raw)
            except ValueError:
                raise ValidationError("dx", f"expected a number, got {raw!r}") from None
            continue

        name = _ALIASES.get(key, key)
        if name not in _FIELDS:
            raise ValidationError(key, "unknown key")
        if name in values:
            raise ParseError(f"line {lineno}: duplicate key {key!r}")
        values[name] = _convert(key, name, raw)

    merged: dict[str, Any] = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ValidationError("preset", f"unknown preset {preset!r}; known: {sorted(PRESETS)}")
        merged.update(PRESETS[preset])
    merged.update(values)
    merged.update({_ALIASES.get(k, k): v for k, v in overrides.items() if v is not None})

    if dx is not None:
        if not dx > 0:
            raise ValidationError("dx", f"must be positive, got {dx!r}")
        a = merged.get("a", RunConfig.a)
        b = merged.get("b", RunConfig.b)
        m = round((b - a) / dx)
        if "M" in values and values["M"] != m or abs((b - a) / max(m, 1) - dx) > 1e-9 * dx:
            raise ValidationError("dx", f"dx = {dx!r} does not divide [{a}, {b}] into M intervals")
        merged["M"] = m

    return RunConfig(**merged)
