"""Model parameters, incidence functions and equilibria of the SIR system."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, fields
from typing import Callable

import numpy as np

__all__ = [
    "Bilinear",
    "BracketingFailure",
    "EquilibriumKind",
    "EquilibriumPoint",
    "FunctionIncidence",
    "IncidenceAssumptionWarning",
    "IncidenceModel",
    "ModelParams",
    "NoEndemicEquilibrium",
    "Saturated",
    "check_incidence",
    "disease_free_equilibrium",
    "endemic_equilibrium",
    "endemic_equilibrium_bilinear",
    "equilibrium_residuals",
    "get_incidence",
    "reduced_equation",
    "register_incidence",
    "reproduction_number",
]


class NoEndemicEquilibrium(ValueError):
    """Raised when an endemic state is requested but :math:`R_0 \\le 1`."""


class BracketingFailure(RuntimeError):
    """The sign scan of the reduced equation found no interior root."""


class IncidenceAssumptionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ModelParams:
    """Epidemiological and diffusion constants.

    Rates are per unit time, diffusion coefficients per unit length squared
    per unit time. Diffusion coefficients may be zero (no spatial coupling);
    every other field must be strictly positive.
    """

    lam: float
    beta: float
    gamma: float
    delta: float
    mu: float
    r: float
    d1: float = 1.0
    d2: float = 1.0
    d3: float = 1.0

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise ValueError(f"{f.name} must be finite, got {value!r}")
            if f.name.startswith("d"):
                if value < 0:
                    raise ValueError(f"{f.name} must be non-negative, got {value!r}")
            elif value <= 0:
                raise ValueError(f"{f.name} must be positive, got {value!r}")

    @property
    def mu_tilde(self) -> float:
        """Smallest per-capita removal rate, ``min(mu, gamma, delta)``."""
        return min(self.mu, self.gamma, self.delta)

    @property
    def diffusion(self) -> tuple[float, float, float]:
        return (self.d1, self.d2, self.d3)


# {{{ incidence


class IncidenceModel:
    """Incidence function :math:`f(I)` entering the force of infection
    :math:`\\beta S f(I)`.

    Subclasses implement :meth:`__call__` (vectorised over arrays) and
    :meth:`derivative_at_zero`.
    """

    def __call__(self, infected):
        raise NotImplementedError

    def derivative_at_zero(self) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class Bilinear(IncidenceModel):
    """Mass-action incidence :math:`f(I) = I`."""

    def __call__(self, infected):
        return infected * 1.0

    def derivative_at_zero(self) -> float:
        return 1.0


@dataclass(frozen=True)
class Saturated(IncidenceModel):
    """Saturated incidence :math:`f(I) = I / (w + I)`."""

    w: float = 1.0

    def __post_init__(self) -> None:
        if not self.w > 0:
            raise ValueError(f"saturation constant must be positive, got {self.w!r}")

    def __call__(self, infected):
        return infected / (self.w + infected)

    def derivative_at_zero(self) -> float:
        return 1.0 / self.w


@dataclass(frozen=True)
class FunctionIncidence(IncidenceModel):
    """Wraps a user supplied callable and its slope at zero."""

    func: Callable[[np.ndarray], np.ndarray]
    slope_at_zero: float
    name: str = "custom"

    def __call__(self, infected):
        return self.func(infected)

    def derivative_at_zero(self) -> float:
        return float(self.slope_at_zero)


def check_incidence(
    f: IncidenceModel,
    grid: np.ndarray | None = None,
    *,
    rtol: float = 1e-12,
) -> list[str]:
    """Sample the standing assumptions on *f* and return the violated ones.

    Checks, on a log-spaced grid over ``[1e-6, 1e3]`` by default:

    * ``A1``: :math:`f(0) = 0` and :math:`f(I) > 0`;
    * ``A2``: :math:`f` nondecreasing and :math:`f(I)/I` nonincreasing;
    * ``A3``: :math:`f(I) \\le I f'(0)`.

    Sampling can falsify these but never prove them.
    """
    if grid is None:
        grid = np.logspace(-6, 3, 2001)

    grid = np.asarray(grid, dtype=np.float64)
    fv = np.asarray(f(grid), dtype=np.float64)
    f0 = float(np.asarray(f(np.zeros(1)))[0])
    slope = f.derivative_at_zero()

    violations = []
    if f0 != 0.0 or not np.all(fv > 0):
        violations.append("A1")

    ratio = fv / grid
    tol = rtol * np.abs(fv[1:])
    if np.any(np.diff(fv) < -tol) or np.any(np.diff(ratio) > rtol * np.abs(ratio[1:])):
        violations.append("A2")

    if np.any(fv > grid * slope * (1.0 + rtol)):
        violations.append("A3")

    return violations


_INCIDENCE_REGISTRY: dict[str, Callable[..., IncidenceModel]] = {
    "bilinear": Bilinear,
    "saturated": Saturated,
}


def register_incidence(name: str, factory: Callable[..., IncidenceModel]) -> None:
    """Make a custom incidence model available by name.

    The factory is instantiated once with no arguments and checked with
    :func:`check_incidence`; violations only emit an
    :class:`IncidenceAssumptionWarning`.
    """
    try:
        probe = factory()
    except TypeError:
        probe = None

    if probe is not None:
        bad = check_incidence(probe)
        if bad:
            warnings.warn(
                f"incidence {name!r} violates {', '.join(bad)} on the sample grid",
                IncidenceAssumptionWarning,
                stacklevel=2,
            )

    _INCIDENCE_REGISTRY[name] = factory


def get_incidence(name: str, **kwargs) -> IncidenceModel:
    try:
        factory = _INCIDENCE_REGISTRY[name]
    except KeyError:
        raise KeyError(
            f"unknown incidence {name!r}; known: {sorted(_INCIDENCE_REGISTRY)}"
        ) from None

    return factory(**kwargs)


# }}}

# {{{ equilibria


class EquilibriumKind(enum.Enum):
    DiseaseFree = "disease-free"
    Endemic = "endemic"


@dataclass(frozen=True)
class EquilibriumPoint:
    S: float
    I: float  # noqa: E741
    R: float
    kind: EquilibriumKind

    def __post_init__(self) -> None:
        if min(self.S, self.I, self.R) < 0:
            raise ValueError(f"equilibrium components must be >= 0: {self}")
        if self.kind is EquilibriumKind.DiseaseFree and (self.I != 0 or self.R != 0):
            raise ValueError("a disease-free equilibrium has I = R = 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.S, self.I, self.R])


def reproduction_number(p: ModelParams, f: IncidenceModel | None = None) -> float:
    """Basic reproduction number :math:`\\beta (\\lambda / \\gamma) f'(0) / (\\mu + r)`."""
    slope = 1.0 if f is None else f.derivative_at_zero()
    return p.beta * (p.lam / p.gamma) * slope / (p.mu + p.r)


def disease_free_equilibrium(p: ModelParams) -> EquilibriumPoint:
    return EquilibriumPoint(p.lam / p.gamma, 0.0, 0.0, EquilibriumKind.DiseaseFree)


def reduced_equation(p: ModelParams, f: IncidenceModel) -> Callable[[float], float]:
    """Return :math:`g(I)` whose positive root is the endemic infected level.

    Obtained by eliminating :math:`S = (\\lambda - (\\mu + r) I) / \\gamma`
    from the steady-state equations.
    """
    mr = p.mu + p.r

    def g(infected: float) -> float:
        s = (p.lam - mr * infected) / p.gamma
        return float(p.beta * s * f(infected) - mr * infected)

    return g


def endemic_equilibrium(
    p: ModelParams,
    f: IncidenceModel | None = None,
    tol: float = 4.0 * np.finfo(float).eps,
    *,
    nscan: int = 10_000,
) -> EquilibriumPoint:
    """Locate the endemic equilibrium by sign scan and bisection.

    Since :math:`g(0) = 0` is always a root, the scan starts at
    ``eps = 1e-12 * Imax`` with ``Imax = lam / (mu + r)`` and uses *nscan*
    equal subintervals. The first sign change is then bisected until the
    bracket is narrower than ``tol`` relative to its upper end. A residual
    test would stop too early near the threshold, where ``g'`` is small.

    :raises NoEndemicEquilibrium: if :math:`R_0 \\le 1`.
    :raises BracketingFailure: if no sign change is found.
    """
    if f is None:
        f = Bilinear()

    r0 = reproduction_number(p, f)
    if r0 <= 1.0:
        raise NoEndemicEquilibrium(f"R0 = {r0:.6g} <= 1, no endemic equilibrium")

    g = reduced_equation(p, f)
    imax = p.lam / (p.mu + p.r)
    eps = 1.0e-12 * imax

    xs = np.linspace(eps, imax, nscan + 1)
    gs = np.array([g(x) for x in xs])

    (idx,) = np.nonzero(np.sign(gs[:-1]) * np.sign(gs[1:]) <= 0)
    if idx.size == 0:
        raise BracketingFailure(
            "reduced equation has no sign change on (eps, lam/(mu+r)]; "
            "check the incidence assumptions"
        )

    i = idx[0]
    lo, hi = xs[i], xs[i + 1]
    glo = gs[i]
    if glo == 0.0:
        mid = lo
    elif gs[i + 1] == 0.0:
        mid = hi
    else:
        while True:
            mid = 0.5 * (lo + hi)
            gm = g(mid)
            if gm == 0.0 or hi - lo <= tol * hi or not lo < mid < hi:
                break
            if (gm > 0) == (glo > 0):
                lo, glo = mid, gm
            else:
                hi = mid

    infected = float(mid)
    s = (p.lam - (p.mu + p.r) * infected) / p.gamma
    return EquilibriumPoint(s, infected, p.r * infected / p.delta, EquilibriumKind.Endemic)


def endemic_equilibrium_bilinear(p: ModelParams) -> EquilibriumPoint:
    """Closed form of the endemic state for :math:`f(I) = I`."""
    mr = p.mu + p.r
    infected = p.lam / mr - p.gamma / p.beta
    if infected <= 0:
        raise NoEndemicEquilibrium("R0 <= 1, no endemic equilibrium")

    return EquilibriumPoint(
        mr / p.beta, infected, p.r * infected / p.delta, EquilibriumKind.Endemic
    )


def equilibrium_residuals(
    p: ModelParams, f: IncidenceModel, e: EquilibriumPoint
) -> np.ndarray:
    """Right-hand sides of the reaction system evaluated at *e*."""
    force = p.beta * e.S * float(f(e.I))
    return np.array(
        [
            p.lam - force - p.gamma * e.S,
            force - (p.mu + p.r) * e.I,
            p.r * e.I - p.delta * e.R,
        ]
    )


# }}}
