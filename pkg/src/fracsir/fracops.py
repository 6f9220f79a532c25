"""L1 discretisation of the Caputo derivative.

Everything downstream (the solver memory sums, the Lyapunov weights, the
inequality checkers) is built from the coefficient sequence

.. math::

    b_j = (j + 1)^{1 - \\alpha} - j^{1 - \\alpha}, \\qquad j = 0, 1, \\dots

and the scaling :math:`(\\Delta t)^{-\\alpha} / \\Gamma(2 - \\alpha)`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

__all__ = [
    "FractionalOrder",
    "L1Weights",
    "caputo_l1",
    "caputo_l1_direct",
    "gamma",
    "l1_scale",
    "l1_series",
    "l1_weights",
]

# Lanczos approximation, g = 7, nine terms.
_LANCZOS_G = 7.0
_LANCZOS_COEFFS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _lanczos(x: float) -> float:
    # valid for x >= 1
    x -= 1.0
    acc = _LANCZOS_COEFFS[0]
    for i in range(1, len(_LANCZOS_COEFFS)):
        acc += _LANCZOS_COEFFS[i] / (x + i)
    t = x + _LANCZOS_G + 0.5
    return _SQRT_2PI * t ** (x + 0.5) * math.exp(-t) * acc


def gamma(x: float) -> float:
    """Gamma function for positive real arguments.

    Integers return the exact factorial; everything else goes through a
    fixed-coefficient Lanczos approximation, with arguments below one shifted
    up by :math:`\\Gamma(x) = \\Gamma(x + 1) / x`. Relative error is below
    ``1e-14`` on :math:`(0, 10]`.

    :raises ValueError: if *x* is not strictly positive.
    """
    x = float(x)
    if not x > 0.0 or math.isinf(x):
        raise ValueError(f"gamma is only defined here for finite x > 0, got {x!r}")

    if x.is_integer() and x <= 171:
        return float(math.factorial(int(x) - 1))

    if x < 1.0:
        return _lanczos(x + 1.0) / x

    return _lanczos(x)


@dataclass(frozen=True)
class FractionalOrder:
    """Order :math:`\\alpha \\in (0, 1]` of the Caputo derivative.

    ``alpha == 1`` is allowed and degenerates the L1 scheme to a backward
    difference quotient.
    """

    alpha: float

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha!r}")

    @property
    def is_integer(self) -> bool:
        return self.alpha == 1.0

    def __float__(self) -> float:
        return float(self.alpha)


def _as_alpha(alpha: float | FractionalOrder) -> float:
    if isinstance(alpha, FractionalOrder):
        return alpha.alpha
    return FractionalOrder(float(alpha)).alpha


@dataclass(frozen=True)
class L1Weights:
    """Coefficients :math:`b_0, \\dots, b_n` of the L1 scheme.

    The arrays are read-only so that a single instance can be shared between
    runs with the same order.
    """

    #: Fractional order the weights were built for.
    alpha: float
    #: :math:`b_j` for ``j = 0..n``.
    b: np.ndarray = field(repr=False)
    #: Successive differences :math:`b_{j-1} - b_j` for ``j = 1..n``, stored
    #: at index ``j - 1``.
    db: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.b.size - 1

    def __len__(self) -> int:
        return self.b.size


@lru_cache(maxsize=32)
def _l1_weights_cached(alpha: float, n: int) -> L1Weights:
    j = np.arange(n + 1, dtype=np.float64)
    if alpha == 1.0:
        b = np.zeros(n + 1)
        b[0] = 1.0
    else:
        p = 1.0 - alpha
        # naive form on purpose; cancellation only bites for j far beyond 1e5
        b = (j + 1.0) ** p - j**p
        b[0] = 1.0

    db = b[:-1] - b[1:]
    b.setflags(write=False)
    db.setflags(write=False)
    return L1Weights(alpha=alpha, b=b, db=db)


def l1_weights(alpha: float | FractionalOrder, n: int) -> L1Weights:
    """Return the L1 coefficients :math:`b_0, \\dots, b_n`.

    Results are cached on ``(alpha, n)``, so repeated calls are free.
    """
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")

    return _l1_weights_cached(_as_alpha(alpha), int(n))


def l1_scale(alpha: float | FractionalOrder, dt: float) -> float:
    """Prefactor :math:`(\\Delta t)^{-\\alpha} / \\Gamma(2 - \\alpha)`."""
    a = _as_alpha(alpha)
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")

    return dt ** (-a) / gamma(2.0 - a)


def _check_history(history: Sequence[float] | np.ndarray) -> np.ndarray:
    f = np.asarray(history, dtype=np.float64)
    if f.ndim != 1:
        raise ValueError("history must be one-dimensional")
    if f.size < 2:
        raise ValueError(f"history needs at least 2 entries, got {f.size}")

    return f


def caputo_l1(
    history: Sequence[float] | np.ndarray,
    alpha: float | FractionalOrder,
    dt: float,
) -> float:
    r"""L1 approximation of the Caputo derivative at the last entry.

    Uses the difference form

    .. math::

        \delta^\alpha f_n = \frac{(\Delta t)^{-\alpha}}{\Gamma(2 - \alpha)}
            \sum_{j = 0}^{n - 1} b_j (f_{n - j} - f_{n - j - 1}).

    :arg history: samples :math:`f(t_0), \dots, f(t_n)` on a uniform grid.
    """
    f = _check_history(history)
    n = f.size - 1
    w = l1_weights(alpha, n)

    # diffs[j] = f_{n-j} - f_{n-j-1}
    diffs = (f[1:] - f[:-1])[::-1]
    return float(l1_scale(alpha, dt) * np.dot(w.b[:n], diffs))


def caputo_l1_direct(
    history: Sequence[float] | np.ndarray,
    alpha: float | FractionalOrder,
    dt: float,
) -> float:
    """Same quantity as :func:`caputo_l1`, evaluated from the expanded sum
    :math:`f_n - b_{n-1} f_0 - \\sum_{j=1}^{n-1} (b_{j-1} - b_j) f_{n-j}`.

    Kept as an independent cross-check for the difference form.
    """
    f = _check_history(history)
    n = f.size - 1
    w = l1_weights(alpha, n)

    acc = f[n] - w.b[n - 1] * f[0]
    for j in range(1, n):
        acc -= (w.b[j - 1] - w.b[j]) * f[n - j]

    return float(l1_scale(alpha, dt) * acc)


def l1_series(
    series: Sequence[float] | np.ndarray,
    alpha: float | FractionalOrder,
    dt: float,
) -> np.ndarray:
    """Evaluate the L1 operator at every index ``n = 1..N`` of a series.

    Returns an array of length ``N`` whose entry ``n - 1`` equals
    ``caputo_l1(series[:n + 1], alpha, dt)``. Two-dimensional input of shape
    ``(N + 1, m)`` is treated as ``m`` independent columns. The memory sums
    are direct (non-FFT) convolutions.
    """
    f = np.asarray(series, dtype=np.float64)
    if f.ndim == 2:
        out = np.empty((f.shape[0] - 1, f.shape[1]))
        for i in range(f.shape[1]):
            out[:, i] = l1_series(f[:, i], alpha, dt)
        return out

    f = _check_history(f)
    n = f.size - 1
    w = l1_weights(alpha, n)

    # mem[m - 1] = sum_{j=1}^{m-1} db[j-1] f[m-j] for m = 1..n
    mem = np.zeros(n)
    if n > 1:
        mem[1:] = np.convolve(w.db[: n - 1], f[1:n])[: n - 1]

    return l1_scale(alpha, dt) * (f[1:] - w.b[:n] * f[0] - mem)
