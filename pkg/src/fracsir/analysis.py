"""Numerical certificates along computed trajectories.

Positivity and mass bounds, the two discrete fractional inequalities used by
the stability argument, and the memory-weighted Lyapunov functionals for the
disease-free and endemic equilibria.

Lyapunov values carry mixed, implicit units; only their signs, zeros and
identities are meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from fracsir.epidemics import (
    EquilibriumPoint,
    IncidenceModel,
    ModelParams,
    disease_free_equilibrium,
    endemic_equilibrium,
    reproduction_number,
)
from fracsir.fracops import caputo_l1, l1_scale, l1_series, l1_weights
from fracsir.solver import HistoryBuffer, sup_distance

__all__ = [
    "CheckResult",
    "DecayReport",
    "EntropyInequalityReport",
    "ShiftIdentityReport",
    "LyapunovWeights",
    "MassSeries",
    "TraceRecord",
    "VerificationReport",
    "check_entropy_inequality",
    "check_shift_identity",
    "decay_report",
    "fractional_difference_of",
    "lyapunov_dfe",
    "lyapunov_dfe_series",
    "lyapunov_ee",
    "lyapunov_ee_series",
    "lyapunov_weights",
    "mass_series",
    "phi",
    "verify_history",
]

DEFAULT_SLACK = 1.0e-10


def phi(w):
    """Relative entropy kernel :math:`\\Phi(w) = w - 1 - \\ln w`.

    :raises ValueError: if any entry of *w* is not strictly positive.
    """
    arr = np.asarray(w, dtype=np.float64)
    if np.any(~(arr > 0)):
        raise ValueError("phi is only defined for w > 0")

    out = arr - 1.0 - np.log(arr)
    return float(out) if out.ndim == 0 else out


# {{{ Lyapunov functionals


@dataclass(frozen=True)
class LyapunovWeights:
    """Weights :math:`w_i = (\\Delta t)^{-\\alpha} b_{i-1} / \\Gamma(2 - \\alpha)`,
    stored so that ``w[i - 1]`` is :math:`w_i`."""

    alpha: float
    dt: float
    w: np.ndarray = field(repr=False)

    def __getitem__(self, i: int) -> float:
        if i < 1:
            raise IndexError("Lyapunov weights are indexed from 1")
        return float(self.w[i - 1])

    def __len__(self) -> int:
        return self.w.size


def lyapunov_weights(alpha: float, dt: float, n: int) -> LyapunovWeights:
    """Weights :math:`w_1, \\dots, w_n`."""
    b = l1_weights(alpha, max(n - 1, 0)).b
    w = l1_scale(alpha, dt) * b[:n]
    w.setflags(write=False)
    return LyapunovWeights(alpha, dt, w)


def _entropy_sum(x: np.ndarray, ref: float) -> np.ndarray:
    if np.any(~(x > 0)):
        raise ValueError("Lyapunov functionals need strictly positive states")
    return np.sum(x - ref - ref * np.log(x / ref), axis=-1)


def _dfe_parts(hist: HistoryBuffer, p: ModelParams, f: IncidenceModel):
    s0 = disease_free_equilibrium(p).S
    v = _entropy_sum(hist.S, s0) + hist.I.sum(axis=-1)
    tail = p.beta * s0 * f.derivative_at_zero() * hist.I.sum(axis=-1)
    return v, tail


def _ee_parts(hist: HistoryBuffer, p: ModelParams, f: IncidenceModel, e: EquilibriumPoint):
    h = _entropy_sum(hist.S, e.S) + _entropy_sum(hist.I, e.I)
    tail = p.beta * e.S * float(f(e.I)) * np.sum(phi(hist.I / e.I), axis=-1)
    return h, tail


def _memory_series(h: np.ndarray, tail: np.ndarray, w: np.ndarray, b: np.ndarray, k: int):
    """``[W^0(k), W^1, ..., W^{k+1}]`` for a memory functional
    :math:`W^m = \\sum_{i=1}^{m} w_{m+1-i} h^i + tail^m`.

    The anchor :math:`W^0(k) = (\\sum_{i=1}^{k+1} w_i b_{k+1-i}) h^0 / b_k`
    depends on the queried step. At ``alpha = 1`` with ``k >= 1`` it is
    0 / 0 and is replaced by its limit :math:`2 w_1 h^0`.
    """
    n = k + 1
    out = np.empty(n + 1)
    for m in range(1, n + 1):
        out[m] = np.dot(w[:m], h[m:0:-1]) + tail[m]

    acc = np.dot(w[:n], b[k::-1])
    out[0] = acc * h[0] / b[k] if b[k] != 0 else 2.0 * w[0] * h[0]
    return out


def lyapunov_dfe_series(
    hist: HistoryBuffer, p: ModelParams, f: IncidenceModel, k: int
) -> np.ndarray:
    """Series ``W^0(k), W^1, ..., W^{k+1}`` of the disease-free functional."""
    if not 0 <= k < len(hist) - 1:
        raise IndexError(f"need 0 <= k < {len(hist) - 1}, got {k}")

    v, tail = _dfe_parts(hist, p, f)
    w = lyapunov_weights(hist.alpha, hist.dt, k + 1).w
    return _memory_series(v, tail, w, l1_weights(hist.alpha, k).b, k)


def lyapunov_dfe(
    hist: HistoryBuffer,
    p: ModelParams,
    f: IncidenceModel,
    k: int,
    *,
    anchor: bool = False,
) -> float:
    """Disease-free Lyapunov functional

    .. math::

        W^{k+1} = \\sum_{i=1}^{k+1} w_{k+2-i} V^i
            + \\beta S_0 f'(0) \\sum_n I_n^{k+1},
        \\qquad
        V^i = \\sum_n \\left(S_n^i - S_0 - S_0 \\ln \\frac{S_n^i}{S_0}\\right)
            + \\sum_n I_n^i.

    With ``anchor=True`` the level-zero value :math:`W^0` belonging to step
    *k* is returned instead.
    """
    series = lyapunov_dfe_series(hist, p, f, k)
    return float(series[0] if anchor else series[-1])


def lyapunov_ee_series(
    hist: HistoryBuffer,
    p: ModelParams,
    f: IncidenceModel,
    estar: EquilibriumPoint,
    k: int,
) -> np.ndarray:
    """Series ``W^0(k), W^1, ..., W^{k+1}`` of the endemic functional."""
    if not 0 <= k < len(hist) - 1:
        raise IndexError(f"need 0 <= k < {len(hist) - 1}, got {k}")

    h, tail = _ee_parts(hist, p, f, estar)
    w = lyapunov_weights(hist.alpha, hist.dt, k + 1).w
    return _memory_series(h, tail, w, l1_weights(hist.alpha, k).b, k)


def lyapunov_ee(
    hist: HistoryBuffer,
    p: ModelParams,
    f: IncidenceModel,
    estar: EquilibriumPoint,
    k: int,
    *,
    anchor: bool = False,
) -> float:
    """Endemic Lyapunov functional

    .. math::

        W^{k+1} = \\sum_{i=1}^{k+1} w_{k+2-i} (H_1^i + H_2^i)
            + \\beta S^* f(I^*) \\sum_n \\Phi(I_n^{k+1} / I^*),

    where :math:`H_1, H_2` are the relative entropy sums of ``S`` and ``I``
    around the endemic state.
    """
    series = lyapunov_ee_series(hist, p, f, estar, k)
    return float(series[0] if anchor else series[-1])


def fractional_difference_of(
    series: Sequence[float] | np.ndarray, alpha: float, dt: float, k: int
) -> float:
    """L1 difference of ``series[0..k+1]`` at its last entry."""
    s = np.asarray(series, dtype=np.float64)
    if k + 2 > s.size:
        raise IndexError(f"series of length {s.size} has no level {k + 1}")
    return caputo_l1(s[: k + 2], alpha, dt)


# }}}

# {{{ discrete inequalities


@dataclass(frozen=True)
class EntropyInequalityReport:
    ok: bool
    #: first index ``n >= 1`` where the inequality fails, if any
    first_violation: int | None
    #: largest value of ``lhs - rhs`` over all indices
    max_excess: float
    checked: int


def check_entropy_inequality(
    series: Sequence[float] | np.ndarray,
    alpha: float,
    dt: float,
    slack: float = DEFAULT_SLACK,
) -> EntropyInequalityReport:
    """Check :math:`\\delta^\\alpha \\Phi(x_n) \\le (1 - 1/x_n) \\delta^\\alpha x_n`
    at every index ``n >= 1`` of a positive series.

    Two-dimensional input is checked column by column; ``first_violation``
    is then the first time index that fails in any column.
    """
    x = np.asarray(series, dtype=np.float64)
    if np.any(~(x > 0)):
        raise ValueError("check_entropy_inequality needs a strictly positive series")

    lhs = l1_series(x - 1.0 - np.log(x), alpha, dt)
    rhs = (1.0 - 1.0 / x[1:]) * l1_series(x, alpha, dt)
    excess = lhs - rhs
    if excess.ndim == 2:
        excess = excess.max(axis=1)

    (bad,) = np.nonzero(excess > slack)
    return EntropyInequalityReport(
        ok=bad.size == 0,
        first_violation=int(bad[0]) + 1 if bad.size else None,
        max_excess=float(excess.max()) if excess.size else 0.0,
        checked=int(excess.size),
    )


@dataclass(frozen=True)
class ShiftIdentityReport:
    ok: bool
    max_rel_error: float
    worst_k: int


def check_shift_identity(
    h: Sequence[float] | np.ndarray,
    weights: Sequence[float] | np.ndarray,
    alpha: float,
    dt: float,
    *,
    rtol: float = DEFAULT_SLACK,
) -> ShiftIdentityReport:
    """Check the weight-shift identity for memory sums.

    For every ``k`` with ``k + 1 < len(h)`` and ``k + 1 <= len(weights)``
    the sequence :math:`u^{m} = \\sum_{i=1}^{m} w_{m+1-i} h^i` with anchor
    :math:`u^0 = (\\sum_{i=1}^{k+1} w_i b_{k+1-i}) h^0 / b_k` must satisfy

    .. math::

        \\delta^\\alpha u^{k+1} = \\sum_{i=1}^{k+1} w_{k+2-i} \\delta^\\alpha h^i.

    Both sides are evaluated independently. The error is measured relative to
    the larger of the two sides and the natural size
    :math:`c \\sum_i w_i \\max |h|` of the terms, so that identically zero
    sides do not divide by zero.
    """
    h = np.asarray(h, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    kmax = min(h.size - 1, w.size)
    if kmax < 1:
        raise ValueError("need at least two samples of h and one weight")
    b = l1_weights(alpha, kmax).b

    c = l1_scale(alpha, dt)
    dh = [0.0] + [caputo_l1(h[: i + 1], alpha, dt) for i in range(1, kmax + 1)]

    worst, worst_k = 0.0, 0
    for k in range(kmax):
        n = k + 1
        u = np.empty(n + 1)
        if b[k] == 0.0:
            # alpha = 1: the anchor only enters multiplied by b_k = 0
            u[0] = 0.0
        else:
            u[0] = sum(w[i - 1] * b[n - i] for i in range(1, n + 1)) * h[0] / b[k]
        for m in range(1, n + 1):
            u[m] = sum(w[m - i] * h[i] for i in range(1, m + 1))

        lhs = caputo_l1(u, alpha, dt)
        rhs = sum(w[n - i] * dh[i] for i in range(1, n + 1))

        scale = max(abs(lhs), abs(rhs), c * w[:n].sum() * np.abs(h[: n + 1]).max())
        err = abs(lhs - rhs) / scale if scale > 0 else 0.0
        if err > worst:
            worst, worst_k = err, k

    return ShiftIdentityReport(ok=worst <= rtol, max_rel_error=worst, worst_k=worst_k)


# }}}

# {{{ mass


@dataclass(frozen=True)
class MassSeries:
    """Total population :math:`G^k = \\sum_n (S_n^k + I_n^k + R_n^k)` and the
    eventual bound :math:`(g\\lambda + G^0)(1 + g\\tilde\\mu) / (g\\tilde\\mu)^2`."""

    G: np.ndarray
    bound: float


def mass_series(hist: HistoryBuffer) -> MassSeries:
    G = hist.data.sum(axis=(1, 2))
    gm = hist.g * hist.params.mu_tilde
    bound = (hist.g * hist.params.lam + G[0]) * (1.0 + gm) / gm**2
    return MassSeries(G, float(bound))


# }}}

# {{{ decay reports


@dataclass(frozen=True)
class TraceRecord:
    """Diagnostics at time level ``k``; unavailable entries are NaN."""

    k: int
    G: float
    W_dfe: float
    W_ee: float
    dW_dfe: float
    dW_ee: float
    dist_E0: float
    dist_Estar: float


@dataclass(frozen=True)
class DecayReport:
    which: str
    records: list[TraceRecord]
    #: levels with a positive fractional difference above the slack
    flagged: list[int]
    #: levels ``m >= 2`` where ``W^m > W^{m-1} + slack``
    increases: list[int]
    slack: float

    @property
    def ok(self) -> bool:
        return not self.flagged

    @property
    def W(self) -> np.ndarray:
        attr = "W_dfe" if self.which == "dfe" else "W_ee"
        return np.array([getattr(r, attr) for r in self.records])

    @property
    def dW(self) -> np.ndarray:
        attr = "dW_dfe" if self.which == "dfe" else "dW_ee"
        return np.array([getattr(r, attr) for r in self.records])


def _memory_functional_all(h, tail, alpha, dt):
    """``W^m`` for ``m = 1..K`` and :math:`\\delta^\\alpha W^m` with the
    step-dependent anchor, all at once via direct convolutions."""
    K = h.size - 1
    c = l1_scale(alpha, dt)
    lw = l1_weights(alpha, K)
    b, db = lw.b, lw.db
    w = c * b[:K]

    W = np.convolve(w, h[1:])[:K] + tail[1:]

    # b_k W^0(k) = (sum_{i=1}^{k+1} w_i b_{k+1-i}) h^0, k = 0..K-1
    anchor = np.convolve(w, b[:K])[:K] * h[0]

    mem = np.zeros(K)
    if K > 1:
        mem[1:] = np.convolve(db[: K - 1], W[: K - 1])[: K - 1]

    dW = c * (W - anchor - mem)
    return W, dW


def decay_report(
    hist: HistoryBuffer,
    p: ModelParams,
    f: IncidenceModel,
    which: Literal["dfe", "ee"] = "dfe",
    estar: EquilibriumPoint | None = None,
    *,
    slack: float = DEFAULT_SLACK,
) -> DecayReport:
    """Lyapunov values and their L1 differences at every level ``1..K``.

    Levels where :math:`\\delta^\\alpha W` exceeds *slack* are flagged.
    """
    if len(hist) < 2:
        raise ValueError("need at least one step of history")

    e0 = disease_free_equilibrium(p)
    d0 = sup_distance(hist, e0)

    if estar is None and reproduction_number(p, f) > 1.0:
        estar = endemic_equilibrium(p, f)
    dstar = sup_distance(hist, estar) if estar is not None else np.full(len(hist), np.nan)

    if which == "dfe":
        h, tail = _dfe_parts(hist, p, f)
    elif which == "ee":
        if estar is None:
            raise ValueError("endemic report needs R0 > 1 or an explicit estar")
        h, tail = _ee_parts(hist, p, f, estar)
    else:
        raise ValueError(f"unknown functional {which!r}")

    W, dW = _memory_functional_all(h, tail, hist.alpha, hist.dt)
    G = mass_series(hist).G
    nan = np.full(W.size, np.nan)
    Wd, We = (W, nan) if which == "dfe" else (nan, W)
    dWd, dWe = (dW, nan) if which == "dfe" else (nan, dW)

    records = [
        TraceRecord(
            k=m,
            G=float(G[m]),
            W_dfe=float(Wd[m - 1]),
            W_ee=float(We[m - 1]),
            dW_dfe=float(dWd[m - 1]),
            dW_ee=float(dWe[m - 1]),
            dist_E0=float(d0[m]),
            dist_Estar=float(dstar[m]),
        )
        for m in range(1, len(hist))
    ]

    flagged = [int(m) + 1 for m in np.nonzero(dW > slack)[0]]
    increases = [int(m) + 2 for m in np.nonzero(np.diff(W) > slack)[0]]
    return DecayReport(which, records, flagged, increases, slack)


# }}}

# {{{ full verification


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    #: first offending time level, if any
    step: int | None = None
    detail: str = ""


@dataclass(frozen=True)
class VerificationReport:
    checks: list[CheckResult]
    decay: DecayReport | None
    mass: MassSeries

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]


def verify_history(
    hist: HistoryBuffer,
    p: ModelParams,
    f: IncidenceModel,
    *,
    slack: float = DEFAULT_SLACK,
    transient: int | None = None,
) -> VerificationReport:
    """Run every trajectory check on a finished history.

    * ``positivity``: no negative entry at any level;
    * ``mass_bound``: :math:`G^k \\le 1.01 \\cdot` bound after the first
      ``max(50, K // 10)`` levels (or *transient*);
    * ``lyapunov_decay``: :math:`\\delta^\\alpha W \\le` *slack* for the
      functional matching the sign of :math:`R_0 - 1`;
    * ``entropy_inequality``: the inequality on every node series of ``S`` and ``I``.
    """
    K = len(hist) - 1
    checks = []

    data = hist.data
    neg = np.nonzero((data < 0).any(axis=(1, 2)))[0]
    checks.append(
        CheckResult(
            "positivity",
            neg.size == 0,
            int(neg[0]) if neg.size else None,
            f"min entry {data.min():.6g}",
        )
    )

    mass = mass_series(hist)
    skip = max(50, K // 10) if transient is None else transient
    over = np.nonzero(mass.G[skip + 1 :] > 1.01 * mass.bound)[0]
    checks.append(
        CheckResult(
            "mass_bound",
            over.size == 0,
            int(over[0]) + skip + 1 if over.size else None,
            f"max G after transient {mass.G[skip + 1:].max(initial=-math.inf):.6g}, "
            f"bound {mass.bound:.6g}",
        )
    )

    decay = None
    if K >= 1 and neg.size == 0:
        which = "ee" if reproduction_number(p, f) > 1.0 else "dfe"
        try:
            decay = decay_report(hist, p, f, which, slack=slack)
        except ValueError as exc:
            checks.append(CheckResult("lyapunov_decay", False, None, str(exc)))
        else:
            checks.append(
                CheckResult(
                    "lyapunov_decay",
                    decay.ok,
                    decay.flagged[0] if decay.flagged else None,
                    f"{which}: max dW {np.nanmax(decay.dW):.6g}",
                )
            )

        positive = hist.S.min() > 0 and hist.I.min() > 0
        if positive:
            first = None
            worst = -math.inf
            for series in (hist.S, hist.I):
                rep = check_entropy_inequality(series, hist.alpha, hist.dt, slack)
                worst = max(worst, rep.max_excess)
                if not rep.ok and (first is None or rep.first_violation < first):
                    first = rep.first_violation
            checks.append(
                CheckResult("entropy_inequality", first is None, first, f"max excess {worst:.3g}")
            )
        else:
            checks.append(
                CheckResult("entropy_inequality", True, None, "skipped: node series not strictly positive")
            )

    return VerificationReport(checks, decay, mass)


# }}}
