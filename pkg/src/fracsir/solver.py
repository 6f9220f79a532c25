"""Implicit L1 / nonstandard finite difference solver on a 1D grid.

Each time level is obtained from three linear tridiagonal solves, in the
order S, I, R: the incidence term is lagged at level ``k`` and the
susceptible update feeds the infected right-hand side, which in turn feeds
the recovered one. Zero-flux boundaries are imposed with mirrored ghost
nodes on both ends.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from fracsir.epidemics import IncidenceModel, ModelParams
from fracsir.fracops import L1Weights, gamma, l1_weights

logger = logging.getLogger(__name__)

__all__ = [
    "ConvergenceReport",
    "DominanceViolation",
    "FieldState",
    "GridSpec",
    "HistoryBuffer",
    "InitialCondition",
    "NonFiniteState",
    "SimulationError",
    "Tridiagonal",
    "assemble_I",
    "assemble_R",
    "assemble_S",
    "constant_initial_condition",
    "euler_step",
    "neumann_tridiagonal",
    "decaying_initial_condition",
    "simulate",
    "step",
    "sup_distance",
    "thomas_solve",
]


class SimulationError(RuntimeError):
    """Base class for numerical failures; *step* is the level being computed."""

    def __init__(self, message: str, step: int | None = None) -> None:
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


class DominanceViolation(SimulationError):
    pass


class NonFiniteState(SimulationError):
    pass


# {{{ grid and state


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on ``[a, b]`` with ``M`` subintervals and ``steps`` time
    steps of size ``dt``."""

    a: float
    b: float
    M: int
    dt: float
    steps: int

    def __post_init__(self) -> None:
        if self.M < 2:
            raise ValueError(f"M must be at least 2, got {self.M}")
        if not self.b > self.a:
            raise ValueError(f"need a < b, got [{self.a}, {self.b}]")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.steps < 1:
            raise ValueError(f"steps must be at least 1, got {self.steps}")

    @property
    def dx(self) -> float:
        return (self.b - self.a) / self.M

    @property
    def nodes(self) -> int:
        return self.M + 1

    @property
    def x(self) -> np.ndarray:
        return self.a + np.arange(self.M + 1) * self.dx


@dataclass(frozen=True)
class FieldState:
    """The three population fields at time level ``k``."""

    S: np.ndarray
    I: np.ndarray  # noqa: E741
    R: np.ndarray
    k: int = 0

    def as_array(self) -> np.ndarray:
        return np.stack([self.S, self.I, self.R])

    @classmethod
    def from_array(cls, data: np.ndarray, k: int = 0) -> FieldState:
        return cls(data[0].copy(), data[1].copy(), data[2].copy(), k)


class HistoryBuffer:
    """All time levels of a run, plus the constants of the scheme.

    Storage is preallocated for ``capacity + 1`` levels. The scheme constants
    are :math:`g = \\Gamma(2 - \\alpha) (\\Delta t)^\\alpha` and
    :math:`r_i = d_i g / (\\Delta x)^2`.
    """

    def __init__(
        self,
        p: ModelParams,
        initial: FieldState,
        alpha: float,
        dt: float,
        dx: float,
        capacity: int,
    ) -> None:
        if not 0.0 < alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
        if not (dt > 0 and dx > 0):
            raise ValueError("dt and dx must be positive")

        data0 = np.asarray(initial.as_array(), dtype=np.float64)
        self.params = p
        self.alpha = float(alpha)
        self.dt = float(dt)
        self.dx = float(dx)
        self.g = gamma(2.0 - self.alpha) * self.dt**self.alpha
        self.r = tuple(d * self.g / self.dx**2 for d in p.diffusion)
        self.weights = l1_weights(self.alpha, max(capacity, 1))

        self._data = np.empty((capacity + 1, 3, data0.shape[1]))
        self._data[0] = data0
        self._size = 1
        #: set by :func:`simulate` when a run stops early
        self.convergence: ConvergenceReport | None = None

    @classmethod
    def from_arrays(
        cls,
        p: ModelParams,
        S: np.ndarray,
        I: np.ndarray,  # noqa: E741
        R: np.ndarray,
        alpha: float,
        dt: float,
        dx: float = 1.0,
    ) -> HistoryBuffer:
        """Wrap precomputed ``(levels, nodes)`` arrays, e.g. for analysis."""
        S, I, R = (np.atleast_2d(np.asarray(v, dtype=np.float64)) for v in (S, I, R))
        hist = cls(p, FieldState(S[0], I[0], R[0]), alpha, dt, dx, S.shape[0] - 1)
        hist._data[:, 0] = S
        hist._data[:, 1] = I
        hist._data[:, 2] = R
        hist._size = S.shape[0]
        return hist

    def __len__(self) -> int:
        return self._size

    @property
    def k(self) -> int:
        """Index of the most recent level."""
        return self._size - 1

    @property
    def nodes(self) -> int:
        return self._data.shape[2]

    @property
    def capacity(self) -> int:
        return self._data.shape[0] - 1

    @property
    def data(self) -> np.ndarray:
        """View of shape ``(levels, 3, nodes)``."""
        return self._data[: self._size]

    @property
    def S(self) -> np.ndarray:
        return self._data[: self._size, 0]

    @property
    def I(self) -> np.ndarray:  # noqa: E743
        return self._data[: self._size, 1]

    @property
    def R(self) -> np.ndarray:
        return self._data[: self._size, 2]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self._size) * self.dt

    def state(self, k: int) -> FieldState:
        if not 0 <= k < self._size:
            raise IndexError(f"level {k} not in history of length {self._size}")
        return FieldState.from_array(self._data[k], k)

    def latest(self) -> FieldState:
        return self.state(self.k)

    def append(self, state: FieldState) -> None:
        if self._size > self.capacity:
            raise IndexError(f"history is full ({self.capacity + 1} levels)")
        self._data[self._size] = state.as_array()
        self._size += 1

    def memory(self, weights: L1Weights | None = None) -> np.ndarray:
        """L1 memory term for the next level, for all three fields.

        Returns :math:`b_k X^0 + \\sum_{j=1}^{k} (b_{j-1} - b_j) X^{k+1-j}`,
        shape ``(3, nodes)``, with the sum accumulated from ``j = k`` down
        to ``j = 1``.
        """
        w = self.weights if weights is None else weights
        k = self.k
        if w.n < k:
            raise ValueError(f"need weights up to index {k}, got {w.n}")

        out = w.b[k] * self._data[0]
        if k > 0:
            # rows of _data[1:k+1] are X^1..X^k, i.e. j = k..1
            out = out + np.tensordot(w.db[k - 1 :: -1], self._data[1 : k + 1], axes=1)

        return out


# }}}

# {{{ tridiagonal systems


@dataclass(frozen=True)
class Tridiagonal:
    """Tridiagonal matrix stored by diagonals.

    ``lower[0]`` and ``upper[-1]`` lie outside the matrix and are zero.
    """

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    @property
    def size(self) -> int:
        return self.diag.size

    def dominance_margin(self) -> np.ndarray:
        return np.abs(self.diag) - np.abs(self.lower) - np.abs(self.upper)

    def is_strictly_dominant(self) -> bool:
        return bool(np.all(self.dominance_margin() > 0))

    def to_dense(self) -> np.ndarray:
        n = self.size
        a = np.diag(self.diag)
        if n > 1:
            a += np.diag(self.lower[1:], -1) + np.diag(self.upper[:-1], 1)
        return a

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.diag * x
        y[1:] += self.lower[1:] * x[:-1]
        y[:-1] += self.upper[:-1] * x[1:]
        return y


def neumann_tridiagonal(r: float, reaction: np.ndarray | float, nodes: int) -> Tridiagonal:
    """Matrix of :math:`X_n - r (X_{n-1} - 2 X_n + X_{n+1}) + c_n X_n` with
    mirrored ghosts :math:`X_{-1} = X_0` and :math:`X_{M+1} = X_M`.

    Folding a ghost into its row removes one ``r`` from the diagonal.
    """
    diag = np.full(nodes, 1.0 + 2.0 * r) + reaction
    diag[0] -= r
    diag[-1] -= r

    lower = np.full(nodes, -r)
    upper = np.full(nodes, -r)
    lower[0] = 0.0
    upper[-1] = 0.0
    return Tridiagonal(lower, diag, upper)


def thomas_solve(t: Tridiagonal, rhs: np.ndarray) -> np.ndarray:
    """Solve ``t @ x = rhs`` by forward elimination and back substitution.

    No pivoting is performed, which is safe for strictly diagonally dominant
    matrices. For M-matrices (positive diagonal, nonpositive off-diagonals)
    every operation adds nonnegative quantities, so a nonnegative right-hand
    side gives a nonnegative solution in floating point as well.

    :raises DominanceViolation: if *t* is not strictly diagonally dominant.
    """
    if not t.is_strictly_dominant():
        margin = t.dominance_margin()
        row = int(np.argmin(margin))
        raise DominanceViolation(
            f"matrix is not strictly diagonally dominant (row {row}, "
            f"margin {margin[row]:.3e})"
        )

    a = t.lower.tolist()
    b = t.diag.tolist()
    c = t.upper.tolist()
    d = np.asarray(rhs, dtype=np.float64).tolist()
    n = len(b)

    cp = [0.0] * n
    dp = [0.0] * n
    cp[0] = c[0] / b[0]
    dp[0] = d[0] / b[0]
    for i in range(1, n):
        den = b[i] - a[i] * cp[i - 1]
        cp[i] = c[i] / den
        dp[i] = (d[i] - a[i] * dp[i - 1]) / den

    x = [0.0] * n
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]

    return np.array(x)


# }}}

# {{{ assembly


def assemble_S(
    p: ModelParams,
    f: IncidenceModel,
    hist: HistoryBuffer,
    I_prev: np.ndarray,
    memory: np.ndarray | None = None,
) -> tuple[Tridiagonal, np.ndarray]:
    g = hist.g
    if memory is None:
        memory = hist.memory()[0]

    mat = neumann_tridiagonal(hist.r[0], g * p.beta * f(I_prev) + g * p.gamma, hist.nodes)
    return mat, memory + g * p.lam


def assemble_I(
    p: ModelParams,
    f: IncidenceModel,
    hist: HistoryBuffer,
    S_next: np.ndarray,
    I_prev: np.ndarray,
    memory: np.ndarray | None = None,
) -> tuple[Tridiagonal, np.ndarray]:
    g = hist.g
    if memory is None:
        memory = hist.memory()[1]

    mat = neumann_tridiagonal(hist.r[1], g * (p.mu + p.r), hist.nodes)
    return mat, memory + g * p.beta * S_next * f(I_prev)


def assemble_R(
    p: ModelParams,
    hist: HistoryBuffer,
    I_next: np.ndarray,
    memory: np.ndarray | None = None,
) -> tuple[Tridiagonal, np.ndarray]:
    g = hist.g
    if memory is None:
        memory = hist.memory()[2]

    mat = neumann_tridiagonal(hist.r[2], g * p.delta, hist.nodes)
    return mat, memory + g * p.r * I_next


def _checked(x: np.ndarray, name: str, k: int) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteState(f"non-finite entries in {name}", step=k)
    return x


def step(
    p: ModelParams,
    f: IncidenceModel,
    hist: HistoryBuffer,
    weights: L1Weights | None = None,
) -> FieldState:
    """Advance *hist* by one level and return the new state."""
    k = hist.k
    mem = _checked(hist.memory(weights), "history", k + 1)
    I_prev = hist.I[k]

    try:
        mat, rhs = assemble_S(p, f, hist, I_prev, mem[0])
        S_next = _checked(thomas_solve(mat, rhs), "S", k + 1)

        mat, rhs = assemble_I(p, f, hist, S_next, I_prev, mem[1])
        I_next = _checked(thomas_solve(mat, rhs), "I", k + 1)

        mat, rhs = assemble_R(p, hist, I_next, mem[2])
        R_next = _checked(thomas_solve(mat, rhs), "R", k + 1)
    except SimulationError as exc:
        if exc.step is None:
            raise type(exc)(str(exc), step=k + 1) from exc
        raise

    state = FieldState(S_next, I_next, R_next, k + 1)
    hist.append(state)
    return state


def euler_step(
    p: ModelParams,
    f: IncidenceModel,
    prev: FieldState,
    dt: float,
    dx: float,
) -> FieldState:
    """One step of the integer-order scheme: implicit diffusion, lagged
    incidence, no memory."""
    nodes = prev.S.size
    r1, r2, r3 = (d * dt / dx**2 for d in p.diffusion)
    k = prev.k + 1

    mat = neumann_tridiagonal(r1, dt * p.beta * f(prev.I) + dt * p.gamma, nodes)
    S = _checked(thomas_solve(mat, prev.S + dt * p.lam), "S", k)

    mat = neumann_tridiagonal(r2, dt * (p.mu + p.r), nodes)
    I = _checked(thomas_solve(mat, prev.I + dt * p.beta * S * f(prev.I)), "I", k)  # noqa: E741

    mat = neumann_tridiagonal(r3, dt * p.delta, nodes)
    R = _checked(thomas_solve(mat, prev.R + dt * p.r * I), "R", k)

    return FieldState(S, I, R, k)


# }}}

# {{{ driver


InitialCondition = Callable[[np.ndarray, float], tuple[np.ndarray, np.ndarray, np.ndarray]]


def decaying_initial_condition(x: np.ndarray, dx: float) -> tuple[np.ndarray, ...]:
    """``S = 0.5``, ``I = R = exp(-n dx)`` at node ``n``."""
    n = np.arange(x.size)
    decay = np.exp(-n * dx)
    return np.full(x.size, 0.5), decay, decay.copy()


def constant_initial_condition(S: float, I: float, R: float) -> InitialCondition:  # noqa: E741
    def ic(x: np.ndarray, dx: float) -> tuple[np.ndarray, ...]:
        return np.full(x.size, S), np.full(x.size, I), np.full(x.size, R)

    return ic


@dataclass(frozen=True)
class ConvergenceReport:
    """Why a run stopped before its final step."""

    step: int
    change: float
    window: int
    tol: float


def simulate(
    p: ModelParams,
    f: IncidenceModel,
    grid: GridSpec,
    ic: InitialCondition | FieldState,
    alpha: float,
    *,
    window: int | None = 50,
    tol: float = 1.0e-10,
) -> HistoryBuffer:
    """Run the scheme for ``grid.steps`` steps and return the full history.

    The run stops early once the sup-norm change between levels ``k`` and
    ``k - window`` drops below *tol*; the reason is stored on the returned
    buffer as ``convergence``. Pass ``window=None`` to always run to the end.
    """
    if isinstance(ic, FieldState):
        initial = ic
    else:
        S0, I0, R0 = ic(grid.x, grid.dx)
        initial = FieldState(np.asarray(S0, float), np.asarray(I0, float), np.asarray(R0, float))

    if initial.S.size != grid.nodes:
        raise ValueError(f"initial state has {initial.S.size} nodes, grid has {grid.nodes}")
    if np.any(initial.S <= 0) or np.any(initial.I < 0) or np.any(initial.R < 0):
        raise ValueError("initial condition needs S > 0 and I, R >= 0")

    hist = HistoryBuffer(p, initial, alpha, grid.dt, grid.dx, grid.steps)

    for k in range(grid.steps):
        step(p, f, hist)

        if window is not None and hist.k >= window:
            data = hist.data
            change = float(np.max(np.abs(data[-1] - data[-1 - window])))
            if change < tol:
                hist.convergence = ConvergenceReport(hist.k, change, window, tol)
                logger.info("converged at step %d (change %.3e)", hist.k, change)
                break

    return hist


# }}}


def sup_distance(hist_or_data, point) -> np.ndarray:
    """Sup-norm distance of every level to a constant state ``(S, I, R)``."""
    data = hist_or_data.data if isinstance(hist_or_data, HistoryBuffer) else hist_or_data
    target = np.asarray(point.as_array() if hasattr(point, "as_array") else point)
    return np.max(np.abs(data - target[None, :, None]), axis=(1, 2))
