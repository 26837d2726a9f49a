"""Convex optimal control with affine dynamics, discretized by explicit Euler.

Problem::

    J(u) = int_0^T f0(t, x, u) dt + Phi(x(T)) -> min,
    dx/dt = A(t) x + B(t) u + c(t),  x(0) = x0.

The control is piecewise constant on the Euler lattice and lives in an
:class:`HVector` of length ``steps * control_dim`` (time-major) with
weight ``tau``, so that inner products approximate the L2 product on
``[0, T]``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Tuple

import numpy as np

from .hilbert import HVector, inner, norm
from .oracle import Oracle, OracleSpec

__all__ = [
    "ControlProblem",
    "ControlGrid",
    "BlowUpError",
    "simulate_forward",
    "simulate_adjoint",
    "control_oracle",
    "discrete_objective",
    "Benchmark",
    "lq_benchmark",
    "growth_benchmark",
    "write_control_csv",
    "read_control_csv",
]

logger = logging.getLogger(__name__)

Dynamics = Callable[[float], Tuple[np.ndarray, np.ndarray, np.ndarray]]
RunningCost = Callable[[float, np.ndarray, np.ndarray], Tuple[float, np.ndarray, np.ndarray]]
TerminalCost = Callable[[np.ndarray], Tuple[float, np.ndarray]]


class BlowUpError(ArithmeticError):
    """The state or adjoint trajectory became non-finite."""


@dataclass(frozen=True)
class ControlProblem:
    """Affine-dynamics control problem.

    Attributes
    ----------
    T : float
        Horizon.
    state_dim, control_dim : int
    dynamics : callable
        ``t -> (A, B, c)`` with shapes ``(n, n)``, ``(n, m)``, ``(n,)``.
    running_cost : callable
        ``(t, x, u) -> (f0, df0/dx, df0/du)``; convex in ``(x, u)``.
    terminal_cost : callable
        ``x -> (Phi, dPhi/dx)``; convex.
    x0 : array_like
        Initial state.
    """

    T: float
    state_dim: int
    control_dim: int
    dynamics: Dynamics
    running_cost: RunningCost
    terminal_cost: TerminalCost
    x0: Tuple[float, ...]

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.state_dim < 1 or self.control_dim < 1:
            raise ValueError("state_dim and control_dim must be >= 1")
        x0 = tuple(float(v) for v in np.atleast_1d(self.x0))
        if len(x0) != self.state_dim:
            raise ValueError(f"x0 has length {len(x0)}, state_dim is {self.state_dim}")
        object.__setattr__(self, "x0", x0)


@dataclass(frozen=True)
class ControlGrid:
    """Uniform Euler lattice ``t_k = k tau``, ``k = 0..steps``."""

    T: float
    steps: int

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not self.T > 0:
            raise ValueError("T must be positive")

    @property
    def tau(self) -> float:
        return self.T / self.steps

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.tau

    @classmethod
    def for_problem(cls, problem: ControlProblem, steps: int) -> "ControlGrid":
        return cls(problem.T, steps)


def _coefficients(problem: ControlProblem, grid: ControlGrid):
    n, m = problem.state_dim, problem.control_dim
    As = np.empty((grid.steps + 1, n, n))
    Bs = np.empty((grid.steps + 1, n, m))
    cs = np.empty((grid.steps + 1, n))
    for k, t in enumerate(grid.t):
        A, B, c = problem.dynamics(float(t))
        As[k] = np.asarray(A, dtype=float).reshape(n, n)
        Bs[k] = np.asarray(B, dtype=float).reshape(n, m)
        cs[k] = np.asarray(c, dtype=float).reshape(n)
    return As, Bs, cs


def _controls(problem: ControlProblem, u, grid: ControlGrid) -> np.ndarray:
    arr = u.values if isinstance(u, HVector) else np.asarray(u, dtype=float)
    m = problem.control_dim
    if arr.size != grid.steps * m:
        raise ValueError(f"control has {arr.size} entries, expected steps*control_dim = {grid.steps * m}")
    return arr.reshape(grid.steps, m)


def _forward(problem, U, grid, coeffs) -> np.ndarray:
    As, Bs, cs = coeffs
    tau = grid.tau
    X = np.empty((grid.steps + 1, problem.state_dim))
    X[0] = problem.x0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(grid.steps):
            X[k + 1] = X[k] + tau * (As[k] @ X[k] + Bs[k] @ U[k] + cs[k])
            if not np.all(np.isfinite(X[k + 1])):
                raise BlowUpError(
                    f"state became non-finite at step {k + 1} (t = {(k + 1) * tau:g}); "
                    "reduce the step or the control magnitude"
                )
    return X


def simulate_forward(problem: ControlProblem, u, grid: ControlGrid) -> np.ndarray:
    """Explicit Euler states ``x(t_0), ..., x(t_steps)``, shape ``(steps + 1, n)``."""
    return _forward(problem, _controls(problem, u, grid), grid, _coefficients(problem, grid))


def _backward(problem, U, X, grid, coeffs, fidelity):
    As, Bs, _ = coeffs
    tau = grid.tau
    N = grid.steps
    P = np.empty_like(X)
    P[N] = problem.terminal_cost(X[N])[1]
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(N - 1, -1, -1):
            # H_x at (t_k, x_k, u_k, p_{k+1}) is the exact transpose of the Euler step;
            # the "shifted" pairing evaluates it at t_{k+1} with the control held at the end
            j = k if fidelity == "discrete" else min(k + 1, N - 1)
            i = k if fidelity == "discrete" else k + 1
            _, fx, _ = problem.running_cost(float(grid.t[i]), X[i], U[j])
            P[k] = P[k + 1] + tau * (fx + As[i].T @ P[k + 1])
            if not np.all(np.isfinite(P[k])):
                raise BlowUpError(f"adjoint became non-finite at step {k} (t = {k * tau:g})")
    return P


def simulate_adjoint(
    problem: ControlProblem, u, x: np.ndarray, grid: ControlGrid, fidelity: str = "discrete"
) -> np.ndarray:
    """Backward sweep for the costate on the same lattice, shape ``(steps + 1, n)``.

    ``fidelity='discrete'`` produces the exact adjoint of the Euler scheme:
    ``p_k = p_{k+1} + tau H_x(t_k, x_k, u_k, p_{k+1})`` with
    ``H = f0 + <p, A x + B u + c>``. ``fidelity='shifted'`` evaluates
    ``H_x`` at ``(t_{k+1}, x_{k+1}, u_{k+1}, p_{k+1})`` instead; the two
    differ by ``O(tau)`` when ``H_x`` depends on time or state.
    """
    if fidelity not in ("discrete", "shifted"):
        raise ValueError("fidelity must be 'discrete' or 'shifted'")
    U = _controls(problem, u, grid)
    if x.shape != (grid.steps + 1, problem.state_dim):
        raise ValueError(f"trajectory has shape {x.shape}, expected {(grid.steps + 1, problem.state_dim)}")
    return _backward(problem, U, x, grid, _coefficients(problem, grid), fidelity)


def _objective(problem, U, X, grid) -> float:
    tau = grid.tau
    total = 0.0
    for k in range(grid.steps):
        total += problem.running_cost(float(grid.t[k]), X[k], U[k])[0]
    return tau * total + problem.terminal_cost(X[-1])[0]


def discrete_objective(problem: ControlProblem, u, grid: ControlGrid) -> float:
    """``tau sum f0(t_k, x_k, u_k) + Phi(x_steps)`` along the Euler trajectory."""
    U = _controls(problem, u, grid)
    return _objective(problem, U, simulate_forward(problem, U, grid), grid)


def _gradient(problem, U, X, P, grid, coeffs, fidelity) -> np.ndarray:
    _, Bs, _ = coeffs
    G = np.empty_like(U)
    for k in range(grid.steps):
        # discrete: H_u(t_k, x_k, u_k, p_{k+1}); shifted: pairs with p_k
        p = P[k + 1] if fidelity == "discrete" else P[k]
        G[k] = problem.running_cost(float(grid.t[k]), X[k], U[k])[2] + Bs[k].T @ p
    return G


def control_oracle(
    problem: ControlProblem,
    grid: ControlGrid,
    *,
    L_hint: Optional[float] = None,
    mu_hint: Optional[float] = None,
    J_star_known: Optional[float] = None,
    fidelity: str = "discrete",
) -> Oracle:
    """First-order oracle of the discrete objective over the control.

    The gradient is ``H_u`` along the Euler trajectory and its costate.
    With ``fidelity='discrete'`` it is the exact gradient of the discrete
    objective in the ``tau``-weighted product; ``'shifted'`` uses the shifted
    costate pairing and is only consistent up to ``O(tau)``.

    The model error of the Euler objective against the continuum is
    ``O(tau)``; the oracle itself is exact for the discrete objective, so
    ``spec.delta`` is 0. When `L_hint` is omitted it is estimated by a power
    iteration on gradient differences, exact for quadratic objectives.
    """
    if fidelity not in ("discrete", "shifted"):
        raise ValueError("fidelity must be 'discrete' or 'shifted'")
    coeffs = _coefficients(problem, grid)
    dim = grid.steps * problem.control_dim

    def value(u: HVector) -> float:
        U = u.values.reshape(grid.steps, problem.control_dim)
        X = _forward(problem, U, grid, coeffs)
        return float(_objective(problem, U, X, grid))

    def gradient(u: HVector) -> HVector:
        U = u.values.reshape(grid.steps, problem.control_dim)
        X = _forward(problem, U, grid, coeffs)
        P = _backward(problem, U, X, grid, coeffs, fidelity)
        return HVector._raw(_gradient(problem, U, X, P, grid, coeffs, fidelity).ravel(), grid.tau)

    if L_hint is None:
        L_hint = _curvature_estimate(gradient, dim, grid.tau)
    spec = OracleSpec(
        dimension=dim,
        L_hint=L_hint,
        mu_hint=mu_hint,
        J_star_known=J_star_known,
        weight=grid.tau,
    )
    return Oracle(value, gradient, spec)


def _curvature_estimate(gradient, dim: int, weight: float, iters: int = 500, tol: float = 1e-10) -> float:
    rng = np.random.default_rng(0)
    base = HVector.zeros(dim, weight)
    g0 = gradient(base)
    v = HVector(rng.standard_normal(dim), weight)
    v = v / norm(v)
    est = 0.0
    for _ in range(iters):
        w = gradient(base + v) - g0
        new = inner(w, v)
        nw = norm(w)
        if nw == 0.0:
            return 1.0
        v = w / nw
        converged = abs(new - est) <= tol * max(abs(new), 1.0)
        est = new
        if converged:
            break
    return est


class Benchmark(NamedTuple):
    """A control problem with its continuum solution."""

    problem: ControlProblem
    J_star: float
    u_star: Callable[[np.ndarray], np.ndarray]
    mu: float


def _quadratic_costs():
    def running(t, x, u):
        return 0.5 * float(u @ u), np.zeros_like(x), u.copy()

    def terminal(x):
        d = x - 1.0
        return 0.5 * float(d @ d), d

    return running, terminal


def lq_benchmark() -> Benchmark:
    """``int_0^1 u^2/2 dt + (x(1) - 1)^2/2``, ``dx/dt = u``, ``x(0) = 0``.

    Optimal control ``u = 1/2``, optimal value ``1/4``. Euler is exact for
    this problem at every step size.
    """
    running, terminal = _quadratic_costs()
    problem = ControlProblem(
        T=1.0,
        state_dim=1,
        control_dim=1,
        dynamics=lambda t: (np.zeros((1, 1)), np.ones((1, 1)), np.zeros(1)),
        running_cost=running,
        terminal_cost=terminal,
        x0=(0.0,),
    )
    return Benchmark(problem, 0.25, lambda t: np.full_like(np.asarray(t, dtype=float), 0.5), 1.0)


def growth_benchmark() -> Benchmark:
    """Same costs with unstable dynamics ``dx/dt = x + u``, ``x(0) = 0``.

    With ``g = (e^2 - 1)/2`` the optimum is ``u(t) = e^{1-t}/(1 + g)`` and
    ``J* = 1/(2(1 + g))``. The Euler objective deviates from ``J*`` by
    ``O(tau)``.
    """
    running, terminal = _quadratic_costs()
    g = 0.5 * (math.e**2 - 1.0)
    problem = ControlProblem(
        T=1.0,
        state_dim=1,
        control_dim=1,
        dynamics=lambda t: (np.ones((1, 1)), np.ones((1, 1)), np.zeros(1)),
        running_cost=running,
        terminal_cost=terminal,
        x0=(0.0,),
    )
    return Benchmark(
        problem,
        0.5 / (1.0 + g),
        lambda t: np.exp(1.0 - np.asarray(t, dtype=float)) / (1.0 + g),
        1.0,
    )


def write_control_csv(path, u: HVector, problem: ControlProblem, grid: ControlGrid) -> None:
    """Write one row per Euler interval: ``t,u`` (or ``t,u1,...,um``)."""
    U = _controls(problem, u, grid)
    m = problem.control_dim
    header = ["t", "u"] if m == 1 else ["t"] + [f"u{j + 1}" for j in range(m)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t, row in zip(grid.t[:-1], U):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def read_control_csv(path, T: float = 1.0) -> Tuple[HVector, ControlGrid]:
    """Read a control written by :func:`write_control_csv` on ``[0, T]``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "t" or len(rows[0]) < 2:
        raise ValueError(f"{path}: expected header starting with 't,u'")
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    grid = ControlGrid(T, len(data))
    if not np.allclose(data[:, 0], grid.t[:-1], rtol=0, atol=1e-12):
        raise ValueError(f"{path}: t column is not a uniform lattice on [0, {T:g}]")
    return HVector(data[:, 1:].ravel(), grid.tau), grid
