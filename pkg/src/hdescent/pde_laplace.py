"""Cauchy problem for the Laplace equation on the unit square.

Forward problem (P)::

    u_xx + u_yy = 0,  u_x(0, y) = 0,  u(1, y) = q(y),  u(x, 0) = u(x, 1) = 0,

with ``A q = u(0, .)``. Adjoint problem (D)::

    psi_xx + psi_yy = 0,  psi_x(0, y) = lam(y),  psi(1, y) = 0,  psi(x, 0) = psi(x, 1) = 0,

with ``A* lam = psi_x(1, .)``.

Both are discretized with the 5-point Laplacian on a uniform ``(n+2) x (n+2)``
node grid. The Neumann edge uses a ghost column, ``psi_x(1, .)`` the
backward difference ``(psi_{n+1} - psi_n) / h``; with that pairing the
discrete (D) map is exactly the transpose of the discrete (P) map. The
y-direction is diagonalized by the type-I discrete sine transform, leaving
one tridiagonal system in x per sine mode.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy.fft import dst

from .hilbert import HVector, LinOp, operator_norm_sq
from .oracle import least_squares_oracle
from .solvers import RunLog, StopRule, astm, gd, stm

__all__ = [
    "Grid",
    "boundary_data",
    "solve_P",
    "solve_D",
    "solve_P_field",
    "make_operator",
    "mode_factors",
    "inverse_solve",
    "write_boundary_csv",
    "read_boundary_csv",
]


@dataclass(frozen=True)
class Grid:
    """Uniform grid with `n` interior nodes per axis."""

    n: int

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("grid needs n >= 3 interior points")

    @property
    def h(self) -> float:
        return 1.0 / (self.n + 1)

    @property
    def y(self) -> np.ndarray:
        return np.arange(1, self.n + 1) * self.h


def boundary_data(values, grid: Grid) -> HVector:
    """Samples on the interior y-nodes as an element of H (weight h)."""
    v = HVector(values, grid.h)
    if len(v) != grid.n:
        raise ValueError(f"expected {grid.n} samples, got {len(v)}")
    return v


def _sine(v: np.ndarray) -> np.ndarray:
    # orthonormal DST-I is its own inverse
    return dst(v, type=1, norm="ortho", axis=0)


def _thomas(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve tridiagonal systems batched along the last axis.

    ``lower[i]`` multiplies ``x[i-1]`` and ``upper[i]`` multiplies ``x[i+1]``
    in row ``i``; arrays have shape ``(m, batch)`` except scalar bands.
    """
    m = diag.shape[0]
    c = np.empty_like(diag)
    d = np.empty_like(rhs)
    c[0] = upper[0] / diag[0]
    d[0] = rhs[0] / diag[0]
    for i in range(1, m):
        denom = diag[i] - lower[i] * c[i - 1]
        c[i] = upper[i] / denom if i < m - 1 else 0.0
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom
    x = np.empty_like(rhs)
    x[-1] = d[-1]
    for i in range(m - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x


def _x_systems(n: int, rhs: np.ndarray) -> np.ndarray:
    """Solve the per-mode x-direction systems for columns ``i = 0..n``.

    Row 0 carries the ghost-column reflection, row ``n`` the Dirichlet
    value at ``x = 1`` (already moved into `rhs`). Returns an array of
    shape ``(n + 1, n)``: x-index by sine mode.
    """
    h = 1.0 / (n + 1)
    k = np.arange(1, n + 1)
    shift = 4.0 * np.sin(0.5 * k * math.pi * h) ** 2  # h^2 times y-eigenvalue
    m = n + 1
    diag = np.broadcast_to(-(2.0 + shift), (m, n)).copy()
    lower = np.ones((m, n))
    upper = np.ones((m, n))
    upper[0] = 2.0
    lower[0] = 0.0
    upper[-1] = 0.0
    return _thomas(lower, diag, upper, rhs)


@lru_cache(maxsize=32)
def _profiles(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Unit-data mode profiles for (P) and (D), cached per grid size."""
    m = n + 1
    h = 1.0 / (n + 1)
    rhs_p = np.zeros((m, n))
    rhs_p[-1] = -1.0  # u_{n+1} = 1 moved to the right-hand side
    prof_p = _x_systems(n, rhs_p)
    rhs_d = np.zeros((m, n))
    rhs_d[0] = 2.0 * h  # ghost column psi_{-1} = psi_1 - 2 h lam
    prof_d = _x_systems(n, rhs_d)
    prof_p.flags.writeable = False
    prof_d.flags.writeable = False
    return prof_p, prof_d


def mode_factors(grid: Grid) -> Tuple[np.ndarray, np.ndarray]:
    """Per-sine-mode gains of the discrete forward and adjoint maps."""
    prof_p, prof_d = _profiles(grid.n)
    return prof_p[0].copy(), -prof_d[-1] / grid.h


def _as_samples(v, grid: Grid) -> np.ndarray:
    arr = v.values if isinstance(v, HVector) else np.asarray(v, dtype=np.float64)
    if arr.shape != (grid.n,):
        raise ValueError(f"expected {grid.n} boundary samples, got shape {arr.shape}")
    return arr


def solve_P(q, grid: Grid) -> HVector:
    """Trace ``u(0, .)`` of the discrete forward problem with data ``u(1, .) = q``."""
    gain, _ = mode_factors(grid)
    return HVector._raw(_sine(gain * _sine(_as_samples(q, grid))), grid.h)


def solve_D(lam, grid: Grid) -> HVector:
    """``psi_x(1, .)`` of the discrete adjoint problem with flux ``psi_x(0, .) = lam``."""
    _, gain = mode_factors(grid)
    return HVector._raw(_sine(gain * _sine(_as_samples(lam, grid))), grid.h)


def solve_P_field(q, grid: Grid) -> np.ndarray:
    """Full discrete solution of (P), shape ``(n + 2, n + 2)`` indexed ``[i_x, j_y]``.

    Includes the boundary rows and columns; mostly useful to check the
    5-point residual.
    """
    prof_p, _ = _profiles(grid.n)
    coeffs = _sine(_as_samples(q, grid))
    inner_cols = _sine((prof_p * coeffs).T).T  # (n+1, n): x = 0..n, interior y
    u = np.zeros((grid.n + 2, grid.n + 2))
    u[: grid.n + 1, 1:-1] = inner_cols
    u[-1, 1:-1] = _as_samples(q, grid)
    return u


def make_operator(grid: Grid) -> LinOp:
    """The discrete continuation operator ``q -> u(0, .)`` and its adjoint."""
    _profiles(grid.n)
    return LinOp(
        dim_in=grid.n,
        dim_out=grid.n,
        forward=lambda q: solve_P(q, grid),
        adjoint=lambda lam: solve_D(lam, grid),
        weight_in=grid.h,
        weight_out=grid.h,
    )


def inverse_solve(
    f: HVector,
    grid: Grid,
    approach: str = "dual_min_norm",
    method: str = "astm",
    eps: float = 1e-8,
    *,
    eps_tilde: Optional[float] = None,
    L: Optional[float] = 1.0,
    max_iter: int = 100_000,
    stop: Optional[StopRule] = None,
) -> Tuple[HVector, RunLog]:
    """Recover the Dirichlet data ``q`` at ``x = 1`` from the trace ``f = u(0, .)``.

    Parameters
    ----------
    approach : {'primal_least_squares', 'dual_min_norm'}
        Minimize ``1/2 ||Aq - f||^2``, or minimize ``1/2 ||q||^2`` subject to
        ``Aq = f`` through its dual.
    method : str
        ``stm``, ``astm`` or a gradient variant (``gd``, ``gd_averaged``,
        ``gd_line_search``). The dual approach accepts ``stm``, ``astm`` and
        ``gd_averaged``.
    eps : float
        Primal: stop when ``J(q) <= eps``. Dual: duality-gap tolerance.
    eps_tilde : float, optional
        Dual feasibility tolerance, defaults to `eps`.
    L : float or None
        Lipschitz constant for non-adaptive methods. The default 1 is a safe
        upper bound for this operator; ``None`` uses the power-method
        estimate of ``||A||^2`` instead.
    stop : StopRule, optional
        Primal only: replaces the default ``J <= eps`` or `max_iter` rule
        (for example an early-stopping rule on noisy data).
    """
    from .dual import min_norm_dual, solve_dual

    if len(f) != grid.n:
        raise ValueError(f"f has {len(f)} samples, grid has {grid.n}")
    A = make_operator(grid)
    if L is None:
        L = operator_norm_sq(A).value
    if approach == "dual_min_norm":
        problem = min_norm_dual(A, f, L=L)
        q, lam, log = solve_dual(
            problem, method, eps, eps if eps_tilde is None else eps_tilde, max_iter
        )
        log.meta["lambda"] = lam
        return q, log
    if approach != "primal_least_squares":
        raise ValueError(f"unknown approach {approach!r}")
    oracle = least_squares_oracle(A, f, L=L, compatible=True)
    y0 = HVector.zeros(grid.n, grid.h)
    if stop is None:
        stop = StopRule.objective_below(eps) | StopRule.iterations(max_iter)
    if method == "stm":
        return stm(oracle, y0, L, stop=stop)
    if method == "astm":
        return astm(oracle, y0, stop=stop)
    variants = {"gd": "plain", "gd_averaged": "averaged", "gd_line_search": "line_search"}
    if method in variants:
        return gd(oracle, y0, L, variants[method], stop)
    raise ValueError(f"unknown method {method!r}")


def write_boundary_csv(path, v: HVector, grid: Grid) -> None:
    """Write ``y,value`` rows for the interior nodes."""
    vals = _as_samples(v, grid)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["y", "value"])
        for y, val in zip(grid.y, vals):
            w.writerow([repr(float(y)), repr(float(val))])


def read_boundary_csv(path) -> Tuple[HVector, Grid]:
    """Read ``y,value`` rows written by :func:`write_boundary_csv`."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["y", "value"]:
        raise ValueError(f"{path}: expected header 'y,value'")
    ys = np.array([float(r[0]) for r in rows[1:]])
    vals = np.array([float(r[1]) for r in rows[1:]])
    grid = Grid(len(vals))
    if not np.allclose(ys, grid.y, rtol=0, atol=1e-12):
        raise ValueError(f"{path}: y column is not the uniform interior grid")
    return boundary_data(vals, grid), grid
