"""Similar-triangles methods: fixed-step STM and its adaptive variant ASTM."""

from __future__ import annotations

import math
from typing import Callable, Optional, Tuple

import numpy as np

from ..hilbert import HVector, inner
from ..oracle import Oracle
from .base import NonFiniteError, Run, RunLog, SolverState, Status, StopRule

__all__ = ["stm", "astm", "next_alpha", "MAX_DOUBLINGS", "L_FLOOR"]

MAX_DOUBLINGS = 60
L_FLOOR = 1e-30


def next_alpha(A: float, L: float, mu: float = 0.0) -> float:
    """Positive root of ``L a^2 = (a + A)(1 + A mu)``."""
    c = 1.0 + A * mu
    return c / (2.0 * L) + math.sqrt(c * c / (4.0 * L * L) + A * c / L)


def _u_step(u: HVector, y: HVector, g: HVector, alpha: float, A: float, mu: float) -> HVector:
    if mu == 0.0:
        return u - alpha * g
    # minimizer of the estimate function with curvature 1 + A mu
    c = 1.0 + A * mu
    return (c * u + (alpha * mu) * y - alpha * g) / (c + alpha * mu)


def _check_start(oracle: Oracle, y0: HVector) -> None:
    if len(y0) != oracle.spec.dimension:
        raise ValueError(
            f"starting point has length {len(y0)}, oracle dimension is {oracle.spec.dimension}"
        )


def stm(
    oracle: Oracle,
    y0: HVector,
    L: float,
    mu: float = 0.0,
    stop: Optional[StopRule] = None,
    *,
    callback: Optional[Callable[[SolverState], None]] = None,
    timed: bool = False,
    log: Optional[RunLog] = None,
) -> Tuple[HVector, RunLog]:
    """Similar triangles method with a fixed Lipschitz constant.

    Parameters
    ----------
    oracle : Oracle
        First-order oracle of the objective.
    y0 : HVector
        Starting point.
    L : float
        Lipschitz constant of the gradient used for the step weights.
    mu : float, optional
        Strong-convexity modulus. With ``mu > 0`` the weights solve
        ``L a^2 = (a + A)(1 + A mu)`` and the ``u`` update is damped toward
        ``y`` accordingly.
    stop : StopRule
        Evaluated on ``q`` after every iteration, including the
        initialization step (``k = 0``).
    callback : callable, optional
        Called with the :class:`SolverState` once per iteration before the
        stop rule.
    timed : bool
        Fill the ``elapsed_ms`` column.
    log : RunLog, optional
        Existing log to append to (used by restart schemes).

    Returns
    -------
    q : HVector
        Last ``q`` iterate.
    log : RunLog
        Per-iteration records; ``log.state`` holds the final iterates.
    """
    if not L > 0:
        raise ValueError("L must be positive")
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    if stop is None:
        raise ValueError("stop rule required")
    _check_start(oracle, y0)
    run = Run(oracle, stop, timed=timed, log=log, callback=callback)
    state = None
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            A = alpha = 1.0 / L
            g = run.gradient(y0)
            u = y0 - (alpha / (1.0 + alpha * mu)) * g
            q = u
            state = SolverState(y=y0, u=u, q=q, A_k=A, alpha_k=alpha, L_current=L)
            if run.check(state, run.value(q), g):
                return q, run.finish(state)
            while not run.exhausted(state):
                alpha = next_alpha(A, L, mu)
                A_next = A + alpha
                y = (alpha * u + A * q) / A_next
                g = run.gradient(y)
                u = _u_step(u, y, g, alpha, A, mu)
                q = (alpha * u + A * q) / A_next
                A = A_next
                state = SolverState(
                    y=y, u=u, q=q, A_k=A, alpha_k=alpha, L_current=L, k=state.k + 1
                )
                if run.check(state, run.value(q), g):
                    break
        except NonFiniteError as exc:
            return (state.q if state else y0), run.fail(state, Status.FAILED, str(exc))
    return state.q, run.finish(state)


def _descent_ok(Jq: float, Jy: float, g: HVector, q: HVector, y: HVector, L: float, slack: float) -> bool:
    d = q - y
    return Jq <= Jy + inner(g, d) + 0.5 * L * inner(d, d) + slack


def astm(
    oracle: Oracle,
    y0: HVector,
    mu: float = 0.0,
    stop: Optional[StopRule] = None,
    *,
    L0: float = 1.0,
    callback: Optional[Callable[[SolverState], None]] = None,
    timed: bool = False,
    log: Optional[RunLog] = None,
) -> Tuple[HVector, RunLog]:
    """Adaptive similar triangles method.

    Each iteration starts from half the previously accepted ``L`` and doubles
    it until the quadratic upper model holds between ``y`` and the new
    ``q``. With an inexact oracle (``oracle.spec.delta > 0``) the model test
    gets ``2 delta`` of slack. More than 60 doublings in one iteration stop
    the run with ``line_search_failed``.
    """
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    if stop is None:
        raise ValueError("stop rule required")
    _check_start(oracle, y0)
    run = Run(oracle, stop, timed=timed, log=log, callback=callback)
    slack = 2.0 * oracle.spec.delta
    state = None
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            L = L0
            g0 = run.gradient(y0)
            Jy0 = run.value(y0)
            for j in range(MAX_DOUBLINGS + 1):
                A = alpha = 1.0 / L
                u = y0 - (alpha / (1.0 + alpha * mu)) * g0
                q = u
                Jq = run.value(q)
                if _descent_ok(Jq, Jy0, g0, q, y0, L, slack):
                    break
                L *= 2.0
            else:
                return y0, run.fail(None, Status.LINE_SEARCH_FAILED, "initial line search failed")
            state = SolverState(
                y=y0, u=u, q=q, A_k=A, alpha_k=alpha, L_current=L, line_search_evals=j
            )
            if run.check(state, Jq, g0):
                return q, run.finish(state)
            while not run.exhausted(state):
                L = max(L / 2.0, L_FLOOR)
                for j in range(MAX_DOUBLINGS + 1):
                    alpha = next_alpha(A, L, mu)
                    A_next = A + alpha
                    y = (alpha * u + A * q) / A_next
                    g = run.gradient(y)
                    Jy = run.value(y)
                    u_next = _u_step(u, y, g, alpha, A, mu)
                    q_next = (alpha * u_next + A * q) / A_next
                    Jq = run.value(q_next)
                    if _descent_ok(Jq, Jy, g, q_next, y, L, slack):
                        break
                    L *= 2.0
                else:
                    return q, run.fail(
                        state,
                        Status.LINE_SEARCH_FAILED,
                        f"more than {MAX_DOUBLINGS} doublings at iteration {state.k + 1}",
                    )
                u, q, A = u_next, q_next, A_next
                state = SolverState(
                    y=y,
                    u=u,
                    q=q,
                    A_k=A,
                    alpha_k=alpha,
                    L_current=L,
                    k=state.k + 1,
                    line_search_evals=j,
                )
                if run.check(state, Jq, g):
                    break
        except NonFiniteError as exc:
            return (state.q if state else y0), run.fail(state, Status.FAILED, str(exc))
    return state.q, run.finish(state)
