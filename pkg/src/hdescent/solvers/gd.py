"""Non-accelerated gradient descent: plain, averaged, adaptive and exact line search."""

from __future__ import annotations

from typing import Callable, Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from ..hilbert import HVector, inner
from ..oracle import Oracle
from .base import NonFiniteError, Run, RunLog, SolverState, Status, StopRule
from .stm import L_FLOOR, MAX_DOUBLINGS, _check_start

__all__ = ["gd", "GD_VARIANTS"]

GD_VARIANTS = ("plain", "averaged", "line_search")
LINE_SEARCH_TOL = 1e-8


def _exact_step(run: Run, q: HVector, g: HVector, Jq: float, s0: float) -> Tuple[float, float]:
    """Minimize ``J(q - a g)`` over ``a >= 0``; returns ``(a, J(q - a g))``."""

    def phi(a: float) -> float:
        return run.value(q - a * g)

    if inner(g, g) == 0.0:
        return 0.0, Jq
    a, fa = 0.0, Jq
    b, fb = s0, phi(s0)
    while fb >= fa:
        b *= 0.5
        if b < 1e-300:
            return 0.0, Jq
        fb = phi(b)
    c, fc = 2.0 * b, phi(2.0 * b)
    while fc < fb:
        a, fa, b, fb = b, fb, c, fc
        c = 2.0 * c
        fc = phi(c)
    res = minimize_scalar(
        phi, bracket=(a, b, c), method="golden", options={"xtol": LINE_SEARCH_TOL}
    )
    # golden section can return a bracket point slightly worse than b
    if res.fun <= fb:
        return float(res.x), float(res.fun)
    return b, fb


def gd(
    oracle: Oracle,
    y0: HVector,
    L: Optional[float] = None,
    variant: str = "plain",
    stop: Optional[StopRule] = None,
    *,
    L0: float = 1.0,
    callback: Optional[Callable[[SolverState], None]] = None,
    timed: bool = False,
    log: Optional[RunLog] = None,
) -> Tuple[HVector, RunLog]:
    """Gradient descent ``y <- y - grad J(y) / L``.

    Parameters
    ----------
    L : float or None
        Fixed Lipschitz constant. ``None`` selects the adaptive rule: start
        at `L0`, then halve the accepted value before every step and double
        it until the quadratic upper model holds (``2 delta`` slack for
        inexact oracles).
    variant : {'plain', 'averaged', 'line_search'}
        ``plain`` returns the last iterate. ``averaged`` returns the running
        mean ``q^{k+1} = k/(k+1) q^k + y^{k+1}/(k+1)``. ``line_search``
        replaces ``1/L`` by the exact minimizer along the antigradient
        (bracketing followed by golden section).

    Notes
    -----
    In the state passed to the stop rule, `y` is the point whose gradient
    is queried at that iteration and ``alpha_k = 1/L_k`` its step size, so
    that ``sum(alpha_k q(y^k)) / A_k`` is the primal average used by dual
    solvers.
    """
    if variant not in GD_VARIANTS:
        raise ValueError(f"unknown gd variant {variant!r}; expected one of {GD_VARIANTS}")
    if L is not None and not L > 0:
        raise ValueError("L must be positive")
    if stop is None:
        raise ValueError("stop rule required")
    _check_start(oracle, y0)
    run = Run(oracle, stop, timed=timed, log=log, callback=callback)
    slack = 2.0 * oracle.spec.delta
    averaged = variant == "averaged"
    adaptive = L is None and variant != "line_search"
    state = None
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            y = y0
            g = run.gradient(y)
            Jy = run.value(y)
            L_cur = L if L is not None else L0
            step = 1.0 / L_cur
            q = y
            state = SolverState(y=y, u=y, q=q, A_k=step, alpha_k=step, L_current=L_cur)
            if run.check(state, Jy, g):
                return q, run.finish(state)
            while not run.exhausted(state):
                k = state.k
                trials = 0
                if variant == "line_search":
                    step, Jy_next = _exact_step(run, y, g, Jy, step if step > 0 else 1.0)
                    y_next = y - step * g
                    L_cur = 1.0 / step if step > 0 else float("inf")
                elif adaptive:
                    L_cur = L0 if k == 0 else max(L_cur / 2.0, L_FLOOR)
                    for trials in range(MAX_DOUBLINGS + 1):
                        y_next = y - (1.0 / L_cur) * g
                        Jy_next = run.value(y_next)
                        d = y_next - y
                        if Jy_next <= Jy + inner(g, d) + 0.5 * L_cur * inner(d, d) + slack:
                            break
                        L_cur *= 2.0
                    else:
                        return q, run.fail(
                            state,
                            Status.LINE_SEARCH_FAILED,
                            f"more than {MAX_DOUBLINGS} doublings at iteration {k + 1}",
                        )
                    step = 1.0 / L_cur
                else:
                    y_next = y - step * g
                    Jy_next = run.value(y_next)
                y_prev, y, Jy = y, y_next, Jy_next
                g = run.gradient(y)
                if averaged:
                    q = y if k == 0 else (k / (k + 1)) * q + (1.0 / (k + 1)) * y
                    Jq = run.value(q)
                else:
                    q, Jq = y, Jy
                state = SolverState(
                    y=y,
                    u=y_prev,
                    q=q,
                    A_k=state.A_k + step,
                    alpha_k=step,
                    L_current=L_cur,
                    k=k + 1,
                    line_search_evals=trials,
                )
                if run.check(state, Jq, g):
                    break
        except NonFiniteError as exc:
            return (state.q if state else y0), run.fail(state, Status.FAILED, str(exc))
    return state.q, run.finish(state)
