"""Restart schemes and outer loops wrapped around the basic methods.

* :func:`restart_half` -- relaunch whenever the objective halves (needs J* = 0).
* :func:`rstm` -- fixed-length STM segments restarted from ``(q + u) / 2``.
* :func:`l_doubling` -- rerun STM with L = 1, 2, 4, ... until results agree.
* :func:`accuracy_budget` -- pick the discretization step from the target
  accuracy and shrink its constant by 3 until the target is met.
"""

from __future__ import annotations

import logging
import math
from typing import Callable, Optional, Tuple

from ..hilbert import HVector, norm
from ..oracle import Oracle
from .base import Record, RunLog, Status, StopRule
from .gd import gd
from .stm import astm, stm

__all__ = ["restart_half", "rstm", "rstm_segment_length", "l_doubling", "accuracy_budget"]

logger = logging.getLogger(__name__)

Method = Callable[..., Tuple[HVector, RunLog]]


def _append_point(log: RunLog, q: HVector, J: float, grad_norm: float, L: float,
                  extra_f: int, extra_g: int) -> None:
    last = log.records[-1] if log.records else None
    log.records.append(
        Record(
            k=last.k + 1 if last else 0,
            J=J,
            grad_norm=grad_norm,
            A_k=0.0,
            L_used=L,
            func_evals=(last.func_evals if last else 0) + extra_f,
            grad_evals=(last.grad_evals if last else 0) + extra_g,
        )
    )


def restart_half(
    method: Method,
    oracle: Oracle,
    y0: HVector,
    eps: float,
    *,
    max_restarts: int = 200,
    inner_max_iter: int = 100_000,
) -> Tuple[HVector, RunLog]:
    """Restart `method` each time the objective falls below half its value at the last restart.

    `method` is called as ``method(oracle, y, stop=..., log=...)``; bind any
    other arguments beforehand, e.g. ``functools.partial(stm, L=4.0)``.
    Requires a known optimal value of 0.
    """
    if oracle.spec.J_star_known != 0:
        raise ValueError("restart_half requires oracle.spec.J_star_known == 0")
    if not eps > 0:
        raise ValueError("eps must be positive")
    J_ref = oracle.value(y0)
    log = RunLog()
    if J_ref <= eps:
        _append_point(log, y0, J_ref, norm(oracle.gradient(y0)), 0.0, 1, 1)
        log.status = Status.CONVERGED
        log.meta["restarts"] = 0
        return y0, log
    y = y0
    restarts = 0
    while True:
        stop = StopRule.objective_below(max(J_ref / 2.0, eps)) | StopRule.iterations(inner_max_iter)
        q, log = method(oracle, y, stop=stop, log=log)
        J = log.records[-1].J
        if log.status is not Status.CONVERGED:
            break
        if J <= eps:
            break
        if restarts >= max_restarts:
            log.status = Status.BUDGET_EXHAUSTED
            log.meta["diagnostic"] = f"restart budget {max_restarts} exhausted"
            break
        restarts += 1
        logger.debug("restart %d at J=%g", restarts, J)
        J_ref, y = J, q
    log.meta["restarts"] = restarts
    return q, log


def rstm_segment_length(L: float, mu0: float) -> int:
    """``ceil(2 sqrt(L / mu0))`` iterations per restart segment."""
    return max(1, math.ceil(2.0 * math.sqrt(L / mu0)))


def rstm(
    oracle: Oracle,
    y0: HVector,
    L: Optional[float],
    mu0: float,
    eps: float,
    *,
    mu_lower: Optional[float] = None,
    max_restarts: int = 10_000,
    max_segment_iter: int = 100_000,
) -> Tuple[HVector, RunLog]:
    """Restarted STM with restart point ``(q^N + u^N) / 2``.

    With a numeric `L`, each segment runs ``ceil(2 sqrt(L/mu0))`` STM
    iterations; with ``L=None`` each segment runs ASTM until the accumulated
    weight reaches ``4/mu0``. The run stops when

    * ``||grad J||^2 / (2 mu_lower) <= eps`` if a strong-convexity lower bound
      is available (`mu_lower`, defaulting to ``oracle.spec.mu_hint``), or
    * ``J - J* <= eps`` if the optimal value is known.
    """
    if not mu0 > 0:
        raise ValueError("mu0 must be positive")
    if not eps > 0:
        raise ValueError("eps must be positive")
    if mu_lower is None:
        mu_lower = oracle.spec.mu_hint or None
    J_star = oracle.spec.J_star_known
    if mu_lower is None and J_star is None:
        raise ValueError(
            "rstm needs a lower bound on mu (mu_lower) or a known optimal value "
            "to certify termination"
        )
    if L is None:
        segment = StopRule(min_A=4.0 / mu0, max_iter=max_segment_iter)
    else:
        segment = StopRule.iterations(rstm_segment_length(L, mu0))
    log = RunLog()
    y = y0
    for restart in range(max_restarts):
        if L is None:
            q, log = astm(oracle, y, stop=segment, log=log)
        else:
            q, log = stm(oracle, y, L, stop=segment, log=log)
        if log.status is not Status.CONVERGED:
            # non-finite values or line search failure inside the segment
            break
        st = log.state
        y = 0.5 * st.q + 0.5 * st.u
        Jy = oracle.value(y)
        g = oracle.gradient(y)
        gn = norm(g)
        _append_point(log, y, Jy, gn, st.L_current, 1, 1)
        if mu_lower is not None:
            done = gn * gn / (2.0 * mu_lower) <= eps
        else:
            done = Jy - J_star <= eps
        if done:
            log.status = Status.CONVERGED
            log.meta["restarts"] = restart
            return y, log
    else:
        log.status = Status.BUDGET_EXHAUSTED
    log.meta["restarts"] = restart
    return y, log


def l_doubling(
    oracle: Oracle,
    y0: HVector,
    stop: StopRule,
    stabilization_tol: float,
    *,
    L_start: float = 1.0,
    max_log2_L: int = 60,
) -> Tuple[HVector, RunLog]:
    """Run non-adaptive STM for ``L = L_start * 2^j`` from the same start.

    Stops at the first pair of consecutive runs whose final objective values
    differ by at most ``stabilization_tol * |J(y0)|`` and returns the later
    run's iterate. Runs that fail (non-finite values) never count as
    agreeing. The combined log holds every run; ``meta['runs']`` lists
    ``(L, final J, status)`` per run and ``meta['L_final']`` the last L.
    """
    scale = abs(oracle.value(y0))
    log = RunLog()
    prev, prev_ok = None, False
    runs = []
    L = L_start
    for j in range(max_log2_L + 1):
        L = L_start * 2.0**j
        q, log = stm(oracle, y0, L, stop=stop, log=log)
        ok = log.status is not Status.FAILED
        J = log.records[-1].J if ok else math.inf
        runs.append((L, J, log.status.value))
        if prev is not None:
            if math.isinf(stabilization_tol):
                agree = True
            else:
                agree = ok and prev_ok and abs(J - prev) <= stabilization_tol * scale
            if agree:
                log.status = Status.CONVERGED
                break
        prev, prev_ok = J, ok
        # a failed run leaves a non-converged status; the next run resets it
        log.status = Status.BUDGET_EXHAUSTED
    else:
        log.status = Status.BUDGET_EXHAUSTED
        log.meta["diagnostic"] = f"L exceeded 2^{max_log2_L}"
    log.meta["runs"] = runs
    log.meta["L_final"] = L
    return q, log


def _budget_iterations(family: str, L: float, R: float, eps: float, mu: float) -> int:
    ratio = L * R * R / eps
    if family == "gd_family":
        n = ratio
        if mu > 0:
            n = min(n, (L / mu) * math.log(max(ratio, math.e)))
    else:
        n = math.sqrt(ratio)
        if mu > 0:
            n = min(n, math.sqrt(L / mu) * math.log(max(ratio, math.e)))
    return max(1, math.ceil(4.0 * n))


def accuracy_budget(
    oracle_family: Callable[[float], Oracle],
    method: str,
    eps: float,
    p: int,
    r: int,
    R_hat: float,
    mu_hat: float = 0.0,
    *,
    adaptive: bool = True,
    C0: float = 1.0,
    C_min: float = 1e-9,
    y0: Optional[Callable[[Oracle], HVector]] = None,
) -> Tuple[HVector, RunLog]:
    """Choose the oracle discretization step from the target accuracy.

    Parameters
    ----------
    oracle_family : callable
        Maps a step ``tau > 0`` to an oracle whose error scales like
        ``tau^p`` and whose cost scales like ``tau^-r``. The oracle must
        provide ``L_hint``; ``J_star_known`` (default 0) is the reference
        optimal value for the success test.
    method : {'gd_family', 'stm_family'}
        Averaged gradient descent or the similar-triangles method (adaptive
        variants by default).
    eps : float
        Target accuracy for ``J(q^N) - J*``.
    p, r : int
        Approximation order and cost exponent of the family.
    R_hat, mu_hat : float
        Estimates of the distance to the solution and of the strong
        convexity modulus (0 when unknown).

    Notes
    -----
    The error target is ``delta = eps`` for gradient descent and
    ``eps * sqrt(max(mu R^2, eps))`` for STM, the step is
    ``tau = C delta^(1/p)`` and the iteration budget is
    ``4 min(L R^2/eps, (L/mu) ln(L R^2/eps))`` (square roots of both terms
    for STM). When the run misses the target, ``C`` is divided by 3. Every
    attempt is listed in ``meta['attempts']``; ``meta['work']`` sums
    ``iterations * tau^-r`` over attempts.
    """
    if method not in ("gd_family", "stm_family"):
        raise ValueError(f"unknown method family {method!r}")
    if not eps > 0:
        raise ValueError("eps must be positive")
    if p < 1 or r < 1:
        raise ValueError("p and r must be >= 1")
    if method == "gd_family":
        delta = eps
    else:
        delta = eps * math.sqrt(max(mu_hat * R_hat**2, eps))
    C = C0
    attempts = []
    work = 0.0
    while C >= C_min:
        tau = C * delta ** (1.0 / p)
        oracle = oracle_family(tau)
        L = oracle.spec.L_hint
        if L is None:
            raise ValueError("oracle family must provide L_hint")
        N = _budget_iterations(method, L, R_hat, eps, mu_hat)
        start = y0(oracle) if y0 is not None else HVector.zeros(oracle.spec.dimension, oracle.spec.weight)
        stop = StopRule.iterations(N)
        if method == "gd_family":
            q, log = gd(oracle, start, None if adaptive else L, "averaged", stop)
        elif adaptive:
            q, log = astm(oracle, start, stop=stop)
        else:
            q, log = stm(oracle, start, L, stop=stop)
        J_star = oracle.spec.J_star_known or 0.0
        achieved = log.records[-1].J - J_star
        work += log.iterations * tau ** (-r)
        attempts.append(
            {"C": C, "tau": tau, "N": N, "J": log.records[-1].J, "gap": achieved,
             "status": log.status.value}
        )
        if log.status is not Status.FAILED and achieved <= eps:
            log.status = Status.CONVERGED
            break
        C /= 3.0
    else:
        log.status = Status.BUDGET_EXHAUSTED
        log.meta["diagnostic"] = "C fell below C_min; check p and r"
    log.meta["attempts"] = attempts
    log.meta["work"] = work
    log.meta["C"] = C
    return q, log
