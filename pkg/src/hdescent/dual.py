"""Dual approach to ``g(q) -> min`` subject to ``Aq = f``.

The dual objective minimized here is

    phi(lam) = <lam, A q(lam) - f> - g(q(lam)),
    q(lam)   = argmax_q { <A* lam, q> - g(q) },

a convex function with gradient ``A q(lam) - f``. For every ``lam`` and
every ``q`` we have ``g(q) - g(q*) <= phi(lam) + g(q)``, so the sum is a
duality-gap certificate. The primal iterate is the weighted average of the
responses ``q(y^k)`` at the points where the dual solver queried gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

from .hilbert import HVector, LinOp, inner, norm, operator_norm_sq
from .oracle import Oracle, OracleSpec, regularize
from .solvers import RunLog, SolverState, Status, StopRule, astm, gd, stm

__all__ = [
    "DualProblem",
    "PrimalRecovery",
    "dual_oracle",
    "min_norm_dual",
    "solve_dual",
    "solve_dual_regularized",
    "dual_iteration_bound",
    "DUAL_METHODS",
]

DUAL_METHODS = ("stm", "astm", "gd_averaged")
MAX_R_DOUBLINGS = 60


@dataclass(frozen=True)
class DualProblem:
    """Equality-constrained convex problem ``g(q) -> min, Aq = f``.

    Attributes
    ----------
    A : LinOp
        Constraint operator.
    f : HVector
        Right-hand side, in the output space of `A`.
    conjugate_responder : callable
        Maps ``lam`` to the maximizer of ``<A* lam, q> - g(q)``.
    g_value : callable
        The primal objective ``g``.
    strong_convexity : float
        Modulus of strong convexity of `g`.
    L : float, optional
        Lipschitz constant of the dual gradient. Computed from ``||A||^2``
        when omitted.
    """

    A: LinOp
    f: HVector
    conjugate_responder: Callable[[HVector], HVector]
    g_value: Callable[[HVector], float]
    strong_convexity: float = 1.0
    L: Optional[float] = None

    def __post_init__(self):
        if len(self.f) != self.A.dim_out:
            raise ValueError(f"f has length {len(self.f)}, A maps into dimension {self.A.dim_out}")
        if not self.strong_convexity > 0:
            raise ValueError("strong_convexity must be positive")

    def respond(self, lam: HVector) -> HVector:
        q = self.conjugate_responder(lam)
        if len(q) != self.A.dim_in:
            raise ValueError(f"responder returned length {len(q)}, expected {self.A.dim_in}")
        return q

    def lipschitz(self) -> float:
        if self.L is not None:
            return self.L
        return operator_norm_sq(self.A).value / self.strong_convexity


class PrimalRecovery:
    """Running weighted average ``sum(alpha_k q_k) / sum(alpha_k)``."""

    def __init__(self):
        self._sum: Optional[HVector] = None
        self.weights: List[float] = []
        self.A_N = 0.0

    def add(self, q: HVector, alpha: float) -> None:
        if not alpha > 0:
            raise ValueError("weights must be positive")
        self._sum = alpha * q if self._sum is None else self._sum + alpha * q
        self.weights.append(alpha)
        self.A_N += alpha

    @property
    def q(self) -> HVector:
        if self._sum is None:
            raise ValueError("no points accumulated")
        return self._sum / self.A_N


def _phi_parts(problem: DualProblem, lam: HVector) -> Tuple[float, HVector]:
    q = problem.respond(lam)
    resid = problem.A.apply(q) - problem.f
    return inner(lam, resid) - problem.g_value(q), resid


def dual_oracle(problem: DualProblem) -> Oracle:
    """First-order oracle of the dual objective in ``lam``."""

    def value(lam: HVector) -> float:
        return _phi_parts(problem, lam)[0]

    def gradient(lam: HVector) -> HVector:
        return problem.A.apply(problem.respond(lam)) - problem.f

    spec = OracleSpec(
        dimension=problem.A.dim_out,
        L_hint=problem.lipschitz(),
        weight=problem.f.weight,
    )
    return Oracle(value, gradient, spec)


def min_norm_dual(A: LinOp, f: HVector, *, L: Optional[float] = None) -> DualProblem:
    """Dual of ``1/2 ||q||^2 -> min, Aq = f``: responder ``A*``, modulus 1.

    The system must be consistent; this is not checked.
    """
    return DualProblem(
        A=A,
        f=f,
        conjugate_responder=A.apply_adjoint,
        g_value=lambda q: 0.5 * inner(q, q),
        strong_convexity=1.0,
        L=L,
    )


def dual_iteration_bound(method: str, L: float, R_tilde: float, eps: float, eps_tilde: float) -> int:
    """Worst-case iteration count for the gap and feasibility certificate.

    ``6 max(sqrt(L R^2/eps), sqrt(L R/eps_tilde))`` for the similar-triangles
    methods and ``3 max(L R^2/eps, L R/eps_tilde)`` for averaged gradient
    descent, with ``R`` the norm of the minimal dual solution.
    """
    a = L * R_tilde**2 / eps
    b = L * R_tilde / eps_tilde
    if method == "gd_averaged":
        return math.ceil(3.0 * max(a, b))
    return math.ceil(6.0 * max(math.sqrt(a), math.sqrt(b)))


def solve_dual(
    problem: DualProblem,
    method: str,
    eps: float,
    eps_tilde: float,
    max_iter: int,
    *,
    R_tilde: Optional[float] = None,
    callback: Optional[Callable[[SolverState], None]] = None,
) -> Tuple[HVector, HVector, RunLog]:
    """Minimize the dual from ``lam = 0`` and recover the primal by averaging.

    Parameters
    ----------
    method : {'stm', 'astm', 'gd_averaged'}
        Dual solver. Plain gradient descent is not primal-dual and is
        rejected.
    eps, eps_tilde : float
        Tolerances for the duality gap ``phi(lam^N) + g(q^N)`` and the
        feasibility ``||A q^N - f||``; both must hold to stop.
    max_iter : int
        Iteration cap; reaching it reports ``budget_exhausted`` and returns
        the last pair.
    R_tilde : float, optional
        Norm of the minimal dual solution, if known. Only used to store the
        worst-case bound in ``log.meta['iteration_bound']``.

    Returns
    -------
    q : HVector
        Averaged primal point ``q^N``.
    lam : HVector
        Dual iterate ``lam^N``.
    log : RunLog
        ``J`` holds ``phi(lam^k)``, ``feasibility`` holds ``||A q^k - f||``;
        ``meta['gap']`` lists the certified gaps.
    """
    if method not in DUAL_METHODS:
        raise ValueError(f"method must be one of {DUAL_METHODS}, got {method!r}")
    if not (eps > 0 and eps_tilde > 0):
        raise ValueError("eps and eps_tilde must be positive")
    oracle = dual_oracle(problem)
    L = oracle.spec.L_hint
    recovery = PrimalRecovery()
    gaps: List[float] = []

    def monitor(state: SolverState, phi_q: float) -> Tuple[float, float]:
        recovery.add(problem.respond(state.y), state.alpha_k)
        qN = recovery.q
        feas = norm(problem.A.apply(qN) - problem.f)
        gap = phi_q + problem.g_value(qN)
        gaps.append(gap)
        return gap, feas

    stop = StopRule.gap_and_feasibility(eps, eps_tilde, monitor) | StopRule.iterations(max_iter)
    lam0 = HVector.zeros(problem.A.dim_out, problem.f.weight)
    if method == "stm":
        lam, log = stm(oracle, lam0, L, stop=stop, callback=callback)
    elif method == "astm":
        lam, log = astm(oracle, lam0, stop=stop, callback=callback)
    else:
        lam, log = gd(oracle, lam0, L, "averaged", stop, callback=callback)
    log.meta["gap"] = gaps
    log.meta["recovery_weight_sum"] = recovery.A_N
    if R_tilde is not None:
        log.meta["iteration_bound"] = dual_iteration_bound(method, L, R_tilde, eps, eps_tilde)
    q = recovery.q if recovery.weights else problem.respond(lam)
    return q, lam, log


def _stage_budget(L: float, mu: float, R_tilde: float, eps: float) -> int:
    # linear-rate count for the regularized dual, with a generous constant
    ratio = max(L * R_tilde**2 / eps, math.e)
    return math.ceil(4.0 * math.sqrt((L + mu) / mu) * math.log(ratio)) + 10


def solve_dual_regularized(
    problem: DualProblem,
    eps: float,
    eps_tilde: float,
    R_tilde_guess: float,
    *,
    max_stage_iter: Optional[int] = None,
) -> Tuple[HVector, HVector, RunLog]:
    """Strongly convex STM on ``phi(lam) + mu/2 ||lam||^2`` with ``mu = eps / (2 R^2)``.

    Stops when ``||lam|| ||A q(lam) - f|| <= eps`` and
    ``||A q(lam) - f|| <= eps_tilde``; the first product bounds
    ``g(q(lam)) - g(q*)``. If a stage runs out of iterations, the guess
    ``R`` is doubled (``mu`` divided by 4) and the solve restarts from
    ``lam = 0``; after 60 doublings the run reports ``budget_exhausted``.

    The per-stage budget defaults to ``4 sqrt((L + mu)/mu) ln(L R^2/eps) + 10``
    iterations; `max_stage_iter` overrides it.

    The returned log concatenates all stages. ``meta['stages']`` lists
    ``(R, mu, iterations, status)`` per stage and ``meta['primal_bound']``
    the certified bound ``||lam|| ||A q(lam) - f||`` per iteration.
    """
    if not (eps > 0 and eps_tilde > 0):
        raise ValueError("eps and eps_tilde must be positive")
    if not R_tilde_guess > 0:
        raise ValueError("R_tilde_guess must be positive")
    base = dual_oracle(problem)
    L = base.spec.L_hint
    lam0 = HVector.zeros(problem.A.dim_out, problem.f.weight)
    bounds: List[float] = []

    def monitor(state: SolverState, _J: float) -> Tuple[float, float]:
        lam = state.q
        r = norm(problem.A.apply(problem.respond(lam)) - problem.f)
        b = norm(lam) * r
        bounds.append(b)
        return b, r

    log = RunLog()
    stages = []
    R = R_tilde_guess
    lam = lam0
    for doubling in range(MAX_R_DOUBLINGS + 1):
        mu = eps / (2.0 * R * R)
        oracle = regularize(base, mu)
        budget = max_stage_iter if max_stage_iter is not None else _stage_budget(L, mu, R, eps)
        stop = StopRule.gap_and_feasibility(eps, eps_tilde, monitor) | StopRule.iterations(budget)
        start = len(log.records)
        lam, log = stm(oracle, lam0, L + mu, mu, stop=stop, log=log)
        stages.append((R, mu, len(log.records) - start, log.status.value))
        if log.status is Status.CONVERGED or log.status is Status.FAILED:
            break
        R *= 2.0
    else:
        log.status = Status.BUDGET_EXHAUSTED
        log.meta["diagnostic"] = f"R_tilde doubled more than {MAX_R_DOUBLINGS} times"
    log.meta["stages"] = stages
    log.meta["restarts"] = len(stages) - 1
    log.meta["primal_bound"] = bounds
    log.meta["mu"] = stages[-1][1]
    return problem.respond(lam), lam, log
