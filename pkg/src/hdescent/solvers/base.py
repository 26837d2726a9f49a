"""Shared solver machinery: stop rules, iteration state, run logs."""

from __future__ import annotations

import csv
import enum
import io
import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

from ..hilbert import HVector, norm
from ..oracle import Oracle

__all__ = [
    "Status",
    "StopRule",
    "SolverState",
    "Record",
    "RunLog",
    "CSV_HEADER",
    "NonFiniteError",
]

CSV_HEADER = (
    "k",
    "J",
    "grad_norm",
    "A_k",
    "L_used",
    "func_evals",
    "grad_evals",
    "feasibility",
    "elapsed_ms",
)


class Status(str, enum.Enum):
    CONVERGED = "converged"
    BUDGET_EXHAUSTED = "budget_exhausted"
    LINE_SEARCH_FAILED = "line_search_failed"
    FAILED = "failed"


class NonFiniteError(ArithmeticError):
    """Raised inside a run when the oracle returns a non-finite answer."""


@dataclass
class SolverState:
    """Iterates of a similar-triangles run and its weight accumulators.

    Gradient methods reuse the same container: `y` is the point where the
    gradient was queried, `q` the reported iterate, `u` the previous `y`.
    """

    y: HVector
    u: HVector
    q: HVector
    A_k: float
    alpha_k: float
    L_current: float
    k: int = 0
    line_search_evals: int = 0


Monitor = Callable[[SolverState, float], Tuple[float, float]]


@dataclass(frozen=True)
class StopRule:
    """Disjunction of stopping tests, evaluated once per outer iteration.

    Each field is one member; ``None`` disables it. `gap` and `feasibility`
    form a single conjunctive member and need a `monitor` that maps
    ``(state, J(q))`` to ``(gap, feasibility)``. `min_A` stops once the
    accumulated weight ``A_k`` reaches it (segment length rule of the
    adaptive restart scheme).
    """

    objective: Optional[float] = None
    grad_norm: Optional[float] = None
    max_iter: Optional[int] = None
    gap: Optional[float] = None
    feasibility: Optional[float] = None
    monitor: Optional[Monitor] = field(default=None, compare=False)
    min_A: Optional[float] = None

    def __post_init__(self):
        bounds = (self.objective, self.grad_norm, self.max_iter, self.gap, self.min_A)
        if all(b is None for b in bounds):
            raise ValueError("stop rule needs at least one finite bound")
        if (self.gap is None) != (self.feasibility is None):
            raise ValueError("gap and feasibility must be given together")
        if self.gap is not None and self.monitor is None:
            raise ValueError("gap_and_feasibility requires a monitor")

    @classmethod
    def objective_below(cls, eps: float) -> "StopRule":
        return cls(objective=eps)

    @classmethod
    def grad_norm_below(cls, eps: float) -> "StopRule":
        return cls(grad_norm=eps)

    @classmethod
    def iterations(cls, n: int) -> "StopRule":
        return cls(max_iter=int(n))

    @classmethod
    def gap_and_feasibility(cls, eps: float, eps_tilde: float, monitor: Monitor) -> "StopRule":
        return cls(gap=eps, feasibility=eps_tilde, monitor=monitor)

    def __or__(self, other: "StopRule") -> "StopRule":
        def pick(a, b, fn=min):
            if a is None:
                return b
            if b is None:
                return a
            return fn(a, b)

        if self.monitor is not None and other.monitor is not None:
            raise ValueError("cannot combine two monitored rules")
        return StopRule(
            objective=pick(self.objective, other.objective, max),
            grad_norm=pick(self.grad_norm, other.grad_norm, max),
            max_iter=pick(self.max_iter, other.max_iter),
            gap=pick(self.gap, other.gap),
            feasibility=pick(self.feasibility, other.feasibility),
            monitor=self.monitor or other.monitor,
            min_A=pick(self.min_A, other.min_A),
        )

    @property
    def needs_gradient(self) -> bool:
        return self.grad_norm is not None


@dataclass(frozen=True)
class Record:
    k: int
    J: float
    grad_norm: float
    A_k: float
    L_used: float
    func_evals: int
    grad_evals: int
    feasibility: Optional[float] = None
    elapsed_ms: Optional[float] = None


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, int):
        return str(x)
    return repr(float(x))


def _parse_float(s: str) -> Optional[float]:
    return None if s == "" else float(s)


@dataclass
class RunLog:
    records: List[Record] = field(default_factory=list)
    status: Status = Status.BUDGET_EXHAUSTED
    meta: dict = field(default_factory=dict)
    state: Optional[SolverState] = None

    def __len__(self) -> int:
        return len(self.records)

    @property
    def iterations(self) -> int:
        return max(len(self.records) - 1, 0)

    @property
    def func_evals(self) -> int:
        return self.records[-1].func_evals if self.records else 0

    @property
    def grad_evals(self) -> int:
        return self.records[-1].grad_evals if self.records else 0

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.records]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.records:
            w.writerow([_fmt(getattr(r, name)) for name in CSV_HEADER])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text: str) -> "RunLog":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != CSV_HEADER:
            raise ValueError("unexpected CSV header")
        records = []
        for row in rows[1:]:
            d = dict(zip(CSV_HEADER, row))
            records.append(
                Record(
                    k=int(d["k"]),
                    J=float(d["J"]),
                    grad_norm=float(d["grad_norm"]),
                    A_k=float(d["A_k"]),
                    L_used=float(d["L_used"]),
                    func_evals=int(d["func_evals"]),
                    grad_evals=int(d["grad_evals"]),
                    feasibility=_parse_float(d["feasibility"]),
                    elapsed_ms=_parse_float(d["elapsed_ms"]),
                )
            )
        return cls(records=records)

    def summary(self) -> dict:
        last = self.records[-1] if self.records else None
        return {
            "status": self.status.value,
            "iterations": self.iterations,
            "final_J": None if last is None else last.J,
            "final_grad_norm": None if last is None else last.grad_norm,
            "func_evals": self.func_evals,
            "grad_evals": self.grad_evals,
        }


class Run:
    """Bookkeeping for one solver run: counted oracle access and the log.

    Passing an existing `log` appends to it: counters and the iteration
    index continue from its last record, so restarted runs produce one log
    with nondecreasing counters.
    """

    def __init__(
        self,
        oracle: Oracle,
        stop: Optional[StopRule],
        *,
        timed: bool = False,
        log: Optional[RunLog] = None,
        callback: Optional[Callable[[SolverState], None]] = None,
    ):
        self.oracle = oracle
        self.stop = stop
        self.log = log if log is not None else RunLog()
        self.log.status = Status.BUDGET_EXHAUSTED
        self.callback = callback
        self.timed = timed
        self.t0 = time.perf_counter()
        last = self.log.records[-1] if self.log.records else None
        self.func_evals = last.func_evals if last else 0
        self.grad_evals = last.grad_evals if last else 0
        self.k0 = last.k + 1 if last else 0
        self.delta = oracle.spec.delta

    def value(self, q: HVector) -> float:
        v = self.oracle.value(q)
        self.func_evals += 1
        if not math.isfinite(v):
            raise NonFiniteError(f"non-finite objective value {v!r}")
        return v

    def gradient(self, q: HVector) -> HVector:
        try:
            g = self.oracle.gradient(q)
        except ValueError as exc:
            # HVector refuses non-finite entries
            raise NonFiniteError(str(exc)) from exc
        self.grad_evals += 1
        return g

    def record(
        self,
        state: SolverState,
        J: float,
        grad_norm: float,
        feasibility: Optional[float] = None,
    ) -> Record:
        elapsed = (time.perf_counter() - self.t0) * 1e3 if self.timed else None
        rec = Record(
            k=self.k0 + state.k,
            J=J,
            grad_norm=grad_norm,
            A_k=state.A_k,
            L_used=state.L_current,
            func_evals=self.func_evals,
            grad_evals=self.grad_evals,
            feasibility=feasibility,
            elapsed_ms=elapsed,
        )
        self.log.records.append(rec)
        return rec

    def check(self, state: SolverState, J: float, last_grad: HVector) -> bool:
        """Log the iterate and evaluate the stop rule on it."""
        stop = self.stop
        if self.callback is not None:
            self.callback(state)
        gnorm = norm(last_grad)
        feas = None
        done = False
        if stop is not None:
            if stop.grad_norm is not None:
                gq = self.gradient(state.q)
                gnorm = norm(gq)
                # inexact gradients carry up to delta of slack in the certificate
                if gnorm + self.delta <= stop.grad_norm:
                    done = True
            if stop.monitor is not None:
                gap, feas = stop.monitor(state, J)
                if gap <= stop.gap and feas <= stop.feasibility:
                    done = True
            if stop.objective is not None and J <= stop.objective:
                done = True
            if stop.min_A is not None and state.A_k >= stop.min_A:
                done = True
        self.record(state, J, gnorm, feas)
        if done:
            self.log.status = Status.CONVERGED
        return done

    def exhausted(self, state: SolverState) -> bool:
        """True once the iteration cap is hit.

        A rule consisting of the cap alone counts as satisfied, otherwise the
        run is reported as budget-exhausted.
        """
        stop = self.stop
        if stop is None or stop.max_iter is None or state.k < stop.max_iter:
            return False
        only_cap = all(
            b is None for b in (stop.objective, stop.grad_norm, stop.gap, stop.min_A)
        )
        self.log.status = Status.CONVERGED if only_cap else Status.BUDGET_EXHAUSTED
        return True

    def finish(self, state: SolverState) -> RunLog:
        self.log.state = state
        return self.log

    def fail(self, state: Optional[SolverState], status: Status, msg: str) -> RunLog:
        self.log.status = status
        self.log.meta["diagnostic"] = msg
        self.log.state = state
        return self.log
