"""Finite-dimensional stand-ins for Hilbert-space elements and operators.

Vectors carry a quadrature weight so that ``inner(u, v) = w * sum(u * v)``
approximates an L2 inner product on a uniform grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

__all__ = [
    "HVector",
    "LinOp",
    "NormEstimate",
    "inner",
    "norm",
    "operator_norm_sq",
    "adjoint_defect",
]


class HVector:
    """Immutable real vector with a positive quadrature weight.

    Parameters
    ----------
    values : array_like
        Real samples. Copied and frozen.
    weight : float, optional
        Quadrature weight of the inner product (grid spacing on a uniform
        grid). Defaults to 1.
    """

    __slots__ = ("values", "weight")

    def __init__(self, values, weight: float = 1.0):
        arr = np.array(values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(arr)):
            raise ValueError("HVector entries must be finite")
        if not weight > 0:
            raise ValueError(f"weight must be positive, got {weight!r}")
        arr.flags.writeable = False
        self.values = arr
        self.weight = float(weight)

    @classmethod
    def _raw(cls, arr: np.ndarray, weight: float) -> "HVector":
        # Trusted constructor for results of arithmetic on valid vectors.
        obj = object.__new__(cls)
        arr.flags.writeable = False
        obj.values = arr
        obj.weight = weight
        return obj

    @classmethod
    def zeros(cls, n: int, weight: float = 1.0) -> "HVector":
        return cls(np.zeros(n), weight)

    def __len__(self) -> int:
        return self.values.shape[0]

    def __repr__(self) -> str:
        return f"HVector({self.values!r}, weight={self.weight!r})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, HVector):
            return NotImplemented
        return self.weight == other.weight and np.array_equal(self.values, other.values)

    __hash__ = None

    def like(self, values) -> "HVector":
        """New vector with the same weight."""
        return HVector(values, self.weight)

    def _check(self, other: "HVector") -> None:
        if len(self) != len(other) or self.weight != other.weight:
            raise ValueError(
                f"incompatible vectors: length {len(self)}/{len(other)}, "
                f"weight {self.weight}/{other.weight}"
            )

    def __add__(self, other: "HVector") -> "HVector":
        self._check(other)
        return HVector._raw(self.values + other.values, self.weight)

    def __sub__(self, other: "HVector") -> "HVector":
        self._check(other)
        return HVector._raw(self.values - other.values, self.weight)

    def __mul__(self, scalar: float) -> "HVector":
        return HVector._raw(self.values * float(scalar), self.weight)

    __rmul__ = __mul__

    def __truediv__(self, scalar: float) -> "HVector":
        return HVector._raw(self.values / float(scalar), self.weight)

    def __neg__(self) -> "HVector":
        return HVector._raw(-self.values, self.weight)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


def inner(u: HVector, v: HVector) -> float:
    """Weighted inner product ``w * sum(u_i v_i)``."""
    u._check(v)
    return u.weight * float(np.dot(u.values, v.values))


def norm(u: HVector) -> float:
    """Induced norm, rescaled so tiny or huge entries do not underflow or overflow."""
    m = float(np.max(np.abs(u.values))) if len(u) else 0.0
    if m == 0.0:
        return 0.0
    return m * float(np.sqrt(u.weight) * np.linalg.norm(u.values / m))


@dataclass(frozen=True)
class LinOp:
    """Linear map between weighted vector spaces with its adjoint.

    ``adjoint`` must be the adjoint with respect to the *weighted* inner
    products, i.e. ``inner(forward(q), lam) == inner(q, adjoint(lam))``.
    """

    dim_in: int
    dim_out: int
    forward: Callable[[HVector], HVector]
    adjoint: Callable[[HVector], HVector]
    weight_in: float = 1.0
    weight_out: float = 1.0

    def __call__(self, q: HVector) -> HVector:
        return self.apply(q)

    def apply(self, q: HVector) -> HVector:
        if len(q) != self.dim_in:
            raise ValueError(f"operator expects length {self.dim_in}, got {len(q)}")
        return self.forward(q)

    def apply_adjoint(self, lam: HVector) -> HVector:
        if len(lam) != self.dim_out:
            raise ValueError(f"adjoint expects length {self.dim_out}, got {len(lam)}")
        return self.adjoint(lam)

    @classmethod
    def from_matrix(cls, matrix, weight_in: float = 1.0, weight_out: float = 1.0) -> "LinOp":
        """Wrap a dense matrix; the adjoint is ``(w_out / w_in) M^T``."""
        M = np.array(matrix, dtype=np.float64)
        if M.ndim != 2:
            raise ValueError("matrix must be two-dimensional")
        MT = M.T * (weight_out / weight_in)
        return cls(
            dim_in=M.shape[1],
            dim_out=M.shape[0],
            forward=lambda q: HVector._raw(M @ q.values, weight_out),
            adjoint=lambda lam: HVector._raw(MT @ lam.values, weight_in),
            weight_in=weight_in,
            weight_out=weight_out,
        )

    @classmethod
    def identity(cls, n: int, weight: float = 1.0) -> "LinOp":
        return cls(n, n, lambda q: q, lambda lam: lam, weight, weight)

    @classmethod
    def diagonal(cls, diag, weight: float = 1.0) -> "LinOp":
        d = np.array(diag, dtype=np.float64)
        return cls(
            d.size,
            d.size,
            lambda q: HVector._raw(d * q.values, weight),
            lambda lam: HVector._raw(d * lam.values, weight),
            weight,
            weight,
        )

    def to_matrix(self) -> np.ndarray:
        """Assemble the dense matrix column by column (small problems only)."""
        cols = []
        for j in range(self.dim_in):
            e = np.zeros(self.dim_in)
            e[j] = 1.0
            cols.append(self.apply(HVector(e, self.weight_in)).values)
        return np.column_stack(cols)


class NormEstimate(NamedTuple):
    value: float
    converged: bool
    iterations: int


def _random_vector(rng: np.random.Generator, n: int, weight: float) -> HVector:
    return HVector(rng.standard_normal(n), weight)


def operator_norm_sq(
    A: LinOp, tol: float = 1e-6, max_iter: int = 10_000, seed: int = 0
) -> NormEstimate:
    """Power-method estimate of the largest eigenvalue of ``A*A``.

    The Rayleigh quotient never exceeds the true value, so the result is a
    lower bound on ``||A||^2``. Iteration stops when the relative change of
    the quotient drops below `tol`.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    rng = np.random.default_rng(seed)
    v = _random_vector(rng, A.dim_in, A.weight_in)
    v = v / norm(v)
    est = 0.0
    for it in range(1, max_iter + 1):
        w = A.apply_adjoint(A.apply(v))
        new = inner(v, w)
        nw = norm(w)
        if nw == 0.0:
            return NormEstimate(0.0, True, it)
        v = w / nw
        if it > 1 and abs(new - est) <= tol * abs(new):
            return NormEstimate(new, True, it)
        est = new
    return NormEstimate(est, False, max_iter)


def adjoint_defect(A: LinOp, trials: int = 10, seed: int = 0) -> float:
    """Worst normalized mismatch ``|<Aq, l> - <q, A*l>|`` over random pairs."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    L_hat = operator_norm_sq(A, seed=seed).value
    # abs(): a wrong adjoint can make A*A indefinite
    scale = np.sqrt(abs(L_hat)) or 1.0
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        q = _random_vector(rng, A.dim_in, A.weight_in)
        lam = _random_vector(rng, A.dim_out, A.weight_out)
        lhs = inner(A.apply(q), lam)
        rhs = inner(q, A.apply_adjoint(lam))
        worst = max(worst, abs(lhs - rhs) / (norm(q) * norm(lam) * scale))
    return worst
