"""First-order oracles: exact least squares, Tikhonov shift, controlled inexactness.

An oracle answers value and gradient queries for a convex functional on a
weighted vector space. Oracles hold no mutable state; evaluation counts are
reported per response and accumulated by whoever runs the method.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .hilbert import HVector, LinOp, inner, operator_norm_sq

__all__ = [
    "OracleSpec",
    "OracleResponse",
    "Oracle",
    "least_squares_oracle",
    "regularize",
    "perturb",
    "finite_diff_defect",
]


@dataclass(frozen=True)
class OracleSpec:
    """Static description of an oracle.

    Attributes
    ----------
    dimension : int
        Length of the argument vector.
    L_hint : float or None
        Lipschitz constant of the gradient, if known.
    mu_hint : float or None
        Strong-convexity modulus, if known.
    delta : float
        Inexactness level of the (delta, L) oracle model; 0 for exact oracles.
    J_star_known : float or None
        Optimal value, if known (0 for compatible least-squares problems).
    weight : float
        Quadrature weight of the argument space.
    """

    dimension: int
    L_hint: Optional[float] = None
    mu_hint: Optional[float] = None
    delta: float = 0.0
    J_star_known: Optional[float] = None
    weight: float = 1.0

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.L_hint is not None and self.L_hint < 0:
            raise ValueError("L_hint must be nonnegative")
        if self.mu_hint is not None and self.mu_hint < 0:
            raise ValueError("mu_hint must be nonnegative")
        if (
            self.L_hint is not None
            and self.mu_hint is not None
            and self.mu_hint > self.L_hint * (1 + 1e-12)
        ):
            raise ValueError("mu_hint cannot exceed L_hint")


@dataclass(frozen=True)
class OracleResponse:
    value: Optional[float]
    gradient: Optional[HVector]
    func_evals: int
    grad_evals: int


class Oracle:
    """Pair of callables ``value(q)`` and ``gradient(q)`` plus an :class:`OracleSpec`."""

    def __init__(
        self,
        value: Callable[[HVector], float],
        gradient: Callable[[HVector], HVector],
        spec: OracleSpec,
    ):
        self._value = value
        self._gradient = gradient
        self.spec = spec

    def __repr__(self) -> str:
        return f"Oracle({self.spec!r})"

    def _check(self, q: HVector) -> None:
        if len(q) != self.spec.dimension:
            raise ValueError(
                f"oracle expects dimension {self.spec.dimension}, got {len(q)}"
            )

    def value(self, q: HVector) -> float:
        self._check(q)
        return float(self._value(q))

    def gradient(self, q: HVector) -> HVector:
        self._check(q)
        return self._gradient(q)

    def query(self, q: HVector, value: bool = True, gradient: bool = True) -> OracleResponse:
        v = self.value(q) if value else None
        g = self.gradient(q) if gradient else None
        return OracleResponse(v, g, int(value), int(gradient))

    def with_spec(self, **changes) -> "Oracle":
        return Oracle(self._value, self._gradient, replace(self.spec, **changes))


def least_squares_oracle(
    A: LinOp,
    f: HVector,
    *,
    L: Optional[float] = None,
    mu: Optional[float] = None,
    compatible: bool = False,
) -> Oracle:
    """Oracle for ``J(q) = 1/2 ||Aq - f||^2`` with gradient ``A*(Aq - f)``.

    `L` defaults to a power-method estimate of ``||A||^2``. Pass
    ``compatible=True`` when ``Aq = f`` is known to be solvable, which sets
    the known optimal value to 0.
    """
    if len(f) != A.dim_out:
        raise ValueError(f"f has length {len(f)}, operator range is {A.dim_out}")
    if L is None:
        L = operator_norm_sq(A).value

    def value(q: HVector) -> float:
        r = A.apply(q) - f
        return 0.5 * inner(r, r)

    def gradient(q: HVector) -> HVector:
        return A.apply_adjoint(A.apply(q) - f)

    spec = OracleSpec(
        dimension=A.dim_in,
        L_hint=float(L),
        mu_hint=mu,
        J_star_known=0.0 if compatible else None,
        weight=A.weight_in,
    )
    return Oracle(value, gradient, spec)


def regularize(base: Oracle, mu: float) -> Oracle:
    """Add ``(mu/2)||q||^2`` to the objective."""
    if not mu > 0:
        raise ValueError("mu must be positive")

    def value(q: HVector) -> float:
        return base.value(q) + 0.5 * mu * inner(q, q)

    def gradient(q: HVector) -> HVector:
        return base.gradient(q) + mu * q

    s = base.spec
    spec = replace(
        s,
        L_hint=None if s.L_hint is None else s.L_hint + mu,
        mu_hint=(s.mu_hint or 0.0) + mu,
        J_star_known=None,
    )
    return Oracle(value, gradient, spec)


def _noise_seed(q: HVector, seed: int, quantum: float) -> int:
    cells = np.round(q.values / quantum) + 0.0  # +0.0 folds -0.0 into 0.0
    h = hashlib.blake2b(cells.tobytes(), digest_size=8, key=str(seed).encode())
    return int.from_bytes(h.digest(), "little")


def perturb(
    base: Oracle,
    delta: float,
    diameter: float,
    seed: int = 0,
    quantum: float = 1e-12,
    direction: str = "random",
) -> Oracle:
    """Deterministic (delta, L) oracle built from an exact one.

    For each query point a hash of the quantized coordinates selects
    ``xi in [0, 1]`` and a gradient-error size ``eta = 2 min(xi, 1 - xi)``.
    The oracle returns

        ``J(q) - delta * xi``  and  ``grad J(q) + eta * delta / (2 D) * d``

    with ``D = diameter`` and ``d`` a unit vector. Since
    ``eta/2 <= xi <= 1 - eta/2`` both sides of the (delta, L) inequality hold
    for any pair of points at distance at most ``D``.

    Parameters
    ----------
    direction : {'random', 'fixed'}
        ``random`` draws a fresh direction ``d`` per query point (zero-mean
        noise). ``fixed`` uses one direction drawn from `seed` for every
        query, a systematic bias such as a discretization error produces.
    """
    if base.spec.delta != 0:
        raise ValueError("perturb expects an exact base oracle")
    if not (delta > 0 and diameter > 0):
        raise ValueError("delta and diameter must be positive")
    if direction not in ("random", "fixed"):
        raise ValueError("direction must be 'random' or 'fixed'")
    bound = delta / (2.0 * diameter)
    dim, weight = base.spec.dimension, base.spec.weight
    fixed = np.random.default_rng([seed, 0x5EED]).standard_normal(dim)
    fixed /= np.sqrt(weight) * np.linalg.norm(fixed)

    def draw(q: HVector):
        rng = np.random.default_rng(_noise_seed(q, seed, quantum))
        xi = rng.random()
        if direction == "fixed":
            return xi, fixed
        d = rng.standard_normal(len(q))
        nd = np.sqrt(q.weight) * np.linalg.norm(d)
        return xi, d / nd

    def value(q: HVector) -> float:
        xi, _ = draw(q)
        return base.value(q) - delta * xi

    def gradient(q: HVector) -> HVector:
        xi, d = draw(q)
        eta = 2.0 * min(xi, 1.0 - xi)
        return base.gradient(q) + q.like(eta * bound * d)

    return Oracle(value, gradient, replace(base.spec, delta=float(delta)))


def finite_diff_defect(oracle: Oracle, q: HVector, h: float = 1e-5) -> float:
    """Worst mismatch between central differences and the oracle gradient.

    Takes the maximum over coordinate directions of
    ``|(J(q + h e_i) - J(q - h e_i)) / 2h - <grad J(q), e_i>|`` and divides by
    ``1 + |J(q)|``.
    """
    g = oracle.gradient(q)
    J0 = oracle.value(q)
    worst = 0.0
    for i in range(len(q)):
        e = np.zeros(len(q))
        e[i] = 1.0
        step = q.like(h * e)
        fd = (oracle.value(q + step) - oracle.value(q - step)) / (2 * h)
        worst = max(worst, abs(fd - inner(g, q.like(e))))
    return worst / (1.0 + abs(J0))
