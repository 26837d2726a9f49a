import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hdescent.hilbert import HVector, LinOp, adjoint_defect, inner, norm, operator_norm_sq

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def vec_pair(n=st.integers(1, 12)):
    return n.flatmap(
        lambda k: st.tuples(
            arrays(np.float64, k, elements=finite),
            arrays(np.float64, k, elements=finite),
            arrays(np.float64, k, elements=finite),
        )
    )


def sin_samples(n):
    y = np.arange(1, n + 1) / (n + 1)
    return HVector(np.sin(np.pi * y), 1.0 / (n + 1))


def test_inner_orthogonal_unit_vectors():
    assert inner(HVector([1.0, 0.0]), HVector([0.0, 1.0])) == 0.0


def test_inner_squared_norm():
    assert inner(HVector([3.0, 4.0]), HVector([3.0, 4.0])) == 25.0


def test_inner_approximates_l2_integral():
    s = sin_samples(255)
    assert abs(inner(s, s) - 0.5) < 1e-3


def test_norm_values():
    assert norm(HVector([0.0, 0.0, 0.0])) == 0.0
    assert norm(HVector([3.0, 4.0])) == 5.0
    assert abs(norm(sin_samples(255)) - math.sqrt(0.5)) < 1e-3


def test_mismatch_rejected():
    with pytest.raises(ValueError):
        inner(HVector([1.0, 2.0]), HVector([1.0]))
    with pytest.raises(ValueError):
        HVector([1.0]) + HVector([1.0], weight=0.5)


def test_invalid_vectors_rejected():
    with pytest.raises(ValueError):
        HVector([1.0, np.nan])
    with pytest.raises(ValueError):
        HVector([1.0], weight=0.0)


def test_vectors_are_immutable():
    v = HVector([1.0, 2.0])
    with pytest.raises(ValueError):
        v.values[0] = 5.0


@given(vec_pair(), finite, finite)
def test_inner_symmetric_and_bilinear(vs, a, b):
    u, v, w = (HVector(x, 0.25) for x in vs)
    assert inner(u, v) == inner(v, u)
    lhs = inner(a * u + b * v, w)
    rhs = a * inner(u, w) + b * inner(v, w)
    scale = 1.0 + (abs(a) * norm(u) + abs(b) * norm(v)) * norm(w)
    assert abs(lhs - rhs) <= 1e-12 * scale


@given(arrays(np.float64, st.integers(1, 10), elements=finite))
def test_norm_zero_iff_zero(x):
    v = HVector(x)
    assert (norm(v) == 0.0) == bool(np.all(x == 0.0))


def test_operator_norm_examples():
    est = operator_norm_sq(LinOp.diagonal([1.0, 2.0]))
    assert est.converged
    assert abs(est.value - 4.0) < 1e-6
    assert abs(operator_norm_sq(LinOp.identity(7)).value - 1.0) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 16), st.integers(1, 16), st.integers(0, 2**31 - 1))
def test_operator_norm_never_exceeds_true_value(m, n, seed):
    M = np.random.default_rng(seed).standard_normal((m, n))
    A = LinOp.from_matrix(M)
    true = np.linalg.eigvalsh(M.T @ M).max()
    est = operator_norm_sq(A, tol=1e-6)
    assert est.value <= true * (1 + 1e-6) + 1e-12


def test_unconverged_power_method_is_flagged():
    # nearly equal top singular values make the power method slow
    A = LinOp.diagonal([1.0, 0.999999, 0.5])
    est = operator_norm_sq(A, tol=1e-15, max_iter=3)
    assert not est.converged
    assert est.iterations == 3


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 10), st.integers(1, 10), st.integers(0, 2**31 - 1))
def test_matrix_operator_adjoint_exact(m, n, seed):
    M = np.random.default_rng(seed).standard_normal((m, n))
    assert adjoint_defect(LinOp.from_matrix(M, weight_in=0.1, weight_out=0.3)) <= 1e-12


def test_wrong_adjoint_detected():
    M = np.array([[2.0, 1.0], [0.5, 3.0]])
    good = LinOp.from_matrix(M)
    bad = LinOp(2, 2, good.forward, lambda lam: -good.apply_adjoint(lam))
    assert adjoint_defect(bad) >= 0.1


def test_adjoint_defect_deterministic():
    M = np.random.default_rng(3).standard_normal((4, 5))
    A = LinOp(5, 4, LinOp.from_matrix(M).forward, lambda lam: HVector(M.T @ lam.values * 1.001))
    assert adjoint_defect(A, seed=7) == adjoint_defect(A, seed=7)


def test_to_matrix_roundtrip():
    M = np.arange(6.0).reshape(2, 3)
    assert np.array_equal(LinOp.from_matrix(M).to_matrix(), M)
