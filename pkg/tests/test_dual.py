import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdescent.dual import (
    DualProblem,
    PrimalRecovery,
    dual_iteration_bound,
    dual_oracle,
    min_norm_dual,
    solve_dual,
    solve_dual_regularized,
)
from hdescent.hilbert import HVector, LinOp, norm
from hdescent.oracle import finite_diff_defect
from hdescent.pde_laplace import Grid, boundary_data, make_operator
from hdescent.solvers import Status


def identity_problem(f=(3.0, 4.0)):
    return min_norm_dual(LinOp.identity(2), HVector(f), L=1.0)


def row_problem():
    # A = (1 0), minimum-norm solution of q1 = 3 is (3, 0)
    A = LinOp.from_matrix(np.array([[1.0, 0.0]]))
    return min_norm_dual(A, HVector([3.0]), L=1.0)


# ---------------------------------------------------------------- oracle


def test_dual_oracle_identity_by_hand():
    o = dual_oracle(identity_problem())
    lam = HVector([0.5, -1.0])
    f = np.array([3.0, 4.0])
    # q(lam) = lam, phi = <lam, lam - f> - |lam|^2/2 = |lam|^2/2 - <f, lam>
    assert o.value(lam) == pytest.approx(0.5 * (0.25 + 1.0) - (1.5 - 4.0))
    assert np.allclose(o.gradient(lam).values, lam.values - f)
    assert norm(o.gradient(HVector(f))) == 0.0


def test_dual_oracle_at_origin():
    p = row_problem()
    g = dual_oracle(p).gradient(HVector.zeros(1))
    assert g == p.A.apply(p.respond(HVector.zeros(1))) - p.f


def test_dual_lipschitz_from_operator():
    A = LinOp.diagonal([1.0, 3.0])
    p = min_norm_dual(A, HVector([1.0, 1.0]))
    assert dual_oracle(p).spec.L_hint == pytest.approx(9.0, rel=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 32), st.integers(0, 2**31))
def test_dual_oracle_finite_differences(dim, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((dim, dim + 2))
    p = min_norm_dual(LinOp.from_matrix(M), HVector(rng.standard_normal(dim)))
    lam = HVector(rng.standard_normal(dim))
    assert finite_diff_defect(dual_oracle(p), lam, h=1e-4) <= 1e-6


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_dual_midpoint_convexity(seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((4, 6))
    o = dual_oracle(min_norm_dual(LinOp.from_matrix(M), HVector(rng.standard_normal(4))))
    a, b = HVector(rng.standard_normal(4)), HVector(rng.standard_normal(4))
    mid = o.value(0.5 * (a + b))
    assert mid <= 0.5 * (o.value(a) + o.value(b)) + 1e-10 * (1 + abs(mid))


def test_responder_length_checked():
    p = DualProblem(
        A=LinOp.identity(2),
        f=HVector([1.0, 1.0]),
        conjugate_responder=lambda lam: HVector([1.0]),
        g_value=lambda q: 0.0,
    )
    with pytest.raises(ValueError):
        p.respond(HVector.zeros(2))


def test_problem_validation():
    with pytest.raises(ValueError):
        min_norm_dual(LinOp.identity(2), HVector([1.0]))
    with pytest.raises(ValueError):
        DualProblem(LinOp.identity(1), HVector([1.0]), lambda l: l, lambda q: 0.0, strong_convexity=0.0)


def test_min_norm_identity_closed_form():
    p = identity_problem()
    lam_star = HVector([3.0, 4.0])
    assert p.respond(lam_star) == lam_star
    assert p.g_value(lam_star) == pytest.approx(12.5)


# ---------------------------------------------------------------- primal recovery


def test_primal_recovery_average():
    r = PrimalRecovery()
    r.add(HVector([1.0, 0.0]), 1.0)
    r.add(HVector([0.0, 1.0]), 3.0)
    assert np.allclose(r.q.values, [0.25, 0.75])
    assert r.A_N == 4.0
    with pytest.raises(ValueError):
        r.add(HVector([0.0, 0.0]), 0.0)
    with pytest.raises(ValueError):
        PrimalRecovery().q


# ---------------------------------------------------------------- solve_dual


@pytest.mark.parametrize("method", ["stm", "astm"])
def test_solve_dual_identity(method):
    eps = 1e-6
    q, lam, log = solve_dual(identity_problem(), method, eps, eps, 100_000, R_tilde=5.0)
    assert log.converged
    assert norm(q - HVector([3.0, 4.0])) <= 1e-5
    bound = 6 * max(math.sqrt(25 / eps), math.sqrt(5 / eps))
    assert log.meta["iteration_bound"] == math.ceil(bound)
    assert log.iterations <= bound
    assert log.meta["gap"][-1] <= eps
    assert log.records[-1].feasibility <= eps


def test_solve_dual_row_operator():
    eps = 1e-6
    q, _, log = solve_dual(row_problem(), "stm", eps, eps, 100_000, R_tilde=3.0)
    assert log.converged
    assert log.iterations <= 6 * max(math.sqrt(9 / eps), math.sqrt(3 / eps))
    assert norm(q - HVector([3.0, 0.0])) <= 1e-5


def test_solve_dual_gd_averaged_loose():
    q, _, log = solve_dual(identity_problem(), "gd_averaged", 1e-2, 1e-2, 100_000, R_tilde=5.0)
    assert log.converged
    assert log.iterations <= dual_iteration_bound("gd_averaged", 1.0, 5.0, 1e-2, 1e-2)


def test_weak_duality_certificate():
    p = identity_problem()
    g_star = 12.5
    seen = []

    def cb(state):
        seen.append(state.k)

    q, _, log = solve_dual(p, "stm", 1e-6, 1e-6, 2000, callback=cb)
    # recompute the averaged primal point independently from the logged weights
    for gap in log.meta["gap"]:
        assert math.isfinite(gap)
    assert log.meta["gap"][-1] >= p.g_value(q) - g_star - 1e-10


def test_gap_bounds_suboptimality_every_iterate():
    p = identity_problem()
    ys, alphas = [], []
    solve_dual(p, "stm", 1e-8, 1e-8, 500, callback=lambda s: (ys.append(s.y.values.copy()), alphas.append(s.alpha_k)))
    _, _, log = solve_dual(p, "stm", 1e-8, 1e-8, 500)
    A_N = np.cumsum(alphas)
    S = np.cumsum(np.array(alphas)[:, None] * np.array(ys), axis=0)
    for k, gap in enumerate(log.meta["gap"]):
        qN = S[k] / A_N[k]
        g_excess = 0.5 * float(qN @ qN) - 12.5
        assert gap >= g_excess - 1e-10


def test_recovery_weights_normalize():
    _, _, log = solve_dual(identity_problem(), "astm", 1e-6, 1e-6, 10_000)
    A = log.column("A_k")
    assert log.meta["recovery_weight_sum"] == pytest.approx(A[-1], rel=1e-12)


def test_square_nonsingular_error_bound():
    M = np.array([[2.0, 1.0], [0.0, 1.0]])
    f = np.array([1.0, -1.0])
    p = min_norm_dual(LinOp.from_matrix(M), HVector(f))
    eps_t = 1e-6
    q, _, log = solve_dual(p, "astm", 1e-6, eps_t, 100_000)
    assert log.converged
    exact = np.linalg.solve(M, f)
    inv_norm = np.linalg.norm(np.linalg.inv(M), 2)
    assert np.linalg.norm(q.values - exact) <= eps_t * inv_norm * (1 + 1e-9)


def test_zero_data_stops_at_once():
    q, lam, log = solve_dual(identity_problem((0.0, 0.0)), "stm", 1e-6, 1e-6, 100)
    assert log.converged
    assert log.iterations == 0
    assert norm(q) == 0.0 and norm(lam) == 0.0


def test_budget_exhaustion_reported():
    _, _, log = solve_dual(identity_problem(), "stm", 1e-12, 1e-12, 3)
    assert log.status is Status.BUDGET_EXHAUSTED
    assert log.iterations == 3


def test_plain_gd_rejected():
    with pytest.raises(ValueError):
        solve_dual(identity_problem(), "gd", 1e-6, 1e-6, 10)
    with pytest.raises(ValueError):
        solve_dual(identity_problem(), "stm", 0.0, 1e-6, 10)


def test_feasibility_column_populated():
    _, _, log = solve_dual(identity_problem(), "stm", 1e-4, 1e-4, 10_000)
    feas = log.column("feasibility")
    assert all(v is not None for v in feas)
    # regression property: no growth beyond a 10x transient
    assert all(b <= 10 * a for a, b in zip(feas, feas[1:]))


def test_single_mode_pde_recovery():
    grid = Grid(63)
    y = grid.y
    f = boundary_data(math.cosh(math.pi) ** -1 * np.sin(np.pi * y), grid)
    p = min_norm_dual(make_operator(grid), f, L=1.0)
    q, _, log = solve_dual(p, "astm", 1e-8, 1e-8, 50_000)
    target = boundary_data(np.sin(np.pi * y), grid)
    assert norm(q - target) <= 1e-2


# ---------------------------------------------------------------- regularized dual


def test_regularized_exact_radius():
    q, _, log = solve_dual_regularized(identity_problem(), 1e-6, 1e-6, 5.0)
    assert log.converged
    assert log.meta["restarts"] == 0
    assert norm(q - HVector([3.0, 4.0])) <= 1e-5
    assert log.meta["mu"] == pytest.approx(1e-6 / 50)


def test_regularized_primal_bound_is_certificate():
    p = identity_problem()
    q, lam, log = solve_dual_regularized(p, 1e-6, 1e-6, 5.0)
    assert p.g_value(q) - 12.5 <= log.meta["primal_bound"][-1] + 1e-9


def test_regularized_small_guess_doubles():
    q, _, log = solve_dual_regularized(identity_problem(), 1e-4, 1e-4, 0.1)
    assert log.converged
    assert 1 <= log.meta["restarts"] <= 6
    Rs = [s[0] for s in log.meta["stages"]]
    assert all(b == 2 * a for a, b in zip(Rs, Rs[1:]))
    assert norm(q - HVector([3.0, 4.0])) <= 1e-3


def test_regularized_zero_data():
    q, lam, log = solve_dual_regularized(identity_problem((0.0, 0.0)), 1e-6, 1e-6, 1.0)
    assert log.converged and log.iterations == 0
    assert norm(lam) == 0.0


def test_regularized_gives_up():
    _, _, log = solve_dual_regularized(identity_problem(), 1e-6, 1e-6, 1e-30, max_stage_iter=1)
    assert log.status is Status.BUDGET_EXHAUSTED
    assert len(log.meta["stages"]) == 61
