import math

import numpy as np
import pytest

from hdescent.hilbert import HVector, adjoint_defect, norm, operator_norm_sq
from hdescent.oracle import least_squares_oracle
from hdescent.pde_laplace import (
    Grid,
    boundary_data,
    inverse_solve,
    make_operator,
    read_boundary_csv,
    solve_D,
    solve_P,
    solve_P_field,
    write_boundary_csv,
)
from hdescent.solvers import StopRule

from reference import assemble_adjoint, assemble_forward


def sech(x):
    return 1.0 / math.cosh(x)


def mode(k, grid):
    return boundary_data(np.sin(k * np.pi * grid.y), grid)


# ---------------------------------------------------------------- grid and data


def test_grid_validation():
    assert Grid(3).h == 0.25
    assert np.allclose(Grid(3).y, [0.25, 0.5, 0.75])
    with pytest.raises(ValueError):
        Grid(2)


def test_boundary_data_length_checked():
    with pytest.raises(ValueError):
        solve_P(np.ones(4), Grid(5))


# ---------------------------------------------------------------- forward and adjoint


def test_forward_first_mode():
    g = Grid(63)
    out = solve_P(mode(1, g), g)
    assert np.max(np.abs(out.values - sech(math.pi) * np.sin(np.pi * g.y))) <= 2e-3
    assert out.weight == g.h


def test_forward_second_mode():
    g = Grid(127)
    out = solve_P(mode(2, g), g)
    assert np.max(np.abs(out.values - sech(2 * math.pi) * np.sin(2 * np.pi * g.y))) <= 1e-4


def test_adjoint_first_mode():
    g = Grid(63)
    out = solve_D(mode(1, g), g)
    assert np.max(np.abs(out.values - sech(math.pi) * np.sin(np.pi * g.y))) <= 2e-3


def test_zero_data_gives_zero():
    g = Grid(15)
    assert norm(solve_P(np.zeros(15), g)) == 0.0
    assert norm(solve_D(np.zeros(15), g)) == 0.0


@pytest.mark.parametrize("k", [1, 2, 3])
def test_mode_convergence_second_order(k):
    errs = []
    for n in (31, 63, 127):
        g = Grid(n)
        out = solve_P(mode(k, g), g)
        errs.append(np.max(np.abs(out.values - sech(k * math.pi) * np.sin(k * np.pi * g.y))))
    for a, b in zip(errs, errs[1:]):
        assert 3.0 <= a / b <= 5.0


def test_matches_direct_assembly():
    n = 15
    g = Grid(n)
    P, _ = assemble_forward(n)
    D, _ = assemble_adjoint(n)
    A = make_operator(g)
    cols = np.column_stack([A.apply(HVector(np.eye(n)[j], g.h)).values for j in range(n)])
    rows = np.column_stack([A.apply_adjoint(HVector(np.eye(n)[j], g.h)).values for j in range(n)])
    assert np.max(np.abs(cols - P)) <= 1e-12
    assert np.max(np.abs(rows - D)) <= 1e-12
    # weights are equal on both sides, so the adjoint is the plain transpose
    assert np.max(np.abs(P.T - D)) <= 1e-12


@pytest.mark.parametrize("n", [15, 31, 63, 127])
def test_adjoint_defect(n):
    assert adjoint_defect(make_operator(Grid(n)), trials=10) <= 1e-8


def test_operator_norm_against_first_mode():
    est = operator_norm_sq(make_operator(Grid(63)))
    s2 = sech(math.pi) ** 2
    assert 0.9 * s2 <= est.value <= 1.01 * s2
    assert est.value <= 1.0


def test_five_point_residual():
    g = Grid(31)
    q = g.y * (1 - g.y) * np.exp(g.y)
    u = solve_P_field(q, g)
    lap = u[:-2, 1:-1] + u[2:, 1:-1] + u[1:-1, :-2] + u[1:-1, 2:] - 4 * u[1:-1, 1:-1]
    assert np.max(np.abs(lap)) <= 1e-12
    # ghost-node Neumann row at x = 0: u_{-1} = u_1
    edge = 2 * u[1, 1:-1] + u[0, :-2] + u[0, 2:] - 4 * u[0, 1:-1]
    assert np.max(np.abs(edge)) <= 1e-12
    assert np.allclose(u[-1, 1:-1], q) and np.all(u[:, 0] == 0) and np.all(u[:, -1] == 0)
    assert np.allclose(u[0, 1:-1], solve_P(q, g).values, rtol=0, atol=1e-14)


def test_oracle_inexactness_is_second_order():
    # gradient error against a grid four times finer, at the shared nodes
    def gradient(n):
        g = Grid(n)
        f = sech(math.pi) * np.sin(np.pi * g.y) + 0.5 * sech(2 * math.pi) * np.sin(2 * np.pi * g.y)
        o = least_squares_oracle(make_operator(g), boundary_data(f, g), L=1.0)
        return o.gradient(boundary_data(g.y * (1 - g.y) * np.exp(g.y), g)).values

    hs, deltas = [], []
    for n in (15, 31, 63, 127):
        fine = gradient(4 * (n + 1) - 1)[3::4]
        deltas.append(np.max(np.abs(gradient(n) - fine)))
        hs.append(1.0 / (n + 1))
    p = np.polyfit(np.log(hs), np.log(deltas), 1)[0]
    assert abs(p - 2.0) <= 0.4


def test_singular_values_decay_per_mode():
    g = Grid(63)
    A = make_operator(g)
    gains = [norm(A.apply(mode(k, g))) / norm(mode(k, g)) for k in (1, 2, 3)]
    assert all(a / b >= 20 for a, b in zip(gains, gains[1:]))


# ---------------------------------------------------------------- inverse problem


def test_inverse_zero_data():
    g = Grid(15)
    q, log = inverse_solve(HVector.zeros(15, g.h), g)
    assert log.converged and norm(q) == 0.0


def test_inverse_single_mode_primal_stm():
    g = Grid(63)
    f = boundary_data(sech(math.pi) * np.sin(np.pi * g.y), g)
    q, log = inverse_solve(f, g, "primal_least_squares", "stm", 1e-14, L=None)
    assert log.converged
    assert norm(q - mode(1, g)) <= 1e-2


def test_inverse_rejects_bad_arguments():
    g = Grid(15)
    with pytest.raises(ValueError):
        inverse_solve(HVector.zeros(14, g.h), g)
    with pytest.raises(ValueError):
        inverse_solve(HVector.zeros(15, g.h), g, approach="tikhonov")
    with pytest.raises(ValueError):
        inverse_solve(HVector.zeros(15, g.h) + HVector(np.ones(15), g.h), g, "primal_least_squares", "newton")


def test_noisy_data_early_stopping():
    g = Grid(63)
    q_true = boundary_data(np.sin(np.pi * g.y) + 0.5 * np.sin(2 * np.pi * g.y), g)
    f = make_operator(g).apply(q_true)
    noise = boundary_data(1e-3 * np.random.default_rng(0).standard_normal(g.n), g)
    # discrepancy-principle stop: residual at 1.1 times the noise level
    stop = StopRule.objective_below(0.5 * (1.1 * norm(noise)) ** 2) | StopRule.iterations(100_000)
    q_clean, log_clean = inverse_solve(f, g, "primal_least_squares", "gd", stop=stop, L=None)
    q_noisy, log_noisy = inverse_solve(f + noise, g, "primal_least_squares", "gd", stop=stop, L=None)
    assert log_clean.converged and log_noisy.converged
    assert norm(q_noisy - q_true) <= 10 * norm(q_clean - q_true)


def test_boundary_csv_roundtrip(tmp_path):
    g = Grid(15)
    v = boundary_data(np.sin(np.pi * g.y) / 3, g)
    path = tmp_path / "f.csv"
    write_boundary_csv(path, v, g)
    assert path.read_text().splitlines()[0] == "y,value"
    back, g2 = read_boundary_csv(path)
    assert g2.n == 15 and back == v


def test_boundary_csv_rejects_wrong_grid(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("y,value\n0.1,1.0\n0.2,1.0\n0.3,1.0\n")
    with pytest.raises(ValueError):
        read_boundary_csv(path)
