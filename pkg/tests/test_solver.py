import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from oracles import ball_torsion_errors, torsion_constant_closed_form, torsion_constant_evaluated

from reifsolve.artifacts import read_csv
from reifsolve.geometry import make_domain
from reifsolve.kernels import anisotropic_cos2, isotropic, modulated_two_level
from reifsolve.solver import (ConvergenceError, GridMismatch, assemble, discrete_comparison,
                              make_grid, residual, solve_dirichlet)

K = isotropic(2, 0.5)


@pytest.fixture(scope="module")
def small():
    D = make_domain("ball")
    g = make_grid(D, 1 / 8, box=([-1.25, -1.25], [1.25, 1.25]))
    return D, g, assemble(K, D, g)


def test_grid_interior_and_index(small):
    D, g, _ = small
    pts = g.interior_points()
    assert np.all(D.dist(pts) >= g.h / 2)
    assert len(np.unique(g.interior_index)) == g.size == len(pts)


@pytest.mark.parametrize("kernel", [K, anisotropic_cos2(2, 0.3, 1.5, 0.5),
                                    modulated_two_level(2, 0.7, 0.3, 2.0, 1.0)],
                         ids=["iso", "aniso", "modulated"])
def test_m_matrix_sign_pattern(kernel):
    D = make_domain("ball")
    g = make_grid(D, 1 / 6, box=([-1.2, -1.2], [1.2, 1.2]))
    A = assemble(kernel, D, g).to_dense()
    off = A - np.diag(np.diag(A))
    assert np.all(np.diag(A) > 0) and np.all(off <= 0)
    assert np.all(A.sum(axis=1) >= 0)
    assert np.allclose(A, A.T, rtol=0, atol=1e-12 * np.abs(A).max())


def test_constants_annihilated_on_full_stencil(small):
    D, g, A = small
    out = A.apply_full(np.ones(g.shape), outside=1.0)
    assert np.max(np.abs(out)) <= 1e-9 * A.diag


def test_linear_annihilated_at_centre(small):
    D, g, A = small
    x1 = g.coords()[..., 0]
    out = A.apply_full(x1)
    centre = np.argmin(np.linalg.norm(g.interior_points(), axis=1))
    assert abs(out[centre]) <= 1e-12 * A.diag


def test_row_tails_grow_toward_boundary(small):
    D, g, A = small
    d = g.distances()
    assert np.all(A.tails > 0)
    assert A.tails[d < 0.2].mean() > A.tails[d > 0.5].mean()


def test_zero_rhs_gives_zero(small):
    D, g, A = small
    u = solve_dirichlet(A, np.zeros(g.size))
    assert np.all(u.values == 0)


def test_residual_contract(small):
    D, g, A = small
    f = np.ones(g.size)
    u = solve_dirichlet(A, f, tol=1e-10)
    assert residual(A, u, f) <= 1e-10
    assert residual(A, np.zeros(g.size), f) == 1.0
    zeta = 1e-3
    v = u.values.copy()
    v[7] += zeta
    assert residual(A, v, f) <= residual(A, u, f) + A.diag * zeta * (1 + 1e-12)


def test_nonconvergence_raises(small):
    D, g, A = small
    with pytest.raises(ConvergenceError):
        solve_dirichlet(A, np.ones(g.size), tol=1e-14, max_iter=2)


def test_shape_mismatch(small):
    D, g, A = small
    with pytest.raises(GridMismatch):
        solve_dirichlet(A, np.ones(g.size + 1))


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_maximum_principle(seed):
    D = make_domain("ball")
    g = make_grid(D, 1 / 8, box=([-1.25, -1.25], [1.25, 1.25]))
    A = assemble(K, D, g)
    rng = np.random.default_rng(seed)
    f = rng.uniform(0, 1, g.size) * (rng.uniform(size=g.size) < 0.3)
    assert np.all(solve_dirichlet(A, f).values >= 0)


def test_comparison_trivial_cases(small):
    D, g, A = small
    u = solve_dirichlet(A, np.ones(g.size))
    ub = u.box_values()
    rep = discrete_comparison(A, ub, ub)
    assert rep["holds"] and rep["worst_gap"] == 0.0
    rep = discrete_comparison(A, ub, ub + 0.5)
    assert rep["hypotheses_hold"] and rep["conclusion"]


def test_radial_symmetry():
    D = make_domain("ball")
    g = make_grid(D, 1 / 16, box=([-1.125, -1.125], [1.125, 1.125]))
    u = solve_dirichlet(assemble(K, D, g), np.ones(g.size), tol=1e-12).box_values()
    for other in (u[::-1, :], u[:, ::-1], u.T):
        assert np.max(np.abs(other - u)) <= 1e-8


def test_thread_count_does_not_change_bits():
    D = make_domain("koch_flat", {"eta": 0.1, "depth": 3})
    g = make_grid(D, 1 / 32, box=([-1, -0.5], [1, 1.5]))
    a = solve_dirichlet(assemble(K, D, g, threads=1), np.ones(g.size)).values
    b = solve_dirichlet(assemble(K, D, g, threads=2), np.ones(g.size)).values
    assert np.array_equal(a, b)


def test_torsion_constant_oracles_agree():
    for s in (0.3, 0.5, 0.7):
        r = torsion_constant_evaluated(s)
        assert abs(r.value - torsion_constant_closed_form(2, s)) <= r.error_bound


def test_ball_torsion_coarse():
    err, top, _ = ball_torsion_errors(1 / 32)
    assert err <= 0.1 * top


def test_field_csv_and_triplets(tmp_path, small):
    D, g, A = small
    u = solve_dirichlet(A, np.ones(g.size))
    u.to_csv(tmp_path / "u.csv")
    head, rows = read_csv(tmp_path / "u.csv")
    assert head == ["x1", "x2", "u"] and len(rows) == g.size
    assert float(rows[0][2]) == u.values[0]
    assert b"\r" not in (tmp_path / "u.csv").read_bytes()
    A.dump_triplets(tmp_path / "A.txt")
    head, rows = read_csv(tmp_path / "A.txt")
    assert head == ["row", "col", "weight"]
    dense = A.to_dense()
    assert len(rows) == np.count_nonzero(dense)


def test_interpolation_reproduces_nodes(small):
    D, g, A = small
    u = solve_dirichlet(A, np.ones(g.size))
    pts = g.interior_points()
    assert np.allclose(u(pts), u.values, rtol=0, atol=1e-14)
