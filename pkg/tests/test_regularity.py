import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reifsolve.geometry import make_domain
from reifsolve.kernels import isotropic
from reifsolve.regularity import (ExponentFit, FitError, boundary_growth, default_radii,
                                  fit_holder_exponent, induction_audit, interior_seminorm,
                                  koch_growth, pointwise_bound_check)
from reifsolve.solver import SolutionField, assemble, make_grid, solve_dirichlet


def _field(D, h, fn, box):
    g = make_grid(D, h, box=box)
    return SolutionField(grid=g, values=fn(g.interior_points(), D))


@pytest.fixture(scope="module")
def half():
    D = make_domain("half_space")
    return D, ((-1, -0.5), (1, 1.5))


def test_zero_field_has_no_fit(half):
    D, box = half
    u = _field(D, 1 / 32, lambda p, D: np.zeros(len(p)), box)
    fit = boundary_growth(u, D, np.zeros(2), default_radii(1 / 32))
    assert np.all(fit.sup_values == 0)
    with pytest.raises(FitError):
        fit_holder_exponent(fit)


def test_power_of_distance_recovered(half):
    D, box = half
    sigma = 0.35
    u = _field(D, 1 / 128, lambda p, D: D.dist(p) ** sigma, box)
    fit = fit_holder_exponent(boundary_growth(u, D, np.zeros(2), default_radii(1 / 128)))
    assert fit.alpha == pytest.approx(sigma, abs=0.02)
    assert fit.r2 > 0.99


def test_exact_power_law_slope():
    r = np.geomspace(0.5, 0.01, 10)
    fit = fit_holder_exponent(ExponentFit(np.zeros(2), r, 3.0 * r ** 0.42))
    assert fit.alpha == pytest.approx(0.42, abs=1e-6) and fit.C == pytest.approx(3.0, rel=1e-6)


@given(st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_noisy_power_law_slope(seed):
    rng = np.random.default_rng(seed)
    r = np.geomspace(0.5, 1 / 16, 10)
    noise = 1 + rng.uniform(-0.05, 0.05, 10)
    sup = r ** 0.4 * noise
    # least-squares slope error is bounded by max|log noise| sum|x - mean| / sum (x - mean)^2
    x = np.log(r) - np.log(r).mean()
    bound = np.max(np.abs(np.log(noise))) * np.abs(x).sum() / (x * x).sum()
    alpha = fit_holder_exponent(ExponentFit(np.zeros(2), r, sup)).alpha
    assert abs(alpha - 0.4) <= bound * (1 + 1e-9)


def test_flat_sups_give_zero_slope():
    r = np.geomspace(0.5, 0.01, 6)
    assert fit_holder_exponent(ExponentFit(np.zeros(2), r, np.ones(6))).alpha == pytest.approx(0, abs=1e-12)


def test_growth_needs_boundary_point(half):
    D, box = half
    u = _field(D, 1 / 32, lambda p, D: D.dist(p), box)
    with pytest.raises(ValueError):
        boundary_growth(u, D, np.array([0.0, 0.3]), default_radii(1 / 32))


def test_torsion_on_ball_exponent():
    D = make_domain("ball")
    h = 1 / 64
    g = make_grid(D, h, box=([-1.05, -1.05], [1.05, 1.05]))
    u = solve_dirichlet(assemble(isotropic(2, 0.5), D, g), np.ones(g.size))
    fit = fit_holder_exponent(boundary_growth(u, D, np.array([1.0, 0.0]), default_radii(h, 0.5)))
    assert fit.alpha == pytest.approx(0.5, abs=0.06)
    pb = pointwise_bound_check(u, D, 0.5)
    assert np.isfinite(pb["max_ratio"]) and pb["max_ratio"] > 0


def test_audit_on_power_law(half):
    D, box = half
    sigma = 0.3
    u = _field(D, 1 / 128, lambda p, D: np.minimum(D.dist(p) ** sigma, 1.0), box)
    ok = induction_audit(u, D, np.zeros(2), 0.5, sigma, 5, normalize=False)
    assert ok.passed and ok.max_ratio <= 1.0 + 1e-12
    bad = induction_audit(u, D, np.zeros(2), 0.5, sigma + 0.3, 5, normalize=False)
    assert not bad.passed
    assert bad.ratios[-1] == bad.max_ratio


def test_audit_drops_unresolved_levels(half):
    D, box = half
    u = _field(D, 1 / 16, lambda p, D: D.dist(p), box)
    a = induction_audit(u, D, np.zeros(2), 0.5, 0.5, 10)
    assert a.reduced and 0.5 ** a.k_max >= 2 / 16
    assert [row[0] for row in a.csv_rows()] == list(range(a.k_max + 1))


def test_pointwise_bounds(half):
    D, box = half
    z = _field(D, 1 / 32, lambda p, D: np.zeros(len(p)), box)
    assert pointwise_bound_check(z, D, 0.4)["max_ratio"] == 0
    u = _field(D, 1 / 32, lambda p, D: D.dist(p) ** 0.4, box)
    assert pointwise_bound_check(u, D, 0.4)["max_ratio"] == pytest.approx(1.0, rel=1e-12)
    inner = pointwise_bound_check(u, D, 0.4, region=(np.array([0.0, 0.5]), 0.2))
    assert 0 < inner["nodes"] < u.grid.size


def test_interior_seminorm(half):
    D, box = half
    c = _field(D, 1 / 32, lambda p, D: np.full(len(p), 2.0), box)
    assert interior_seminorm(c, (np.array([0.0, 0.6]), 0.3), 0.5, D) == 0.0
    lin = _field(D, 1 / 32, lambda p, D: p @ np.array([3.0, 4.0]), box)
    assert interior_seminorm(lin, (np.array([0.0, 0.6]), 0.3), 1.0, D) == pytest.approx(5.0)
    big = _field(D, 1 / 64, lambda p, D: p @ np.array([3.0, 4.0]), box)
    assert interior_seminorm(big, (np.array([0.0, 0.6]), 0.4), 1.0, D, max_pairs=5000) <= 5.0 + 1e-9
    with pytest.raises(ValueError):
        interior_seminorm(lin, (np.array([0.0, 0.2]), 0.3), 1.0, D)


def test_koch_growth_row():
    row = koch_growth(0.1, h=1 / 32, radii=np.geomspace(0.5, 8 / 32, 5))
    assert 0 < row.alpha < 1 and row.r2 > 0.9 and row.iterations > 0
