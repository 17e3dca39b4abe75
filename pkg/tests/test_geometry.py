import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from oracles import sagitta_oracle, sawtooth_oracles, slab_oracle

from reifsolve.geometry import (CorkscrewParams, DomainError, RegularizedDistance, corkscrew_check,
                                fit_measure_exponent, gmt_measure_ratio, make_domain,
                                measure_bounds, reifenberg_estimate, split_rng)

ALL = [("ball", {}), ("half_space", {}), ("ball_complement", {"eta": 0.05}),
       ("sawtooth", {"slope": 0.2}), ("koch_flat", {"eta": 0.1, "depth": 3}),
       ("perturbed_halfspace", {"eta": 0.05}), ("slit", {})]


def test_closed_form_signed_distances():
    x = np.random.default_rng(0).uniform(-2, 2, (100, 2))
    assert np.array_equal(make_domain("half_space").sd(x), -x[:, 1])
    assert np.allclose(make_domain("ball").sd(x), np.linalg.norm(x, axis=1) - 1, atol=0, rtol=0)


@pytest.mark.parametrize("kind,params", ALL, ids=[k for k, _ in ALL])
def test_sd_is_lipschitz(kind, params):
    D = make_domain(kind, params)
    rng = np.random.default_rng(1)
    x = rng.uniform(-1.5, 1.5, (2000, 2))
    y = x + rng.normal(scale=0.3, size=x.shape)
    assert np.all(np.abs(D.sd(x) - D.sd(y)) <= np.linalg.norm(x - y, axis=1) + 1e-9)


@pytest.mark.parametrize("kind,params", ALL, ids=[k for k, _ in ALL])
def test_boundary_samples_on_boundary(kind, params):
    D = make_domain(kind, params)
    z = D.sample_boundary(500, seed=2)
    assert len(z) > 0
    assert np.all(np.abs(D.sd(z)) <= D.sampler_tol + 1e-12)


def test_ball_complement_geometry():
    D = make_domain("ball_complement", {"eta": 0.05})
    c = np.asarray(D.params["center"])
    assert c[-1] == pytest.approx(-(0.125 + 0.05))
    assert D.complement_diameter == pytest.approx(0.25)
    assert D.sd(np.zeros((1, 2)))[0] == pytest.approx(-0.05)


def test_invalid_domains():
    with pytest.raises(DomainError):
        make_domain("torus")
    with pytest.raises(DomainError):
        make_domain("koch_flat", {"depth": 9})
    with pytest.raises(DomainError):
        make_domain("ball", {"radius": -1})


@given(st.integers(0, 2 ** 31), st.integers(0, 100))
@settings(max_examples=20, deadline=None)
def test_split_rng_deterministic(seed, k):
    assert split_rng(seed, k).random() == split_rng(seed, k).random()


# -- regularized distance ------------------------------------------------------

def test_half_space_delta_is_mean_over_ball():
    # the average of the linear d over a centred ball is its centre value
    rd = RegularizedDistance(make_domain("half_space"))
    v = rd(np.array([[0.3, 0.5]]))[0]
    assert v == pytest.approx(0.5 / (1 - 0.25), rel=1e-12)
    assert 0.5 <= v <= 0.5 * 5 / 3


def test_ball_complement_delta_sandwich_at_01():
    D = make_domain("ball_complement", {"eta": 0.05})
    rd = RegularizedDistance(D)
    c = np.asarray(D.params["center"])
    v = rd((c + np.array([0.0, 0.125 + 0.1]))[None])[0]
    assert 0.1 <= v <= 0.1 * 5 / 3


@pytest.mark.parametrize("kind,params", ALL[:6], ids=[k for k, _ in ALL[:6]])
def test_sandwich_and_derivative_bounds(kind, params):
    D = make_domain(kind, params)
    rd = RegularizedDistance(D)
    z = D.sample_boundary(40, seed=3)
    rng = np.random.default_rng(4)
    x = z + rng.normal(scale=0.05, size=z.shape)
    x = x[D.dist(x) > 1e-4]
    d = D.dist(x)
    v = rd(x)
    assert np.all(v >= d * (1 - 1e-12)) and np.all(v <= rd.sandwich * d * (1 + 1e-12))
    mb = measure_bounds(rd, x)
    assert np.isfinite(mb["C"]) and mb["C"] <= rd.sandwich + 1e-9
    assert np.isfinite(mb["C1"]) and np.isfinite(mb["C2"])


def test_radial_table_matches_direct():
    D = make_domain("ball_complement", {"eta": 0.0})
    rd = RegularizedDistance(D)
    c = np.asarray(D.params["center"])
    g = np.random.default_rng(5).standard_normal((50, 2))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    x = c + (0.125 + np.geomspace(1e-6, 1e3, 50))[:, None] * g
    assert np.allclose(rd(x), rd.direct(x), rtol=1e-6)


# -- flatness -----------------------------------------------------------------

def test_half_space_is_flat():
    rep = reifenberg_estimate(make_domain("half_space"), 1.0, 8, 4, seed=0, samples_per_ball=1000)
    assert rep.eta_hat <= 0.01 and rep.separation_ok
    assert rep.coverage["pairs_tested"] == 9 * 4


def test_sawtooth_against_oracle():
    m = 0.1
    D = make_domain("sawtooth", {"slope": m, "period": 0.25})
    rep = reifenberg_estimate(D, 1.0, 1, 3, seed=0, anchors=[[0.0, 0.0]])
    peak = [row for row in rep.rows if np.allclose(row["x"], 0.0)]
    through_x, centroid = sawtooth_oracles(m)
    # the sample spacing is inside the 30% window
    assert max(row["defect"] for row in peak) == pytest.approx(through_x, rel=0.3)
    assert max(row["defect_centroid"] for row in peak) == pytest.approx(centroid, rel=0.3)


def test_sawtooth_monotone_in_slope():
    hats = [reifenberg_estimate(make_domain("sawtooth", {"slope": m}), 1.0, 4, 3, seed=1).eta_hat
            for m in (0.05, 0.1, 0.2)]
    assert hats[0] <= hats[1] <= hats[2]


def test_ball_sagitta_oracle():
    R = 1.0
    D = make_domain("ball", {"radius": R})
    rep = reifenberg_estimate(D, 0.5, 1, 3, seed=0)
    r = rep.scales[-1]
    oracle = sagitta_oracle(r, R)
    top = max(row["defect"] for row in rep.rows if row["r"] == r)
    assert top == pytest.approx(oracle, rel=0.3)
    assert oracle == pytest.approx(r / (2 * R), rel=0.05)


def test_koch_depth3_defect():
    D = make_domain("koch_flat", {"eta": 0.05, "depth": 3})
    rep = reifenberg_estimate(D, 0.5, 6, 4, seed=0)
    assert 0.03 <= rep.eta_hat <= 0.08


# -- corkscrew ------------------------------------------------------------------

def test_corkscrew_half_space():
    rep = corkscrew_check(make_domain("half_space"), CorkscrewParams(1.0, 0.4), 6, 4, seed=0)
    assert rep["ok"] and rep["worst_margin"] >= 0.1 - 1e-12


def test_corkscrew_ball_complement():
    D = make_domain("ball_complement", {"eta": 0.05})
    rep = corkscrew_check(D, CorkscrewParams(32.0, 1 / 256), 6, 5, seed=0, r_range=(0.01, 0.25))
    assert rep["ok"]


def test_corkscrew_slit_fails():
    rep = corkscrew_check(make_domain("slit"), CorkscrewParams(1.0, 0.1), 4, 3, seed=0,
                          r_range=(0.05, 0.4))
    assert not rep["ok"]


def test_corkscrew_params_validated():
    with pytest.raises(ValueError):
        CorkscrewParams(1.0, 2.0)


# -- measure ratio -----------------------------------------------------------

@pytest.mark.parametrize("r", [0.05, 0.1, 0.2])
def test_gmt_half_space_slab(r):
    res = gmt_measure_ratio(make_domain("half_space"), np.zeros(2), 1.0, r, 200_000, seed=7)
    assert abs(res["ratio"] - slab_oracle(r)) <= res["ci"] + 1e-12


def test_gmt_slab_value():
    assert slab_oracle(0.1) == pytest.approx(0.0635, abs=1e-4)


def test_gmt_monotone_and_deterministic():
    D = make_domain("koch_flat", {"eta": 0.1, "depth": 4})
    z = D.anchor()
    rows = [gmt_measure_ratio(D, z, 0.5, r, 50_000, seed=3) for r in (0.05, 0.1, 0.2, 0.4)]
    for a, b in zip(rows, rows[1:]):
        assert b["ratio"] >= a["ratio"] - (a["ci"] + b["ci"])
    again = gmt_measure_ratio(D, z, 0.5, 0.1, 50_000, seed=3)
    assert again["ratio"] == rows[1]["ratio"]


def test_gmt_rejects_few_samples():
    with pytest.raises(ValueError):
        gmt_measure_ratio(make_domain("half_space"), np.zeros(2), 1.0, 0.1, 10, seed=0)


def test_koch_measure_exponent_positive():
    D = make_domain("koch_flat", {"eta": 0.05, "depth": 4})
    fit = fit_measure_exponent(D, D.anchor(), 1.0, [0.4, 0.2, 0.1, 0.05], 100_000, seed=0)
    assert 0 < fit["theta"] <= 1.2
