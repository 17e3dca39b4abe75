import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import dblquad, quad
from oracles import gauss, radial_gauss_oracle

from reifsolve.geometry import make_domain
from reifsolve.kernels import anisotropic_cos2, isotropic, modulated_two_level, rescale_kernel
from reifsolve.nonlocal_op import (GrowthError, PVQuadrature, evaluate_indicator, evaluate_pv,
                                   evaluate_pv_batch, l1_2s_norm, ray_crossings)


def test_constant_is_annihilated():
    for K in (isotropic(2, 0.5), modulated_two_level(2, 0.3, 0.5, 1.0, 2.0)):
        r = evaluate_pv(K, lambda p: np.full(len(p), 3.0), np.array([0.2, -0.1]))
        assert r.value == 0.0 and r.error_bound == 0.0


@pytest.mark.parametrize("s", [0.3, 0.5, 0.7])
def test_gaussian_radial_oracle(s):
    oracle = radial_gauss_oracle(s)
    assert oracle == pytest.approx(2 * math.pi * math.gamma(1 - s) / (2 * s), rel=1e-8)
    r = evaluate_pv(isotropic(2, s), gauss, np.zeros(2))
    assert abs(r.value - oracle) <= r.error_bound


@pytest.mark.parametrize("s", [0.3, 0.7])
def test_gaussian_oracle_ray_mode(s):
    oracle = radial_gauss_oracle(s)
    r = evaluate_pv(isotropic(2, s), gauss, np.zeros(2), singular_set=lambda p: np.full(len(p), -10.0),
                    growth=(0.0, 0.0))
    assert abs(r.value - oracle) <= r.error_bound


def test_scaling_identity_random_points():
    rng = np.random.default_rng(0)
    for K in (isotropic(2, 0.5), modulated_two_level(2, 0.4, 0.7, 1.0, 2.0)):
        for _ in range(10):
            x = rng.uniform(-1, 1, 2)
            r = float(10 ** rng.uniform(-0.5, 0.5))
            ur = lambda p, r=r: gauss(r * np.asarray(p))
            a = evaluate_pv(rescale_kernel(K, r), ur, x)
            b = evaluate_pv(K, gauss, r * x)
            assert abs(a.value - r ** (2 * K.s) * b.value) <= a.error_bound + r ** (2 * K.s) * b.error_bound


def test_linearity():
    K = isotropic(2, 0.5)
    x = np.array([0.1, 0.2])
    v = lambda p: np.cos(np.asarray(p)[..., 0]) * gauss(0.5 * np.asarray(p))
    ru, rv = evaluate_pv(K, gauss, x), evaluate_pv(K, v, x)
    for a, b in [(2.0, -1.0), (0.5, 3.0)]:
        rw = evaluate_pv(K, lambda p: a * gauss(p) + b * v(p), x)
        bound = rw.error_bound + abs(a) * ru.error_bound + abs(b) * rv.error_bound
        assert abs(rw.value - a * ru.value - b * rv.value) <= bound


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.3, 3.0), st.sampled_from([0.3, 0.5, 0.7]))
@settings(max_examples=20, deadline=None)
def test_positive_at_global_maximum(cx, cy, w, s):
    c = np.array([cx, cy])
    u = lambda p: np.exp(-w * np.sum((np.asarray(p) - c) ** 2, axis=-1))
    r = evaluate_pv(isotropic(2, s), u, c)
    assert r.value >= -r.error_bound


SMOOTH = []
for i in range(20):
    _rng = np.random.default_rng(100 + i)
    _c, _w, _k = _rng.uniform(-0.5, 0.5, 2), _rng.uniform(0.5, 4.0), _rng.uniform(0, 3, 2)
    SMOOTH.append(lambda p, c=_c, w=_w, k=_k: np.cos(np.asarray(p) @ k)
                  * np.exp(-w * np.sum((np.asarray(p) - c) ** 2, axis=-1)))


@pytest.mark.parametrize("i", range(20))
def test_error_bound_honesty(i):
    K = isotropic(2, 0.5)
    x = np.array([0.05, -0.1])
    q = PVQuadrature()
    a = evaluate_pv(K, SMOOTH[i], x, q)
    b = evaluate_pv(K, SMOOTH[i], x, q.refined())
    assert abs(a.value - b.value) < a.error_bound


def test_far_growth_is_rejected():
    K = isotropic(2, 0.5)
    with pytest.raises(GrowthError):
        evaluate_pv(K, lambda p: np.linalg.norm(p, axis=-1) ** 1.2, np.array([0.5, 0.0]))


def test_batch_interface():
    K = isotropic(2, 0.5)
    pts = np.array([[0.0, 0.0], [0.3, 0.1]])
    vals, errs = evaluate_pv_batch(K, gauss, pts)
    assert vals.shape == errs.shape == (2,)
    assert vals[0] == evaluate_pv(K, gauss, pts[0]).value


# -- indicator ---------------------------------------------------------------

def half_space_constant():
    # int_{y_2 < -1} |y|^{-3} dy = int_1^inf int_R (y1^2 + t^2)^{-3/2} dy1 dt
    inner = lambda t: quad(lambda y: (y * y + t * t) ** -1.5, -math.inf, math.inf)[0]
    return quad(inner, 1, math.inf)[0]


@pytest.mark.parametrize("t", [0.1, 0.2, 0.4])
def test_indicator_half_space_homogeneity(t):
    A = half_space_constant()
    r = evaluate_indicator(isotropic(2, 0.5), make_domain("half_space"), np.array([0.3, t]))
    assert abs(r.value - A / t) <= r.error_bound + 1e-6 * A / t
    assert r.error_bound < 1e-3 * r.value


class WholeSpace:
    n = 2

    def sd(self, p):
        return np.full(len(np.atleast_2d(p)), -1e6)

    def dist(self, p):
        return -self.sd(p)

    def complement_bounding_ball(self):
        return None


def test_indicator_empty_complement():
    r = evaluate_indicator(isotropic(2, 0.5), WholeSpace(), np.zeros(2))
    assert r.value == 0.0


def test_indicator_small_ball_positive_near_boundary():
    D = make_domain("ball_complement", {"eta": 0.05})
    c = np.asarray(D.params["center"])
    x = c + np.array([0.0, 0.125 + 0.01])
    r = evaluate_indicator(isotropic(2, 0.5), D, x)
    c0 = (r.value - r.error_bound) * 0.01
    assert c0 > 0


def small_ball_oracle(X, a=0.125):
    # int over B_a(0) of |X e - y|^{-3}, polar about the ball centre
    f = lambda r, th: r * (X * X + r * r - 2 * X * r * math.cos(th)) ** -1.5
    return dblquad(f, 0, 2 * math.pi, 0, a, epsabs=1e-15, epsrel=1e-10)[0]


@pytest.mark.parametrize("dist", [0.01, 0.3, 2.5, 50.0])
@pytest.mark.parametrize("angular", [1024, 4096])
def test_indicator_small_ball_oracle(dist, angular):
    D = make_domain("ball_complement", {"eta": 0.0})
    c = np.asarray(D.params["center"])
    X = 0.125 + dist
    r = evaluate_indicator(isotropic(2, 0.5), D, c + np.array([0.0, X]), angular=angular)
    assert abs(r.value - small_ball_oracle(X)) <= r.error_bound


def test_indicator_ellipticity_bracket():
    K = anisotropic_cos2(2, 0.5, 1.5, 0.5)
    H = make_domain("half_space")
    x = np.array([0.0, 0.2])
    r = evaluate_indicator(K, H, x)
    iso = evaluate_indicator(isotropic(2, 0.5), H, x)
    assert K.lam * iso.value - iso.error_bound - r.error_bound <= r.value
    assert r.value <= K.Lam * iso.value + iso.error_bound + r.error_bound
    assert r.lower <= r.value <= r.upper


def test_indicator_needs_interior_point():
    with pytest.raises(ValueError):
        evaluate_indicator(isotropic(2, 0.5), make_domain("half_space"), np.array([0.0, -0.1]))


def test_ray_crossings_half_space():
    H = make_domain("half_space")
    x = np.array([0.0, 0.3])
    dirs = np.array([[0.0, -1.0], [0.6, -0.8], [1.0, 0.0]])
    idx, t, start, dropped = ray_crossings(H.sd, x, dirs, 1e-3, 10.0)
    got = dict(zip(idx.tolist(), t.tolist()))
    assert got[0] == pytest.approx(0.3, rel=1e-10)
    assert got[1] == pytest.approx(0.3 / 0.8, rel=1e-10)
    assert 2 not in got and dropped == 0


# -- weighted L1 -----------------------------------------------------------------

def test_l1_norm_of_one():
    # 2 pi int_0^inf t / (1 + t^3) dt = 2 pi * 2 pi / (3 sqrt 3)
    assert l1_2s_norm(lambda p: np.ones(len(p)), 2, 0.5) == pytest.approx(
        2 * math.pi * 2 * math.pi / (3 * math.sqrt(3)), rel=1e-4)


def test_l1_norm_zero_and_growth():
    assert l1_2s_norm(lambda p: np.zeros(len(p)), 2, 0.5) == 0.0
    assert math.isfinite(l1_2s_norm(lambda p: np.linalg.norm(p, axis=-1) ** 0.4, 2, 0.5))
    with pytest.raises(GrowthError):
        l1_2s_norm(lambda p: np.linalg.norm(p, axis=-1) ** 1.0, 2, 0.5)


def test_quadrature_shells_tile():
    q = PVQuadrature()
    e = q.shell_edges(1e-3, 1e3)
    assert e[0] == 1e-3 and e[-1] == 1e3 and np.all(np.diff(e) > 0)
    with pytest.raises(ValueError):
        PVQuadrature(growth=1.0)
