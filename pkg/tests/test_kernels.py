import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reifsolve.kernels import (KernelDomainError, KernelSpec, anisotropic_cos2, isotropic,
                               kernel_eval, modulated_two_level, rescale_kernel, sample_points,
                               sphere_area, tail_mass, to_config, validate_ellipticity)

SPECS = [isotropic(2, 0.5), isotropic(3, 0.3), anisotropic_cos2(2, 0.7, 1.5, 0.5),
         modulated_two_level(2, 0.5, 1.0, 1.0, 2.0), modulated_two_level(3, 0.4, 0.3, 2.0, 1.0)]


def test_isotropic_ratios_are_one():
    rep = validate_ellipticity(isotropic(2, 0.5), 1000, seed=0)
    assert rep.min_ratio == pytest.approx(1.0, abs=1e-12)
    assert rep.max_ratio == pytest.approx(1.0, abs=1e-12)
    assert rep.ok


def test_anisotropic_range_oracle():
    # factor 1.5 + 0.5 cos(2 theta) ranges over [1, 2]
    rep = validate_ellipticity(anisotropic_cos2(2, 0.5, 1.5, 0.5, lam=1.0, Lam=2.0), 1000, seed=1)
    assert rep.min_ratio >= 1.0 and rep.max_ratio <= 1.0 and rep.ok


def test_modulation_below_lambda_is_flagged():
    bad = KernelSpec(n=2, s=0.5, lam=1.0, Lam=2.0, family="modulated",
                     func=lambda z: np.where(np.linalg.norm(z, axis=-1) < 1, 0.5, 1.5))
    rep = validate_ellipticity(bad, 1000, seed=2)
    assert rep.min_ratio == pytest.approx(0.5)
    assert not rep.ok


@pytest.mark.parametrize("spec", SPECS, ids=lambda k: f"{k.family}-{k.n}")
def test_symmetry(spec):
    y = sample_points(spec.n, 1000, np.random.default_rng(3))
    k, km = kernel_eval(spec, y), kernel_eval(spec, -y)
    assert np.all(np.abs(k - km) <= 1e-12 * k)


@pytest.mark.parametrize("spec", SPECS, ids=lambda k: f"{k.family}-{k.n}")
def test_ellipticity(spec):
    assert validate_ellipticity(spec, 1000, seed=4).ok


@pytest.mark.parametrize("spec", SPECS, ids=lambda k: f"{k.family}-{k.n}")
def test_rescaling_identity(spec):
    rng = np.random.default_rng(5)
    y = sample_points(spec.n, 1000, rng)
    r = 10.0 ** rng.uniform(-2, 2, 1000)
    for yi, ri in zip(y[:200], r[:200]):
        lhs = kernel_eval(rescale_kernel(spec, ri), yi[None])[0]
        rhs = ri ** (spec.n + 2 * spec.s) * kernel_eval(spec, ri * yi[None])[0]
        assert abs(lhs - rhs) <= 1e-12 * abs(rhs)


@given(st.floats(0.01, 0.99), st.integers(2, 4), st.floats(1e-3, 1e3))
@settings(max_examples=50, deadline=None)
def test_isotropic_is_power_law(s, n, r):
    y = np.zeros(n)
    y[0] = r
    assert kernel_eval(isotropic(n, s), y[None])[0] == pytest.approx(r ** (-n - 2 * s), rel=1e-13)


@given(st.floats(0.05, 20.0))
@settings(max_examples=30, deadline=None)
def test_rescale_composes(r):
    K = modulated_two_level(2, 0.5, 1.0, 1.0, 3.0)
    a = rescale_kernel(rescale_kernel(K, r), 2.0)
    b = rescale_kernel(K, 2.0 * r)
    assert a.scale == pytest.approx(b.scale, rel=1e-14)


def test_invalid_specs():
    with pytest.raises(KernelDomainError):
        isotropic(2, 1.0)
    with pytest.raises(KernelDomainError):
        isotropic(1, 0.5)
    with pytest.raises(KernelDomainError):
        KernelSpec(n=2, s=0.5, lam=2.0, Lam=1.0)
    with pytest.raises(KernelDomainError):
        kernel_eval(isotropic(2, 0.5), np.zeros((1, 2)))
    with pytest.raises(KernelDomainError):
        rescale_kernel(isotropic(2, 0.5), 0.0)


def test_tail_mass_isotropic():
    # 2 pi R^(-2s) / (2s) = pi at R = 2, s = 1/2
    m, hw = tail_mass(isotropic(2, 0.5), 2.0)
    assert m == pytest.approx(np.pi, rel=1e-14) and hw == 0.0
    assert sphere_area(3) == pytest.approx(4 * np.pi)


def test_to_config_roundtrip_fields():
    cfg = to_config(modulated_two_level(2, 0.5, 0.5, 1.0, 2.0))
    assert cfg["lambda"] == 1.0 and cfg["Lambda"] == 2.0 and cfg["radius"] == 0.5
