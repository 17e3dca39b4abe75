"""Kernels comparable to the fractional Laplacian.

A kernel is ``K(y) = f(y) |y|^(-n-2s)`` with an even factor ``f`` taking
values in ``[lam, Lam]``.  Three families are supported:

isotropic
    ``f == 1`` (unnormalized, no ``c_{n,s}`` constant).
anisotropic
    ``f(y) = a(y/|y|)`` for an even angular function ``a``.  The built-in
    angular profile ``cos2`` is ``a = mean + amp*(2*w_1**2 - 1)``, which in the
    plane is ``mean + amp*cos(2*theta)``.
modulated
    ``f(y) = m(scale*y)`` for a bounded measurable ``m``, symmetrized as
    ``(m(y) + m(-y))/2``.  The built-in profile ``two_level`` equals
    ``inner`` for ``|y| < radius`` and ``outer`` otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

FAMILIES = ("isotropic", "anisotropic", "modulated")

# backend codes for the compiled weight-table kernel
CODE_ISOTROPIC = 0
CODE_COS2 = 1
CODE_TWO_LEVEL = 2


class KernelDomainError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    n: int
    s: float
    lam: float = 1.0
    Lam: float = 1.0
    family: str = "isotropic"
    profile: Optional[str] = None
    params: tuple = ()
    scale: float = 1.0
    func: Optional[Callable] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise KernelDomainError(f"dimension must be an integer >= 2, got {self.n}")
        if not 0.0 < self.s < 1.0:
            raise KernelDomainError(f"order s must lie in (0, 1), got {self.s}")
        if not 0.0 < self.lam <= self.Lam:
            raise KernelDomainError("ellipticity constants need 0 < lam <= Lam")
        if self.family not in FAMILIES:
            raise KernelDomainError(f"unknown kernel family {self.family!r}")
        if self.family == "anisotropic" and self.profile is None and self.func is None:
            raise KernelDomainError("anisotropic kernel needs a profile or an angular function")
        if self.family == "modulated" and self.profile is None and self.func is None:
            raise KernelDomainError("modulated kernel needs a profile or a modulation function")
        if self.scale <= 0:
            raise KernelDomainError("scale must be positive")

    # -- evaluation -------------------------------------------------------
    @property
    def homogeneous(self) -> bool:
        return self.family != "modulated"

    def factor(self, y) -> np.ndarray:
        """The bounded factor ``K(y) |y|^(n+2s)``, vectorized over the last axis."""
        y = np.asarray(y, dtype=float)
        r = np.linalg.norm(y, axis=-1)
        if self.family == "isotropic":
            return np.ones_like(r)
        if self.family == "anisotropic":
            with np.errstate(invalid="ignore", divide="ignore"):
                w = y / r[..., None]
            if self.func is not None:
                return 0.5 * (np.asarray(self.func(w), float) + np.asarray(self.func(-w), float))
            mean, amp = self.params
            return mean + amp * (2.0 * w[..., 0] ** 2 - 1.0)
        z = self.scale * y
        if self.func is not None:
            return 0.5 * (np.asarray(self.func(z), float) + np.asarray(self.func(-z), float))
        radius, inner, outer = self.params
        return np.where(np.linalg.norm(z, axis=-1) < radius, inner, outer)

    def __call__(self, y) -> np.ndarray:
        return kernel_eval(self, y)

    def backend_code(self):
        """(code, params) for the compiled table routine, or None for callables."""
        if self.func is not None:
            return None
        if self.family == "isotropic":
            return CODE_ISOTROPIC, np.zeros(3)
        if self.family == "anisotropic":
            return CODE_COS2, np.array([self.params[0], self.params[1], 0.0])
        radius, inner, outer = self.params
        return CODE_TWO_LEVEL, np.array([radius / self.scale, inner, outer])

    def sphere_mean_factor(self) -> float:
        """Mean of the angular factor over the unit sphere (homogeneous kernels)."""
        if self.family == "isotropic":
            return 1.0
        if self.func is None and self.family == "anisotropic":
            mean, amp = self.params
            # E[w_1^2] = 1/n on the sphere
            return mean + amp * (2.0 / self.n - 1.0)
        rng = np.random.default_rng(12345)
        w = rng.standard_normal((200_000, self.n))
        w /= np.linalg.norm(w, axis=1, keepdims=True)
        return float(np.mean(self.factor(w)))


def isotropic(n: int, s: float) -> KernelSpec:
    return KernelSpec(n=n, s=s)


def anisotropic_cos2(n: int, s: float, mean: float, amp: float,
                     lam: Optional[float] = None, Lam: Optional[float] = None) -> KernelSpec:
    lam = mean - abs(amp) if lam is None else lam
    Lam = mean + abs(amp) if Lam is None else Lam
    return KernelSpec(n=n, s=s, lam=lam, Lam=Lam, family="anisotropic",
                      profile="cos2", params=(float(mean), float(amp)))


def modulated_two_level(n: int, s: float, radius: float, inner: float, outer: float,
                        lam: Optional[float] = None, Lam: Optional[float] = None) -> KernelSpec:
    lam = min(inner, outer) if lam is None else lam
    Lam = max(inner, outer) if Lam is None else Lam
    return KernelSpec(n=n, s=s, lam=lam, Lam=Lam, family="modulated",
                      profile="two_level", params=(float(radius), float(inner), float(outer)))


def kernel_eval(spec: KernelSpec, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != spec.n:
        raise KernelDomainError(f"expected points of dimension {spec.n}")
    r = np.linalg.norm(y, axis=-1)
    if np.any(r == 0):
        raise KernelDomainError("kernel is singular at the origin")
    return spec.factor(y) * r ** (-(spec.n + 2 * spec.s))


def rescale_kernel(spec: KernelSpec, r: float) -> KernelSpec:
    """Kernel ``K_r(y) = r^(n+2s) K(r y)`` of the operator acting on ``u(r .)``."""
    if not r > 0:
        raise KernelDomainError("rescaling factor must be positive")
    if spec.homogeneous:
        return spec
    return replace(spec, scale=spec.scale * r)


@dataclass
class EllipticityReport:
    min_ratio: float
    max_ratio: float
    symmetric: bool
    max_asymmetry: float

    @property
    def ok(self) -> bool:
        # the bounded factor is recovered as K(y) |y|^(n+2s), which rounds
        return self.min_ratio >= 1.0 - 1e-12 and self.max_ratio <= 1.0 + 1e-12 and self.symmetric


def sample_points(n: int, count: int, rng, decades: float = 6.0) -> np.ndarray:
    w = rng.standard_normal((count, n))
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    r = 10.0 ** rng.uniform(-decades / 2, decades / 2, size=count)
    return w * r[:, None]


def validate_ellipticity(spec: KernelSpec, sample_count: int, seed: int) -> EllipticityReport:
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    y = sample_points(spec.n, sample_count, np.random.default_rng(seed))
    k = kernel_eval(spec, y)
    km = kernel_eval(spec, -y)
    bounded = k * np.linalg.norm(y, axis=1) ** (spec.n + 2 * spec.s)
    asym = np.max(np.abs(k - km) / k)
    return EllipticityReport(
        min_ratio=float(bounded.min() / spec.lam),
        max_ratio=float(bounded.max() / spec.Lam),
        symmetric=bool(asym <= 1e-12),
        max_asymmetry=float(asym),
    )


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in R^n."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def tail_mass(spec: KernelSpec, radius: float):
    """Kernel mass outside ``B_radius`` as (estimate, half-width).

    Exact for homogeneous kernels; modulated kernels are bracketed by
    ``[lam, Lam]`` times the isotropic mass.
    """
    iso = sphere_area(spec.n) * radius ** (-2 * spec.s) / (2 * spec.s)
    if spec.homogeneous:
        return iso * spec.sphere_mean_factor(), 0.0
    return 0.5 * (spec.lam + spec.Lam) * iso, 0.5 * (spec.Lam - spec.lam) * iso


def to_config(spec: KernelSpec) -> dict:
    out = {"family": spec.family, "n": spec.n, "s": spec.s, "lambda": spec.lam, "Lambda": spec.Lam}
    if spec.profile == "cos2":
        out.update(profile="cos2", mean=spec.params[0], amp=spec.params[1])
    elif spec.profile == "two_level":
        out.update(profile="two_level", radius=spec.params[0], inner=spec.params[1],
                   outer=spec.params[2])
    return out
