"""Boundary growth exponents, the dyadic decay audit and pointwise bounds of solved fields."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .artifacts import read_kv
from .geometry import make_domain, split_rng
from .kernels import isotropic
from .solver import assemble, make_grid, solve_dirichlet

MIN_FIT_POINTS = 4


class FitError(ValueError):
    pass


@dataclass
class ExponentFit:
    x0: np.ndarray
    radii: np.ndarray
    sup_values: np.ndarray
    alpha: float = math.nan
    C: float = math.nan
    r2: float = math.nan
    used: np.ndarray = None
    truncated: bool = False

    def gamma(self, s: float) -> float:
        """Exponent loss ``s - alpha`` (0 when the fit reaches ``s``)."""
        return max(s - self.alpha, 0.0)

    def csv_rows(self):
        return [(*self.x0, r, m) for r, m in zip(self.radii, self.sup_values)]


def _node_field(u):
    g = u.grid
    return g.interior_points(), np.asarray(u.values, float), g


def boundary_growth(u, domain, x0, radii) -> ExponentFit:
    """``sup |u|`` over interior nodes in ``B_r(x0)`` for decreasing radii."""
    x0 = np.asarray(x0, float)
    radii = np.sort(np.asarray(radii, float))[::-1]
    if np.any(np.diff(radii) >= 0):
        raise ValueError("radii must be distinct")
    if abs(domain.sd(x0[None])[0]) > max(domain.sampler_tol, 1e-9) * 10 + 1e-9:
        raise ValueError("x0 is not on the boundary")
    pts, vals, _ = _node_field(u)
    dist = np.linalg.norm(pts - x0, axis=1)
    sups = []
    keep = []
    for r in radii:
        m = dist < r
        if not np.any(m):
            break
        sups.append(float(np.max(np.abs(vals[m]))))
        keep.append(r)
    return ExponentFit(x0=x0, radii=np.array(keep), sup_values=np.array(sups),
                       truncated=len(keep) < len(radii))


def fit_holder_exponent(fit: ExponentFit, tol: float = 1e-8) -> ExponentFit:
    """Least squares of ``log sup`` on ``log r``; sups below ``10 tol max(sup)`` are left out."""
    sup = np.asarray(fit.sup_values, float)
    floor = 10 * tol * (sup.max() if sup.size else 0.0)
    used = sup > max(floor, 0.0)
    if np.count_nonzero(used) < MIN_FIT_POINTS:
        raise FitError(f"need at least {MIN_FIT_POINTS} radii with nonzero sup")
    x, y = np.log(fit.radii[used]), np.log(sup[used])
    alpha, icpt = np.polyfit(x, y, 1)
    res = y - (alpha * x + icpt)
    tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - float(np.sum(res ** 2)) / tot if tot > 0 else 1.0
    fit.alpha, fit.C, fit.r2, fit.used = float(alpha), float(math.exp(icpt)), r2, used
    return fit


def default_radii(h: float, feature: float = 1.0, count: int = 10) -> np.ndarray:
    """Fit window ``[8h, feature/2]``, geometric, largest first."""
    return np.geomspace(0.5 * feature, 8 * h, count)


@dataclass
class InductionAudit:
    rho: float
    sigma: float
    levels: np.ndarray
    M: np.ndarray
    ratios: np.ndarray
    max_ratio: float
    slack: float
    k_max: int
    reduced: bool = False

    @property
    def passed(self) -> bool:
        return bool(self.max_ratio <= 1 + self.slack)

    def csv_rows(self):
        return [(int(k), m, r) for k, m, r in zip(self.levels, self.M, self.ratios)]


def induction_audit(u, domain, x0, rho: float, sigma: float, k_max: int, C_grid: float = 1.0,
                    normalize: bool = True) -> InductionAudit:
    """``M_k = |u~|_inf`` on ``Omega cap B_{rho^k}(x0)`` against ``rho^(k sigma)``.

    Passes iff ``max_k M_k / rho^(k sigma) <= 1 + C_grid h^sigma / rho^(k_max sigma)``.
    Levels with ``rho^k < 2h`` are dropped (``reduced`` is then set).
    """
    if not 0 < rho < 1 or sigma <= 0:
        raise ValueError("need 0 < rho < 1 and sigma > 0")
    pts, vals, g = _node_field(u)
    h = g.h
    reduced = False
    while k_max > 0 and rho ** k_max < 2 * h:
        k_max -= 1
        reduced = True
    scale = float(np.max(np.abs(vals))) if normalize else 1.0
    ut = np.abs(vals) / (scale if scale > 0 else 1.0)
    dist = np.linalg.norm(pts - np.asarray(x0, float), axis=1)
    ks = np.arange(k_max + 1)
    M = np.array([float(ut[dist < rho ** k].max()) if np.any(dist < rho ** k) else 0.0 for k in ks])
    ratios = M / rho ** (ks * sigma)
    slack = C_grid * h ** sigma / rho ** (k_max * sigma)
    return InductionAudit(rho, sigma, ks, M, ratios, float(ratios.max()), float(slack), int(k_max), reduced)


def load_barrier_params(path) -> tuple:
    """``(rho, sigma)`` from a fitted-parameter file written by ``verify-comparison``."""
    p = read_kv(path)
    try:
        return float(p["rho"]), float(p["sigma"])
    except KeyError as exc:
        raise ValueError(f"parameter file lacks {exc}") from None


def pointwise_bound_check(u, domain, sigma: float, region=None) -> dict:
    """``max |u(x)| / d(x)^sigma`` over interior nodes in ``region``.

    ``region`` is ``(center, radius)``, a boolean mask over interior nodes, or
    ``None`` for all nodes.
    """
    pts, vals, g = _node_field(u)
    d = domain.dist(pts)
    if region is None:
        m = np.ones(len(pts), bool)
    elif isinstance(region, tuple):
        c, r = region
        m = np.linalg.norm(pts - np.asarray(c, float), axis=1) < r
    else:
        m = np.asarray(region, bool)
    m &= d > 0
    if not np.any(m):
        return {"max_ratio": 0.0, "argmax": None, "nodes": 0}
    ratio = np.abs(vals[m]) / d[m] ** sigma
    i = int(np.argmax(ratio))
    return {"max_ratio": float(ratio[i]), "argmax": pts[m][i], "nodes": int(m.sum())}


def interior_seminorm(u, ball, sigma: float, domain=None, max_pairs: int = 10_000) -> float:
    """``max |u(x) - u(y)| / |x - y|^sigma`` over node pairs in ``ball = (center, radius)``.

    At most ``max_pairs`` pairs, drawn by a fixed-seed generator.
    """
    pts, vals, g = _node_field(u)
    c, r = np.asarray(ball[0], float), float(ball[1])
    if domain is not None and float(domain.dist(c[None])[0]) - r < 4 * g.h:
        raise ValueError("ball must stay 4h away from the boundary")
    m = np.linalg.norm(pts - c, axis=1) < r
    p, v = pts[m], vals[m]
    k = len(p)
    if k < 2:
        return 0.0
    total = k * (k - 1) // 2
    if total <= max_pairs:
        i, j = np.triu_indices(k, 1)
    else:
        rng = split_rng(0, k)
        i = rng.integers(0, k, max_pairs)
        j = rng.integers(0, k - 1, max_pairs)
        j = j + (j >= i)
    dist = np.linalg.norm(p[i] - p[j], axis=1)
    return float(np.max(np.abs(v[i] - v[j]) / dist ** sigma))


# -- experiments --------------------------------------------------------------

@dataclass
class SweepRow:
    eta: float
    alpha: float
    C: float
    r2: float
    iterations: int
    fit: ExponentFit = field(repr=False, default=None)
    field: object = field(repr=False, default=None)


def koch_growth(eta: float, s: float = 0.5, h: float = 1 / 128, depth: int = 3,
                box=((-1.0, -0.5), (1.0, 1.5)), radii=None, tol: float = 1e-8, kernel=None,
                threads: int = 1) -> SweepRow:
    """Solve ``Lu = 1`` on the koch_flat domain in ``box`` and fit the exponent at the tip."""
    D = make_domain("koch_flat", {"eta": eta, "depth": depth})
    K = isotropic(2, s) if kernel is None else kernel
    g = make_grid(D, h, box=box)
    A = assemble(K, D, g, threads=threads)
    u = solve_dirichlet(A, np.ones(g.size), tol=tol)
    radii = default_radii(h) if radii is None else radii
    fit = fit_holder_exponent(boundary_growth(u, D, D.anchor(), radii), tol=tol)
    return SweepRow(eta, fit.alpha, fit.C, fit.r2, u.iterations, fit, u)


def eta_sweep(etas=(0.2, 0.1, 0.05, 0.02), **kw) -> list:
    return [koch_growth(e, **kw) for e in etas]
