"""Pointwise principal-value quadrature of the nonlocal operator.

``Lu(x) = 1/2 int (2u(x) - u(x+y) - u(x-y)) K(y) dy``.  The second difference
is even in ``y`` so only a half sphere of directions is integrated.  Radii are
split into geometric shells; inside each shell the radial weight of
``rho^(-1-2s)`` is integrated exactly and the angular rule is a midpoint
product rule.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import KernelSpec, sphere_area, tail_mass


class GrowthError(ValueError):
    """The integrand grows too fast for the tail integral to converge."""


@dataclass(frozen=True)
class PVQuadrature:
    inner_radius_factor: float = 1e-3
    growth: float = 1.5
    radial_per_shell: int = 4
    min_angular: int = 16
    max_angular: int = 512
    far_cutoff: float = 1e3
    tail_rule: str = "auto"

    def __post_init__(self):
        if self.growth <= 1 or self.radial_per_shell < 1 or self.inner_radius_factor <= 0:
            raise ValueError("invalid quadrature parameters")
        if self.tail_rule not in ("auto", "analytic-isotropic", "bound-bracket"):
            raise ValueError(f"unknown tail rule {self.tail_rule!r}")

    def shell_edges(self, r_in: float, r_out: float) -> np.ndarray:
        """Radii tiling ``(r_in, r_out]`` exactly; last shell is truncated."""
        if r_out <= r_in:
            return np.array([r_in, r_in])
        k = max(1, math.ceil(math.log(r_out / r_in) / math.log(self.growth) - 1e-12))
        e = r_in * self.growth ** np.arange(k + 1)
        e[-1] = r_out
        return e

    def angular_count(self, rho: float, h_local: float) -> int:
        m = max(1.0, 2 * math.pi * rho / h_local)
        m = 2 ** math.ceil(math.log2(m))
        return int(min(self.max_angular, max(self.min_angular, m)))

    def refined(self) -> "PVQuadrature":
        """Double radial and angular resolution."""
        return PVQuadrature(self.inner_radius_factor, math.sqrt(self.growth),
                            self.radial_per_shell * 2, self.min_angular * 2,
                            self.max_angular * 2, self.far_cutoff, self.tail_rule)


@dataclass
class PVResult:
    value: float
    error_bound: float
    inner_error: float = 0.0
    shell_error: float = 0.0
    tail_value: float = 0.0
    tail_error: float = 0.0
    lower: float = math.nan
    upper: float = math.nan


def _half_directions(n: int, m: int):
    """Midpoint directions on the half sphere ``{w_n > 0}`` (n=2: angle in [0, pi))."""
    if n == 2:
        phi = (np.arange(m) + 0.5) * math.pi / m
        return np.stack([np.cos(phi), np.sin(phi)], axis=1), np.full(m, math.pi / m), (m,)
    if n == 3:
        mphi = m
        mz = max(4, min(64, m // 2))
        mphi = min(mphi, 128)
        z = (np.arange(mz) + 0.5) / mz
        phi = (np.arange(mphi) + 0.5) * 2 * math.pi / mphi
        Z, P = np.meshgrid(z, phi, indexing="ij")
        rr = np.sqrt(1 - Z ** 2)
        w = np.stack([(rr * np.cos(P)).ravel(), (rr * np.sin(P)).ravel(), Z.ravel()], axis=1)
        return w, np.full(mz * mphi, 2 * math.pi / (mz * mphi)), (mz, mphi)
    raise ValueError("principal-value quadrature supports n = 2, 3")


def _radial_nodes(a, b, s, k):
    """Sub-annuli of [a, b]: exact weights of rho^(-1-2s), nodes at the first moment."""
    e = np.geomspace(a, b, k + 1)
    lo, hi = e[:-1], e[1:]
    w = (lo ** (-2 * s) - hi ** (-2 * s)) / (2 * s)
    m1 = (hi ** (1 - 2 * s) - lo ** (1 - 2 * s)) / (1 - 2 * s) if abs(1 - 2 * s) > 1e-12 \
        else np.log(hi / lo)
    return m1 / w, w


def _second_diff_err(g, shape, periodic_first):
    """0.5*(|D2 along angle| + |D2 along radius|) per cell; g has shape (k, *shape)."""
    G = g.reshape((g.shape[0],) + shape)
    ax = G.ndim - 1
    da = np.abs(np.roll(G, 1, axis=ax) - 2 * G + np.roll(G, -1, axis=ax))
    if len(shape) == 2:
        # polar index of the equal-area 3D rule is not periodic
        d2 = np.zeros_like(G)
        if shape[0] >= 3:
            d2[:, 1:-1] = np.abs(G[:, 2:] - 2 * G[:, 1:-1] + G[:, :-2])
            d2[:, 0], d2[:, -1] = d2[:, 1], d2[:, -2]
        da = da + d2
    dr = np.zeros_like(G)
    if G.shape[0] >= 3:
        dr[1:-1] = np.abs(G[2:] - 2 * G[1:-1] + G[:-2])
        dr[0], dr[-1] = dr[1], dr[-2]
    return (0.5 * (da + dr)).reshape(g.shape)


def _hessian_norm(u, x, step):
    """Spectral norm of a finite-difference Hessian of ``u`` at ``x``."""
    n = len(x)
    eye = np.eye(n) * step
    pts = [x]
    for i in range(n):
        pts += [x + eye[i], x - eye[i]]
        for j in range(i + 1, n):
            pts += [x + eye[i] + eye[j], x + eye[i] - eye[j], x - eye[i] + eye[j], x - eye[i] - eye[j]]
    v = np.asarray(u(np.array(pts)), float)
    H = np.zeros((n, n))
    k = 1
    for i in range(n):
        H[i, i] = (v[k] - 2 * v[0] + v[k + 1]) / step ** 2
        k += 2
        for j in range(i + 1, n):
            H[i, j] = H[j, i] = (v[k] - v[k + 1] - v[k + 2] + v[k + 3]) / (4 * step ** 2)
            k += 4
    return float(np.linalg.norm(H, 2))


def estimate_hessian_bound(u, x, radius):
    """``2 * max |D^2 u|`` sampled at the centre and the 2n points ``x +- radius e_i``."""
    x = np.asarray(x, float)
    step = radius / 2
    pts = [x] + [x + sgn * radius * e for e in np.eye(len(x)) for sgn in (1, -1)]
    return 2.0 * max(_hessian_norm(u, p, step) for p in pts)


def _growth_exponent(m_prev, m_last, r_prev, r_last):
    if m_last <= 1e-300 or m_prev <= 1e-300:
        return 0.0
    return max(0.0, math.log(m_last / m_prev) / math.log(r_last / r_prev))


def _shell_sum(kernel, u, x, q, edges, h_local, ux, want_iso=False):
    """Quadrature over shells; returns sums plus last-shell statistics."""
    n, s = kernel.n, kernel.s
    val = err = iso = 0.0
    stats = []
    for a, b in zip(edges[:-1], edges[1:]):
        rho, wr = _radial_nodes(a, b, s, q.radial_per_shell)
        dirs, wa, shape = _half_directions(n, q.angular_count(b, h_local))
        y = rho[:, None, None] * dirs[None, :, :]
        yf = y.reshape(-1, n)
        up = np.asarray(u(x + yf), float)
        um = np.asarray(u(x - yf), float)
        g = (2 * ux - up - um).reshape(len(rho), -1)
        f = kernel.factor(yf).reshape(len(rho), -1)
        w = wr[:, None] * wa[None, :]
        val += float(np.sum(w * f * g))
        err += float(np.sum(w * f * _second_diff_err(g, shape, True)))
        if want_iso:
            iso += float(np.sum(w * g))
        both = np.concatenate([up, um])
        stats.append((b, float(np.mean(both)), float(np.max(np.abs(both - np.mean(both))))))
    return val, err, iso, stats


def evaluate_pv(kernel: KernelSpec, u, x, q: PVQuadrature = PVQuadrature(), h_local: float = 1.0,
                hessian_bound=None, inner_radius=None, growth=None, singular_set=None,
                angular: int = 512) -> PVResult:
    """Principal value ``Lu(x)`` with an error bracket.

    ``u`` maps ``(m, n)`` points to ``m`` values and must be defined on all of
    ``R^n``.  The inner ball ``B_{r_in}`` is left out of the value and charged
    to ``error_bound`` via ``|D^2 u| <= hessian_bound`` (estimated if absent).
    ``growth`` may give ``(beta_mean, beta_osc)`` for the far field; otherwise
    both are estimated from the outer shells.

    ``singular_set`` (a 1-Lipschitz signed distance, or an object with
    ``.sd``) marks where ``u`` may be non-smooth.  Integration then runs ray
    by ray with panel breaks at its zero crossings, graded toward them.
    """
    x = np.asarray(x, float)
    n, s = kernel.n, kernel.s
    r_in = q.inner_radius_factor * h_local if inner_radius is None else inner_radius
    if singular_set is not None:
        sd = getattr(singular_set, "sd", singular_set)
        if growth is None:
            growth = _ray_growth(u, x, q.far_cutoff, n)
        if callable(hessian_bound):
            hessian_bound = float(hessian_bound(x, r_in))
        return _ray_pv(kernel, u, x, q, sd, r_in, q.far_cutoff, angular, True, growth,
                       hessian_bound=hessian_bound)
    Rc = q.far_cutoff
    ux = float(np.asarray(u(x[None]), float)[0])
    if hessian_bound is None:
        hessian_bound = estimate_hessian_bound(u, x, r_in)
    elif callable(hessian_bound):
        hessian_bound = float(hessian_bound(x, r_in))
    S = sphere_area(n)
    inner = 0.5 * hessian_bound * kernel.Lam * S * r_in ** (2 - 2 * s) / (2 - 2 * s)
    edges = q.shell_edges(r_in, Rc)
    val, err, _, stats = _shell_sum(kernel, u, x, q, edges, h_local, ux)
    # far field: value uses the last-shell spherical mean as a constant
    (r1, m1, o1), (r2, m2, o2) = stats[-2], stats[-1]
    if growth is None:
        bm = _growth_exponent(abs(m1), abs(m2), r1, r2)
        bo = _growth_exponent(o1, o2, r1, r2)
    else:
        bm, bo = growth
    if bm >= 2 * s or bo >= 2 * s:
        raise GrowthError(f"far-field growth exponent {max(bm, bo):.3g} >= 2s = {2 * s:.3g}")
    T, T_half = tail_mass(kernel, Rc)
    tail_val = (ux - m2) * T
    big = kernel.Lam * S * Rc ** (-2 * s)
    tail_err = abs(ux - m2) * T_half + big * (o2 / (2 * s - bo) + abs(m2) * (1 / (2 * s - bm) - 1 / (2 * s)))
    value = val + tail_val
    return PVResult(value=value, error_bound=inner + err + tail_err, inner_error=inner,
                    shell_error=err, tail_value=tail_val, tail_error=tail_err)


def evaluate_indicator(kernel: KernelSpec, domain, x, q: PVQuadrature = PVQuadrature(),
                       angular: int = 1024) -> PVResult:
    """``L chi_Omega(x) = int_{Omega^c} K(x - y) dy`` for ``x`` in the domain.

    Integrated ray by ray: the complement intervals of each ray are located
    exactly (see ``ray_crossings``), so the integrand is resolved however
    small or far the complement is.
    """
    x = np.asarray(x, float)
    d = float(domain.dist(x[None])[0])
    if d <= 0:
        raise ValueError("indicator integral needs an interior point")

    def chi(p):
        return (domain.sd(p) < 0).astype(float)

    bb = domain.complement_bounding_ball()
    Rc = q.far_cutoff if bb is None else max(float(np.linalg.norm(x - bb[0]) + bb[1]), d) * 1.0000001
    res = _ray_pv(kernel, chi, x, q, domain.sd, d, Rc, angular, grade=False, growth=(0.0, 0.0),
                  ux=1.0, want_iso=True, hessian_bound=0.0, settled=bb is not None)
    return res


def ray_crossings(sd, x, dirs, t0: float, t1: float, rtol: float = 1e-12, ratio: float = 1.1):
    """Sign changes of ``t -> sd(x + t w)`` on ``[t0, t1]`` for every direction ``w``.

    ``sd`` must be 1-Lipschitz.  A segment ``[a, b]`` whose end values share
    a sign and satisfy ``|sd(a)| + |sd(b)| >= b - a`` cannot contain a zero;
    all other segments are bisected until their width is below ``rtol * b``.
    Returns ``(dir_index, t)`` of the crossings, the sign at ``t0`` per
    direction, and the number of unresolved tangential segments.
    """
    x = np.asarray(x, float)
    m = len(dirs)
    k = max(1, math.ceil(math.log(t1 / t0) / math.log(ratio)))
    t = np.geomspace(t0, t1, k + 1)
    pts = x + (t[None, :, None] * dirs[:, None, :])
    v = np.asarray(sd(pts.reshape(-1, len(x))), float).reshape(m, k + 1)
    start = v[:, 0] >= 0
    di = np.repeat(np.arange(m), k)
    a = np.tile(t[:-1], m)
    b = np.tile(t[1:], m)
    va = v[:, :-1].ravel()
    vb = v[:, 1:].ravel()
    out_d, out_t = [], []
    dropped = 0
    for _ in range(200):
        if len(a) == 0:
            break
        w = b - a
        flip = (va >= 0) != (vb >= 0)
        safe = ~flip & (np.abs(va) + np.abs(vb) >= w)
        small = w <= rtol * b
        hit = flip & small
        if np.any(hit):
            fa, fb = np.abs(va[hit]), np.abs(vb[hit])
            out_d.append(di[hit])
            out_t.append(a[hit] + w[hit] * fa / np.maximum(fa + fb, 1e-300))
        dropped += int(np.count_nonzero(~flip & ~safe & small))
        keep = ~safe & ~small
        di, a, b, va, vb = di[keep], a[keep], b[keep], va[keep], vb[keep]
        mid = 0.5 * (a + b)
        vm = np.asarray(sd(x + mid[:, None] * dirs[di]), float)
        di = np.concatenate([di, di])
        a, b = np.concatenate([a, mid]), np.concatenate([mid, b])
        va, vb = np.concatenate([va, vm]), np.concatenate([vm, vb])
    if out_d:
        di_all, t_all = np.concatenate(out_d), np.concatenate(out_t)
        order = np.lexsort((t_all, di_all))
        return di_all[order], t_all[order], start, dropped
    return np.zeros(0, int), np.zeros(0), start, dropped


def _ray_growth(u, x, Rc, n, count=64):
    """Growth exponents (mean, oscillation) of ``u`` between radii ``Rc/2`` and ``Rc``."""
    phi = np.arange(count) * 2 * math.pi / count
    w = np.zeros((count, n))
    w[:, 0], w[:, 1] = np.cos(phi), np.sin(phi)
    stats = []
    for r in (Rc / 2, Rc):
        v = np.asarray(u(x + r * w), float)
        stats.append((r, float(np.mean(v)), float(np.max(np.abs(v - v.mean())))))
    (r1, m1, o1), (r2, m2, o2) = stats
    return _growth_exponent(abs(m1), abs(m2), r1, r2), _growth_exponent(o1, o2, r1, r2)


def _ray_directions(n: int, m: int):
    """Half-sphere directions, weights, and flags for the halved and quartered subrules."""
    if n == 2:
        phi = np.arange(m) * math.pi / m
        dirs = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        coarse = np.arange(m) % 2 == 0
        return dirs, np.full(m, math.pi / m), (coarse, np.arange(m) % 4 == 0)
    if n == 3:
        mz, mphi = max(8, m // 8), m
        z = (np.arange(mz) + 0.5) / mz
        phi = np.arange(mphi) * 2 * math.pi / mphi
        Z, P = np.meshgrid(z, phi, indexing="ij")
        rr = np.sqrt(1 - Z ** 2)
        dirs = np.stack([(rr * np.cos(P)).ravel(), (rr * np.sin(P)).ravel(), Z.ravel()], axis=1)
        coarse = [(np.arange(mphi)[None, :] % k == 0).repeat(mz, axis=0).ravel() for k in (2, 4)]
        return dirs, np.full(mz * mphi, 2 * math.pi / (mz * mphi)), tuple(coarse)
    raise ValueError("ray quadrature supports n = 2, 3")


_GL_FINE = np.polynomial.legendre.leggauss(8)
_GL_COARSE = np.polynomial.legendre.leggauss(4)


def _panels(kernel, m, r_in, Rc, growth, cross_d, cross_t, grade, levels=12, q_grade=0.2):
    """Per-direction breakpoints: geometric shells, crossings, and grading toward crossings."""
    base = np.geomspace(r_in, Rc, max(2, math.ceil(math.log(Rc / r_in) / math.log(growth))) + 1)
    extra = []
    if not kernel.homogeneous and kernel.func is None and kernel.profile == "two_level":
        r_star = kernel.params[0] / kernel.scale
        if r_in < r_star < Rc:
            extra.append(r_star)
    base = np.union1d(base, extra)
    split = np.searchsorted(cross_d, np.arange(m + 1))
    pd, pa, pb = [], [], []
    for i in range(m):
        c = cross_t[split[i]:split[i + 1]]
        c = c[(c > r_in) & (c < Rc)]
        e = np.union1d(base, c)
        if grade and len(c):
            g = []
            for ct in c:
                j = np.searchsorted(e, ct)
                left, right = ct - e[j - 1], e[j + 1] - ct
                g.append(ct - left * q_grade ** np.arange(1, levels + 1))
                g.append(ct + right * q_grade ** np.arange(1, levels + 1))
            e = np.union1d(e, np.concatenate(g))
        pd.append(np.full(len(e) - 1, i))
        pa.append(e[:-1])
        pb.append(e[1:])
    return np.concatenate(pd), np.concatenate(pa), np.concatenate(pb)


def _ray_pv(kernel, u, x, q, sd, r_in, Rc, angular, grade, growth, ux=None, want_iso=False,
            hessian_bound=None, chunk=400_000, settled=False):
    n, s = kernel.n, kernel.s
    if ux is None:
        ux = float(np.asarray(u(x[None]), float)[0])
    dirs, wang, coarse = _ray_directions(n, angular)
    m = len(dirs)
    alld = np.vstack([dirs, -dirs])
    cd, ct, _, dropped = ray_crossings(sd, x, alld, r_in, Rc)
    cd = np.where(cd >= m, cd - m, cd)
    order = np.lexsort((ct, cd))
    cd, ct = cd[order], ct[order]
    pd, pa, pb = _panels(kernel, m, r_in, Rc, q.growth, cd, ct, grade)
    contrib = {}
    for name, (gx, gw) in (("fine", _GL_FINE), ("coarse", _GL_COARSE)):
        half = 0.5 * (pb - pa)
        t = (0.5 * (pa + pb))[:, None] + half[:, None] * gx[None, :]
        w = half[:, None] * gw[None, :] * t ** (-1 - 2 * s)
        dd = np.repeat(pd, len(gx))
        tt = t.ravel()
        y = tt[:, None] * dirs[dd]
        g = np.empty(len(tt))
        for lo in range(0, len(tt), chunk):
            yy = y[lo:lo + chunk]
            g[lo:lo + chunk] = 2 * ux - np.asarray(u(x + yy), float) - np.asarray(u(x - yy), float)
        f = kernel.factor(y) if not kernel.family == "isotropic" else 1.0
        per_panel = (w.ravel() * g * f).reshape(len(pa), -1).sum(axis=1)
        contrib[name] = per_panel
        if name == "fine" and want_iso:
            iso_panel = (w.ravel() * g).reshape(len(pa), -1).sum(axis=1)
    per_dir = np.bincount(pd, weights=contrib["fine"], minlength=m)
    value = float(np.sum(wang * per_dir))
    radial_err = float(np.sum(wang[pd] * np.abs(contrib["fine"] - contrib["coarse"])))
    # a feature hit by only a few rays can make two successive rules agree by
    # accident, so the quartered rule is compared as well
    q2 = float(np.sum(2 * wang[coarse[0]] * per_dir[coarse[0]]))
    q4 = float(np.sum(4 * wang[coarse[1]] * per_dir[coarse[1]]))
    ang_err = max(abs(value - q2), abs(q2 - q4))
    # far field beyond Rc: g frozen at its value at Rc, growth bracket on the rest
    yR = Rc * dirs
    uP, uM = np.asarray(u(x + yR), float), np.asarray(u(x - yR), float)
    gR = 2 * ux - uP - uM
    fR = kernel.factor(yR)
    bm, bo = growth
    if bm >= 2 * s or bo >= 2 * s:
        raise GrowthError(f"far-field growth exponent {max(bm, bo):.3g} >= 2s = {2 * s:.3g}")
    tail_w = Rc ** (-2 * s) / (2 * s)
    tail_val = float(np.sum(wang * fR * gR)) * tail_w
    beta = max(bm, bo)
    tail_err = kernel.Lam * float(np.sum(wang * (np.abs(uP) + np.abs(uM)))) * Rc ** (-2 * s) \
        * (1 / (2 * s - beta) - 1 / (2 * s))
    if not kernel.homogeneous:
        tail_err += 0.5 * (kernel.Lam - kernel.lam) * float(np.sum(wang * np.abs(gR))) * tail_w
    late = np.unique(cd[(ct > Rc / q.growth) & (ct < Rc)])
    if len(late) and not settled:
        # the state of these rays may still change past the cutoff
        span = 2 * max(abs(ux), float(np.max(np.abs(uP))), float(np.max(np.abs(uM))))
        tail_err += kernel.Lam * span * tail_w * float(np.sum(wang[late]))
    S = sphere_area(n)
    if hessian_bound is None:
        hessian_bound = estimate_hessian_bound(u, x, r_in)
    inner = 0.5 * hessian_bound * kernel.Lam * S * r_in ** (2 - 2 * s) / (2 - 2 * s)
    cross_err = kernel.Lam * S * dropped * 1e-12 * r_in ** (-2 * s)
    err = inner + radial_err + ang_err + tail_err + cross_err
    res = PVResult(value=value + tail_val, error_bound=err, inner_error=inner,
                   shell_error=radial_err + ang_err, tail_value=tail_val, tail_error=tail_err)
    if want_iso:
        iso = float(np.sum(wang * np.bincount(pd, weights=iso_panel, minlength=m))) + \
            float(np.sum(wang * gR)) * tail_w
        res.lower, res.upper = kernel.lam * iso, kernel.Lam * iso
    return res


def evaluate_pv_batch(kernel, u, points, q=PVQuadrature(), **kw):
    res = [evaluate_pv(kernel, u, p, q, **kw) for p in np.atleast_2d(points)]
    return np.array([r.value for r in res]), np.array([r.error_bound for r in res])


def l1_2s_norm(u, n: int, s: float, q: PVQuadrature = PVQuadrature(), r_min: float = 1e-3,
               order: int = 8) -> float:
    """``int |u(y)| / (1 + |y|^(n+2s)) dy`` with a power-law tail extrapolation."""
    S = sphere_area(n)
    g, gw = np.polynomial.legendre.leggauss(order)
    if n == 2:
        m = 256
        phi = (np.arange(m) + 0.5) * 2 * math.pi / m
        dirs = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    else:
        rng = np.random.default_rng(0)
        dirs = rng.standard_normal((4096, n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    edges = np.concatenate([[0.0], q.shell_edges(r_min, q.far_cutoff)])
    total = 0.0
    means = []
    for a, b in zip(edges[:-1], edges[1:]):
        rho = 0.5 * (b - a) * g + 0.5 * (a + b)
        w = 0.5 * (b - a) * gw
        vals = np.abs(np.asarray(u((rho[:, None, None] * dirs[None]).reshape(-1, n)), float))
        mean = vals.reshape(len(rho), -1).mean(axis=1)
        total += S * float(np.sum(w * mean * rho ** (n - 1) / (1 + rho ** (n + 2 * s))))
        means.append((b, float(mean[-1])))
    (r1, m1), (r2, m2) = means[-2], means[-1]
    beta = _growth_exponent(m1, m2, r1, r2)
    if beta >= 2 * s - 1e-6:
        raise GrowthError(f"weighted integral diverges: growth exponent {beta:.3g} >= 2s")
    Rc = q.far_cutoff
    total += S * m2 * Rc ** (-2 * s) / (2 * s - beta)
    return total
