"""Sampled flatness estimator and corkscrew (exterior ball) search."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .domains import DomainOracle, split_rng


def tls_plane(pts):
    """Centroid and unit normal of the total-least-squares hyperplane."""
    c = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - c, full_matrices=False)
    return c, vt[-1]


def plane_basis(normal):
    """Orthonormal basis of the hyperplane orthogonal to ``normal``."""
    n = len(normal)
    q, _ = np.linalg.qr(np.column_stack([normal, np.eye(n)]))
    return q[:, 1:n].T


def disk_lattice(basis, r, count):
    """Lattice points of the (n-1)-disk of radius r spanned by ``basis``."""
    m = basis.shape[0]
    per_axis = max(3, int(round(count ** (1.0 / m))))
    t = np.linspace(-r, r, per_axis)
    grids = np.meshgrid(*([t] * m), indexing="ij")
    coef = np.stack([g.ravel() for g in grids], axis=1)
    coef = coef[np.linalg.norm(coef, axis=1) <= r * (1 + 1e-12)]
    return coef @ basis


def hausdorff_defect(samples, x, normal, r, lattice_count, domain=None):
    """Two-sided d_H between boundary samples and the plane through x, over r.

    Plane points whose nearest boundary point provably lies in ``B_r(x)`` use
    the exact ``|sd|``; the rest use the distance to the nearest sample.
    """
    one = np.max(np.abs((samples - x) @ normal)) / r
    disk = x + disk_lattice(plane_basis(normal), r, lattice_count)
    near = cKDTree(samples).query(disk)[0]
    if domain is not None:
        exact = np.abs(domain.sd(disk))
        inner = np.linalg.norm(disk - x, axis=1) + exact <= r
        near = np.where(inner, exact, near)
    two = np.max(near) / r
    return max(one, two), one, two


@dataclass
class ReifenbergReport:
    scales: np.ndarray
    rows: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    eta_hat: float = 0.0
    eta_hat_centroid: float = 0.0
    separation_ok: bool = True

    @property
    def coverage(self) -> dict:
        return {"pairs_tested": len(self.rows), "pairs_skipped": len(self.skipped)}

    def csv_rows(self):
        return [(*r["x"], r["r"], r["defect"], int(r["separation_ok"])) for r in self.rows]


def _separation(domain, x, normal, r, gap, rng, probes=128):
    n = len(x)
    g = rng.standard_normal((8 * probes, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    y = x + r * g * rng.uniform(size=(len(g), 1)) ** (1.0 / n)
    h = (y - x) @ normal
    sd = domain.sd(y)
    up, dn = sd[h >= gap], sd[h <= -gap]
    if len(up) == 0 or len(dn) == 0:
        return True
    a = (np.all(up > 0) and np.all(dn < 0))
    b = (np.all(up < 0) and np.all(dn > 0))
    return bool(a or b)


def reifenberg_estimate(domain: DomainOracle, r0: float, n_points: int, n_scales: int, seed: int,
                        samples_per_ball: int = 1000, anchors=None,
                        center=None, radius=None) -> ReifenbergReport:
    """Flatness defect at sampled boundary points and log-spaced scales in (r0/100, r0).

    The total-least-squares plane of the samples in ``B_r(x)`` is translated to
    pass through ``x`` before measuring the defect.  The untranslated plane
    (through the sample centroid) is reported as ``defect_centroid``.
    """
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    scales = np.geomspace(r0 / 100, r0, n_scales + 2)[1:-1]
    if center is None:
        center = domain.anchor()
        radius = 0.5 * float(np.min(domain.box_hi - domain.box_lo))
    xs = domain.sample_boundary(n_points, seed, center=center, radius=radius)
    extra = [domain.anchor()] if anchors is None else list(anchors)
    xs = np.vstack([np.atleast_2d(np.asarray(extra, float)).reshape(-1, domain.n), xs]) if extra else xs
    rep = ReifenbergReport(scales=scales)
    n = domain.n
    for i, x in enumerate(xs):
        for j, r in enumerate(scales):
            pts = domain.sample_boundary(samples_per_ball, int(seed) * 7919 + i * 1009 + j,
                                         center=x, radius=r)
            if len(pts) < n + 1:
                rep.skipped.append((x.copy(), float(r)))
                continue
            c, nu = tls_plane(pts)
            lat = samples_per_ball
            defect, _, _ = hausdorff_defect(pts, x, nu, r, lat, domain)
            # same plane, untranslated
            dc, _, _ = hausdorff_defect(pts, c, nu, r, lat, domain)
            ok = _separation(domain, x, nu, r, max(2 * defect, 1e-9) * r, split_rng(seed, i, j))
            rep.rows.append({"x": x.copy(), "r": float(r), "defect": float(defect),
                             "defect_centroid": float(dc), "normal": nu,
                             "separation_ok": ok})
    if rep.rows:
        rep.eta_hat = max(r["defect"] for r in rep.rows)
        rep.eta_hat_centroid = max(r["defect_centroid"] for r in rep.rows)
        rep.separation_ok = all(r["separation_ok"] for r in rep.rows)
    return rep


def local_frame(domain: DomainOracle, x, r, seed=0, count=256):
    """(normal into the complement, fitted plane point) around boundary point x at scale r."""
    pts = domain.sample_boundary(count, seed, center=x, radius=r)
    if len(pts) < domain.n + 1:
        return None
    _, nu = tls_plane(pts)
    t = 0.25 * r
    if domain.sd(x + t * nu) < domain.sd(x - t * nu):
        nu = -nu
    return nu


@dataclass(frozen=True)
class CorkscrewParams:
    R: float
    kappa: float

    def __post_init__(self):
        if not 0 < self.kappa < self.R:
            raise ValueError("corkscrew parameters need 0 < kappa < R")


def corkscrew_check(domain: DomainOracle, p: CorkscrewParams, n_boundary: int, n_scales: int,
                    seed: int, r_range=None, center=None, radius=None, trials: int = 64) -> dict:
    """Search exterior balls ``B_{kappa r}(x) in Omega^c cap B_r(z)``.

    Candidates: ``z + t nu`` for ``t in {r/2, r/4, r/8}`` along the fitted
    normal pointing into the complement, then ``trials`` uniform points in
    ``B_{(1-kappa) r}(z)``.  The best admissible candidate is kept.
    """
    lo, hi = r_range if r_range is not None else (p.R / 100, 0.99 * p.R)
    radii = np.geomspace(lo, hi, n_scales)
    if center is None:
        center = domain.anchor()
        radius = 0.5 * float(np.min(domain.box_hi - domain.box_lo))
    zs = np.vstack([domain.anchor()[None], domain.sample_boundary(n_boundary, seed, center, radius)])
    n = domain.n
    witnesses = []
    worst = math.inf
    ok = True
    for i, z in enumerate(zs):
        for j, r in enumerate(radii):
            kr = p.kappa * r
            nu = local_frame(domain, z, r, seed=seed + 31 * i + j)
            cands = [] if nu is None else [z + t * r * nu for t in (0.5, 0.25, 0.125)]
            rng = split_rng(seed, i, j, 3)
            g = rng.standard_normal((trials, n))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            rand = z + (1 - p.kappa) * r * g * rng.uniform(size=(trials, 1)) ** (1.0 / n)
            allc = np.vstack([np.asarray(cands).reshape(-1, n), rand])
            sd = domain.sd(allc)
            inside_ball = np.linalg.norm(allc - z, axis=1) + kr <= r * (1 + 1e-12)
            margin = (sd - kr) / r
            valid = inside_ball & (sd >= kr)
            if np.any(valid):
                k = int(np.argmax(np.where(valid, margin, -np.inf)))
                witnesses.append((z.copy(), float(r), allc[k].copy(), float(margin[k])))
                worst = min(worst, float(margin[k]))
            else:
                ok = False
                best = float(np.max(np.where(inside_ball, margin, -np.inf)))
                worst = min(worst, best)
    return {"ok": ok, "worst_margin": worst, "witnesses": witnesses,
            "pairs": len(zs) * len(radii)}
