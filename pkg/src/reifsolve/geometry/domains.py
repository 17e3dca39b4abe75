"""Domain oracles: signed distance plus boundary sampling.

Convention: ``sd < 0`` inside the domain, ``sd > 0`` in the open exterior.
Planar curve kinds (sawtooth, koch_flat, perturbed_halfspace, slit) live in the
``(x_1, x_n)`` plane and are extruded along the remaining axes when ``n > 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import _backend

KINDS = ("ball", "half_space", "ball_complement", "sawtooth", "koch_flat",
         "perturbed_halfspace", "slit")
CURVE_KINDS = ("sawtooth", "koch_flat", "perturbed_halfspace", "slit")
MAX_KOCH_DEPTH = 8


class DomainError(ValueError):
    pass


def split_rng(seed, *keys):
    """Deterministic child generator for shard/parameter ``keys``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *[int(k) for k in keys]]))


@dataclass
class DomainOracle:
    kind: str
    n: int
    params: dict
    box_lo: np.ndarray
    box_hi: np.ndarray
    sampler_tol: float = 1e-12
    vertices: Optional[np.ndarray] = field(default=None, repr=False)
    graph: bool = False

    # -- distances -----------------------------------------------------
    def signed_distance(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        pts = x.reshape(-1, self.n)
        out = self._sd(pts)
        return out.reshape(shape)

    sd = signed_distance

    def dist(self, x) -> np.ndarray:
        """Distance to the complement, ``max(-sd, 0)``."""
        return np.maximum(-self.signed_distance(x), 0.0)

    def contains(self, x) -> np.ndarray:
        return self.signed_distance(x) < 0

    def _sd(self, p):
        k = self.kind
        if k == "half_space":
            return -p[:, -1]
        if k == "ball":
            c = np.asarray(self.params["center"], float)
            return np.linalg.norm(p - c, axis=1) - self.params["radius"]
        if k == "ball_complement":
            c = np.asarray(self.params["center"], float)
            return self.params["radius"] - np.linalg.norm(p - c, axis=1)
        q = np.stack([p[:, 0], p[:, -1]], axis=1)
        v = self.vertices
        d = _backend.segment_distance(q, v[:-1], v[1:])
        if k == "slit":
            return -d
        above = q[:, 1] > np.interp(q[:, 0], v[:, 0], v[:, 1])
        return np.where(above, -d, d)

    # -- geometry descriptors ------------------------------------------
    @property
    def radial(self):
        """(center, radius, +1 for ball / -1 for complement) for radial kinds."""
        if self.kind in ("ball", "ball_complement"):
            c = np.asarray(self.params["center"], float)
            return c, float(self.params["radius"]), 1 if self.kind == "ball" else -1
        return None

    @property
    def complement_diameter(self) -> float:
        if self.kind == "ball_complement":
            return 2.0 * self.params["radius"]
        if self.kind == "slit":
            a, b = np.asarray(self.params["a"], float), np.asarray(self.params["b"], float)
            return float(np.linalg.norm(b - a))
        return math.inf

    def complement_bounding_ball(self):
        """(center, radius) of a ball containing the complement, or None."""
        if self.kind == "ball_complement":
            return np.asarray(self.params["center"], float), float(self.params["radius"])
        if self.kind == "slit":
            a, b = np.asarray(self.params["a"], float), np.asarray(self.params["b"], float)
            c = np.zeros(self.n)
            c[0], c[-1] = 0.5 * (a + b)
            return c, 0.5 * float(np.linalg.norm(b - a))
        return None

    def graph_height(self, x1):
        if not self.graph:
            raise DomainError(f"{self.kind} is not a graph domain")
        if self.kind == "half_space":
            return np.zeros_like(np.asarray(x1, float))
        v = self.vertices
        return np.interp(x1, v[:, 0], v[:, 1])

    def anchor(self) -> np.ndarray:
        """A distinguished boundary point (tip of the main bump, pole, origin)."""
        x = np.zeros(self.n)
        if self.kind == "ball":
            x = np.asarray(self.params["center"], float).copy()
            x[-1] += self.params["radius"]
        elif self.kind == "ball_complement":
            x = np.asarray(self.params["center"], float).copy()
            x[-1] += self.params["radius"]
        elif self.graph and self.kind != "half_space":
            x[-1] = float(self.graph_height(0.0))
        elif self.kind == "slit":
            x[0], x[-1] = np.asarray(self.params["a"], float)
        return x

    # -- boundary sampling ---------------------------------------------
    def sample_boundary(self, count: int, seed: int, center=None, radius=None) -> np.ndarray:
        """Points on the boundary, restricted to ``B_radius(center)`` when given.

        Stratified with jitter where a parametrization is available. The
        restriction may return fewer than ``count`` points.
        """
        rng = split_rng(seed, 7)
        if center is None:
            center = 0.5 * (self.box_lo + self.box_hi)
            radius = 0.5 * float(np.linalg.norm(self.box_hi - self.box_lo))
        center = np.asarray(center, dtype=float)
        k = self.kind
        if k == "half_space":
            pts = self._sample_plane(count, rng, center, radius)
        elif k in ("ball", "ball_complement"):
            pts = self._sample_sphere(count, rng, center, radius)
        else:
            pts = self._sample_curve(count, rng, center, radius)
        keep = np.linalg.norm(pts - center, axis=1) <= radius
        return pts[keep]

    def _sample_plane(self, count, rng, c, r):
        rr2 = r * r - c[-1] ** 2
        if rr2 <= 0:
            return np.zeros((0, self.n))
        rr = math.sqrt(rr2)
        m = self.n - 1
        if m == 1:
            t = (np.arange(count) + rng.uniform(size=count)) / count
            u = (c[0] - rr + 2 * rr * t)[:, None]
        else:
            g = rng.standard_normal((count, m))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            u = c[:m] + rr * g * rng.uniform(size=(count, 1)) ** (1.0 / m)
        return np.hstack([u, np.zeros((count, 1))])

    def _sample_sphere(self, count, rng, c, r):
        ctr = np.asarray(self.params["center"], float)
        R = float(self.params["radius"])
        off = c - ctr
        dist = float(np.linalg.norm(off))
        # angular half-width of the cap of the sphere inside B_r(c)
        if dist < 1e-15 or dist + R <= r:
            cap = math.pi
            axis = np.eye(self.n)[-1]
        else:
            axis = off / dist
            cosv = (R * R + dist * dist - r * r) / (2 * R * dist)
            if cosv >= 1:
                return np.zeros((0, self.n))
            cap = math.acos(max(-1.0, cosv))
        if self.n == 2:
            phi0 = math.atan2(axis[1], axis[0])
            t = (np.arange(count) + rng.uniform(size=count)) / count
            phi = phi0 + cap * (2 * t - 1)
            return ctr + R * np.stack([np.cos(phi), np.sin(phi)], axis=1)
        # uniform on the cap: height coordinate uniform for n = 3, rejection otherwise
        out = []
        need = count
        while need > 0:
            g = rng.standard_normal((4 * need + 16, self.n))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            if self.n == 3 and cap < math.pi:
                z = rng.uniform(math.cos(cap), 1.0, size=g.shape[0])
                g = g - np.outer(g @ axis, axis)
                g /= np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-300)
                g = g * np.sqrt(1 - z * z)[:, None] + np.outer(z, axis)
            else:
                g = g[g @ axis >= math.cos(cap)]
            out.append(g[:need])
            need -= len(out[-1])
        return ctr + R * np.vstack(out)

    def _sample_curve(self, count, rng, c, r):
        v = self.vertices
        seg = np.diff(v, axis=0)
        L = np.hypot(seg[:, 0], seg[:, 1])
        cum = np.concatenate([[0.0], np.cumsum(L)])
        # arclength window covering the x_1 range of the ball
        if self.kind == "slit":
            s0, s1 = 0.0, cum[-1]
        else:
            s0 = float(np.interp(c[0] - r, v[:, 0], cum))
            s1 = float(np.interp(c[0] + r, v[:, 0], cum))
        if s1 <= s0:
            return np.zeros((0, self.n))
        t = (np.arange(count) + rng.uniform(size=count)) / count
        s = s0 + (s1 - s0) * t
        seg_i = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(L) - 1)
        lam = (s - cum[seg_i]) / np.where(L[seg_i] > 0, L[seg_i], 1.0)
        q = v[seg_i] + lam[:, None] * seg[seg_i]
        pts = np.zeros((count, self.n))
        pts[:, 0], pts[:, -1] = q[:, 0], q[:, 1]
        if self.n > 2:
            pts[:, 1:-1] = c[1:-1] + rng.uniform(-r, r, size=(count, self.n - 2))
        return pts


# -- curve generators ------------------------------------------------------
def koch_vertices(depth: int, angle: float, base: float) -> np.ndarray:
    """Generalized Koch prefractal over ``[-base/2, base/2]``.

    Every segment is replaced by four pieces of length ``l/(2+2cos(angle))``
    turned by ``0, +angle, -angle, 0``; the bumps point towards ``+x_n``.
    """
    pts = np.array([[-base / 2, 0.0], [base / 2, 0.0]])
    ca = math.cos(angle)
    for _ in range(depth):
        a, b = pts[:-1], pts[1:]
        d = b - a
        ell = np.hypot(d[:, 0], d[:, 1]) / (2 + 2 * ca)
        phi = np.arctan2(d[:, 1], d[:, 0])
        p1 = a + ell[:, None] * np.stack([np.cos(phi), np.sin(phi)], 1)
        p2 = p1 + ell[:, None] * np.stack([np.cos(phi + angle), np.sin(phi + angle)], 1)
        p3 = p2 + ell[:, None] * np.stack([np.cos(phi - angle), np.sin(phi - angle)], 1)
        new = np.empty((4 * len(a) + 1, 2))
        new[0:-1:4], new[1::4], new[2::4], new[3::4] = a, p1, p2, p3
        new[-1] = pts[-1]
        pts = new
    return pts


def sawtooth_vertices(slope: float, period: float, x_lo: float, x_hi: float) -> np.ndarray:
    """Graph of ``slope*period*dist(x/period, Z)``: peaks at half periods."""
    j0 = math.floor(2 * x_lo / period) - 1
    j1 = math.ceil(2 * x_hi / period) + 1
    x = 0.5 * period * np.arange(j0, j1 + 1)
    t = x / period
    y = slope * period * np.abs(t - np.round(t))
    return np.stack([x, y], axis=1)


def _extend(v, ext):
    left = [[v[0, 0] - ext, v[0, 1]]]
    right = [[v[-1, 0] + ext, v[-1, 1]]]
    return np.vstack([left, v, right])


def make_domain(kind: str, params: Optional[dict] = None, resolution: Optional[float] = None,
                n: int = 2, box=None) -> DomainOracle:
    """Build a domain oracle.

    ``resolution`` sets the polyline spacing for the smooth perturbed kind.
    ``box`` is ``(lo, hi)``; defaults depend on the kind.
    """
    p = dict(params or {})
    if kind not in KINDS:
        raise DomainError(f"unknown domain kind {kind!r}")
    if n < 2:
        raise DomainError("dimension must be >= 2")
    if kind in CURVE_KINDS and n > 3:
        raise DomainError("curve kinds are available for n = 2, 3 only")
    if kind == "slit" and n != 2:
        raise DomainError("slit is planar only")
    lo = -np.ones(n)
    hi = np.ones(n)
    vertices = None
    graph = kind in ("half_space", "sawtooth", "koch_flat", "perturbed_halfspace")
    if kind == "ball":
        p.setdefault("center", [0.0] * n)
        p.setdefault("radius", 1.0)
        if p["radius"] <= 0:
            raise DomainError("radius must be positive")
        c = np.asarray(p["center"], float)
        lo, hi = c - p["radius"], c + p["radius"]
    elif kind == "ball_complement":
        eta = float(p.pop("eta", 0.0))
        p.setdefault("radius", 0.125)
        if p["radius"] <= 0:
            raise DomainError("radius must be positive")
        if "center" not in p:
            c = np.zeros(n)
            c[-1] = -(p["radius"] + eta)
            p["center"] = c.tolist()
        p["eta"] = eta
        c = np.asarray(p["center"], float)
        lo, hi = c - 4 * p["radius"], c + 4 * p["radius"]
    elif kind == "sawtooth":
        m = float(p.setdefault("slope", 0.1))
        per = float(p.setdefault("period", 0.25))
        if m < 0 or per <= 0:
            raise DomainError("sawtooth needs slope >= 0 and period > 0")
        ext = float(p.setdefault("extent", 4.0))
        vertices = sawtooth_vertices(m, per, -ext, ext)
    elif kind == "koch_flat":
        depth = int(p.setdefault("depth", 3))
        if not 0 <= depth <= MAX_KOCH_DEPTH:
            raise DomainError(f"koch depth must lie in [0, {MAX_KOCH_DEPTH}]")
        if "angle" not in p:
            eta = float(p.setdefault("eta", 0.05))
            if not 0 <= eta < 1:
                raise DomainError("koch eta must lie in [0, 1)")
            p["angle"] = math.asin(eta)
        ang = float(p["angle"])
        if not 0 <= ang < math.pi / 3:
            raise DomainError("koch angle must lie in [0, pi/3)")
        base = float(p.setdefault("base", 2.0))
        if base <= 0:
            raise DomainError("koch base length must be positive")
        vertices = _extend(koch_vertices(depth, ang, base), float(p.setdefault("extension", 4.0)))
    elif kind == "perturbed_halfspace":
        eta = float(p.setdefault("eta", 0.05))
        scale = float(p.setdefault("scale", 0.5))
        if scale <= 0 or eta < 0:
            raise DomainError("perturbation needs scale > 0 and eta >= 0")
        ext = float(p.setdefault("extent", 4.0))
        step = resolution or scale / 64
        x = np.arange(-ext, ext + step / 2, step)
        vertices = np.stack([x, eta * scale * np.sin(2 * math.pi * x / scale)], axis=1)
    elif kind == "slit":
        a = np.asarray(p.setdefault("a", [-0.5, 0.0]), float)
        b = np.asarray(p.setdefault("b", [0.5, 0.0]), float)
        if np.allclose(a, b):
            raise DomainError("slit endpoints coincide")
        p["a"], p["b"] = a.tolist(), b.tolist()
        vertices = np.stack([a, b])
    if graph and vertices is not None and np.any(np.diff(vertices[:, 0]) <= 0):
        raise DomainError("curve is not a graph over x_1 (angle too large for this depth)")
    if box is not None:
        lo, hi = np.asarray(box[0], float), np.asarray(box[1], float)
        if lo.shape != (n,) or hi.shape != (n,) or np.any(hi <= lo):
            raise DomainError("box must be (lo, hi) with lo < hi componentwise")
    return DomainOracle(kind=kind, n=n, params=p, box_lo=np.asarray(lo, float),
                        box_hi=np.asarray(hi, float), vertices=vertices, graph=graph)
