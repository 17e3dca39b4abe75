"""Regularized distance by local averaging of the distance function.

``delta(x) = (1/(1-theta)) * mean of d over B_{theta d(x)}(x)``.  Since
``d`` is 1-Lipschitz the mean lies in ``[(1-theta) d, (1+theta) d]``, which
gives ``d <= delta <= (1+theta)/(1-theta) d``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .domains import DomainError, DomainOracle


def ball_rule(n: int, order: int):
    """Midpoint-product nodes and weights for the mean over the unit ball."""
    if n == 2:
        nr, nt = order, 4 * order
        r_edges = np.linspace(0.0, 1.0, nr + 1)
        rm = 0.5 * (r_edges[1:] + r_edges[:-1])
        area = r_edges[1:] ** 2 - r_edges[:-1] ** 2
        t = (np.arange(nt) + 0.5) * 2 * math.pi / nt
        R, T = np.meshgrid(rm, t, indexing="ij")
        W = np.repeat(area[:, None], nt, axis=1)
        nodes = np.stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()], axis=1)
        w = W.ravel()
    else:
        m = 2 * order + 1
        g = (np.arange(m) + 0.5) / m * 2 - 1
        grids = np.meshgrid(*([g] * n), indexing="ij")
        pts = np.stack([a.ravel() for a in grids], axis=1)
        keep = np.linalg.norm(pts, axis=1) <= 1.0
        nodes = pts[keep]
        w = np.ones(len(nodes))
    return nodes, w / w.sum()


@dataclass
class RegularizedDistance:
    domain: DomainOracle
    theta: float = 0.25
    quadrature_order: int = 4
    use_table: bool = True
    _nodes: np.ndarray = field(init=False, repr=False)
    _w: np.ndarray = field(init=False, repr=False)
    _table: object = field(init=False, default=None, repr=False)

    def __post_init__(self):
        if not 0 < self.theta < 0.5:
            raise DomainError("mollification fraction must lie in (0, 1/2)")
        self._nodes, self._w = ball_rule(self.domain.n, self.quadrature_order)
        if self.use_table and self.domain.radial is not None:
            self._build_table()

    @property
    def sandwich(self) -> float:
        return (1 + self.theta) / (1 - self.theta)

    def direct(self, x, d=None) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        if d is None:
            d = self.domain.dist(x)
        # chunk so memory stays flat for large batches
        out = np.empty(len(x))
        step = max(1, 200_000 // len(self._w))
        for lo in range(0, len(x), step):
            xs = x[lo:lo + step]
            rad = self.theta * d[lo:lo + step]
            pts = xs[:, None, :] + rad[:, None, None] * self._nodes[None, :, :]
            dd = self.domain.dist(pts.reshape(-1, self.domain.n)).reshape(len(xs), -1)
            out[lo:lo + step] = dd @ self._w / (1 - self.theta)
        return out

    def _build_table(self):
        # radial kinds: delta/d depends only on d (and the radius); tabulate in log d
        c, R, sign = self.domain.radial
        e = np.eye(self.domain.n)[-1]
        tmax = 1e9 * R if sign < 0 else R
        logt = np.linspace(math.log(1e-9 * R), math.log(tmax), 900)
        t = np.exp(logt)
        x = c + (R + t)[:, None] * e if sign < 0 else c + (R - t)[:, None] * e
        ratio = self.direct(x, t) / t
        self._table = (logt[0], logt[-1], CubicSpline(logt, ratio))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        shape = x.shape[:-1]
        pts = x.reshape(-1, self.domain.n)
        d = self.domain.dist(pts)
        if np.any(d <= 0):
            raise DomainError("regularized distance requested outside the domain")
        if self._table is None:
            return self.direct(pts, d).reshape(shape)
        lo, hi, spl = self._table
        lt = np.log(d)
        out = np.empty(len(d))
        inside = (lt >= lo) & (lt <= hi)
        out[inside] = spl(lt[inside]) * d[inside]
        if np.any(~inside):
            out[~inside] = self.direct(pts[~inside], d[~inside])
        return out.reshape(shape)

    def power(self, eps: float):
        """``x -> delta(x)**eps`` inside, 0 outside (callable for quadrature)."""
        def f(x):
            x = np.asarray(x, float)
            shape = x.shape[:-1]
            pts = x.reshape(-1, self.domain.n)
            out = np.zeros(len(pts))
            d = self.domain.dist(pts)
            m = d > 0
            if np.any(m):
                out[m] = self(pts[m]) ** eps
            return out.reshape(shape)
        return f


def regularized_distance(rd: RegularizedDistance, x) -> np.ndarray:
    return rd(x)


def measure_bounds(rd: RegularizedDistance, points, step_frac: float = 1e-2) -> dict:
    """Measured constants of the sandwich and derivative bounds at ``points``."""
    x = np.atleast_2d(np.asarray(points, float))
    n = x.shape[1]
    d = rd.domain.dist(x)
    x, d = x[d > 0], d[d > 0]
    val = rd(x)
    hs = step_frac * d
    grad = np.zeros((len(x), n))
    hess = np.zeros((len(x), n, n))
    eye = np.eye(n)
    for i in range(n):
        fp = rd(x + hs[:, None] * eye[i])
        fm = rd(x - hs[:, None] * eye[i])
        grad[:, i] = (fp - fm) / (2 * hs)
        hess[:, i, i] = (fp - 2 * val + fm) / hs ** 2
        for j in range(i + 1, n):
            fpp = rd(x + hs[:, None] * (eye[i] + eye[j]))
            fpm = rd(x + hs[:, None] * (eye[i] - eye[j]))
            fmp = rd(x - hs[:, None] * (eye[i] - eye[j]))
            fmm = rd(x - hs[:, None] * (eye[i] + eye[j]))
            hess[:, i, j] = hess[:, j, i] = (fpp - fpm - fmp + fmm) / (4 * hs ** 2)
    ratio = val / d
    return {
        "min_ratio": float(ratio.min()),
        "C": float(ratio.max()),
        "C1": float(np.linalg.norm(grad, axis=1).max()),
        "C2": float((np.linalg.norm(hess, ord=2, axis=(1, 2)) * d).max()),
        "count": int(len(x)),
    }
