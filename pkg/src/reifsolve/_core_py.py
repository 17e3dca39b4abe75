"""Pure numpy versions of the hot loops; same signatures as the compiled core."""
import numpy as np

BACKEND = "python"

_CHUNK = 1 << 15


def _factor(y, r2, code, params):
    if code == 0:
        return 1.0
    if code == 1:
        return params[0] + params[1] * (2.0 * y[..., 0] ** 2 / r2 - 1.0)
    return np.where(r2 < params[0] ** 2, params[1], params[2])


def cell_integrals(centers, width, code, params, s, order, moment=-1):
    """Integral of ``K`` (times ``y_moment**2`` if ``moment >= 0``) over cubes.

    Each cube has side ``width`` and is centred at a row of ``centers``.
    Tensor Gauss-Legendre rule with ``order`` points per axis.
    """
    centers = np.ascontiguousarray(centers, dtype=float)
    params = np.asarray(params, dtype=float)
    m, n = centers.shape
    g, w = np.polynomial.legendre.leggauss(order)
    g = 0.5 * width * g
    w = 0.5 * width * w
    grids = np.meshgrid(*([g] * n), indexing="ij")
    offs = np.stack([a.ravel() for a in grids], axis=1)
    wts = np.ones(offs.shape[0])
    for a in np.meshgrid(*([w] * n), indexing="ij"):
        wts = wts * a.ravel()
    p = -(n + 2.0 * s) / 2.0
    out = np.empty(m)
    for lo in range(0, m, _CHUNK):
        y = centers[lo:lo + _CHUNK, None, :] + offs[None, :, :]
        r2 = np.einsum("ijk,ijk->ij", y, y)
        val = _factor(y, r2, code, params) * r2 ** p
        if moment >= 0:
            val = val * y[..., moment] ** 2
        out[lo:lo + _CHUNK] = val @ wts
    return out


def segment_distance(points, a, b):
    """Distance from each point to the union of segments ``[a_j, b_j]`` (2D)."""
    points = np.ascontiguousarray(points, dtype=float)
    a = np.ascontiguousarray(a, dtype=float)
    d = np.ascontiguousarray(b, dtype=float) - a
    dd = np.einsum("ij,ij->i", d, d)
    dd = np.where(dd > 0, dd, 1.0)
    out = np.empty(points.shape[0])
    step = max(1, _CHUNK * 4 // max(1, a.shape[0]))
    for lo in range(0, points.shape[0], step):
        p = points[lo:lo + step]
        px = p[:, None, 0] - a[None, :, 0]
        py = p[:, None, 1] - a[None, :, 1]
        t = np.clip((px * d[None, :, 0] + py * d[None, :, 1]) / dd[None, :], 0.0, 1.0)
        ex = px - t * d[None, :, 0]
        ey = py - t * d[None, :, 1]
        out[lo:lo + step] = np.sqrt(np.min(ex * ex + ey * ey, axis=1))
    return out
