"""Monotone lattice discretization of the Dirichlet problem and its solve.

Kernel mass is lumped onto lattice nodes: offset ``z != 0`` receives the
integral of ``K`` over the cell ``h(z + [-1/2, 1/2]^n)``.  The central cell
is replaced by the second-order term ``c0_k/h^2 (2u_i - u_{i+e_k} - u_{i-e_k})``
with ``c0_k = 1/2 int_{cell_0} y_k^2 K``.  All off-diagonal weights are
nonnegative, so the assembled matrix is a symmetric M-matrix.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from . import _backend
from .kernels import KernelSpec

NEAR = 3          # cells with max|z| <= NEAR are subdivided
NEAR_SUB = 8
NEAR_ORDER = 4
FAR_ORDER = 3


class AssemblyError(RuntimeError):
    """A numerical invariant of the discrete operator is violated."""


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residual, iterations):
        super().__init__(msg)
        self.residual = residual
        self.iterations = iterations


class GridMismatch(ValueError):
    pass


# -- lattice ------------------------------------------------------------------
@dataclass
class Grid:
    lo: np.ndarray
    h: float
    shape: tuple
    sd: np.ndarray = field(repr=False)
    interior_mask: np.ndarray = field(repr=False)

    @property
    def n(self):
        return len(self.shape)

    @property
    def hi(self):
        return self.lo + self.h * (np.asarray(self.shape) - 1)

    def axes(self):
        return [self.lo[k] + self.h * np.arange(m) for k, m in enumerate(self.shape)]

    def coords(self):
        """All box node coordinates, shape ``(*shape, n)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    @property
    def interior_index(self):
        return np.flatnonzero(self.interior_mask.ravel())

    @property
    def size(self):
        return int(self.interior_mask.sum())

    def interior_points(self):
        return self.coords().reshape(-1, self.n)[self.interior_index]

    def distances(self):
        return np.maximum(-self.sd.ravel()[self.interior_index], 0.0)

    def scatter(self, v, fill=0.0):
        """Box array holding interior values ``v`` and ``fill`` elsewhere."""
        out = np.full(int(np.prod(self.shape)), fill, dtype=float)
        out[self.interior_index] = v
        return out.reshape(self.shape)

    def same_as(self, other):
        return (self.shape == other.shape and abs(self.h - other.h) < 1e-15
                and np.allclose(self.lo, other.lo) and np.array_equal(self.interior_mask, other.interior_mask))


def make_grid(domain, h: float, box=None) -> Grid:
    """Lattice of spacing h on ``box`` (default: the domain's box).

    Interior nodes have ``sd < -h/2`` and are not on the box faces.
    """
    if h <= 0:
        raise ValueError("grid spacing must be positive")
    lo, hi = (domain.box_lo, domain.box_hi) if box is None else (np.asarray(box[0], float), np.asarray(box[1], float))
    shape = tuple(int(math.floor((b - a) / h + 1e-9)) + 1 for a, b in zip(lo, hi))
    if min(shape) < 3:
        raise ValueError("box too small for the spacing")
    axes = [lo[k] + h * np.arange(m) for k, m in enumerate(shape)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(shape))
    sd = domain.sd(pts).reshape(shape)
    mask = sd < -h / 2
    for k in range(len(shape)):
        sl = [slice(None)] * len(shape)
        sl[k] = 0
        mask[tuple(sl)] = False
        sl[k] = -1
        mask[tuple(sl)] = False
    return Grid(lo=np.asarray(lo, float), h=float(h), shape=shape, sd=sd, interior_mask=mask)


# -- kernel mass tables ---------------------------------------------------------
def _cells(kernel: KernelSpec, centers, width, order, moment=-1):
    code = kernel.backend_code()
    if code is not None:
        return _backend.cell_integrals(centers, width, code[0], code[1], kernel.s, order, moment)
    # callables: vectorized numpy rule
    g, w = np.polynomial.legendre.leggauss(order)
    n = centers.shape[1]
    offs = np.stack([a.ravel() for a in np.meshgrid(*([0.5 * width * g] * n), indexing="ij")], axis=1)
    wts = np.prod(np.stack([a.ravel() for a in np.meshgrid(*([0.5 * width * w] * n), indexing="ij")], axis=1), axis=1)
    out = np.empty(len(centers))
    step = 4096
    for lo in range(0, len(centers), step):
        y = centers[lo:lo + step, None, :] + offs[None]
        val = kernel(y.reshape(-1, n)).reshape(y.shape[:2])
        if moment >= 0:
            val = val * y[..., moment] ** 2
        out[lo:lo + step] = val @ wts
    return out


def _subdivided(kernel, centers, width, sub, order, moment=-1):
    """Cell integrals with every cell split into ``sub^n`` subcells."""
    n = centers.shape[1]
    t = (np.arange(sub) + 0.5) / sub - 0.5
    offs = np.stack([a.ravel() for a in np.meshgrid(*([t * width] * n), indexing="ij")], axis=1)
    pts = (centers[:, None, :] + offs[None]).reshape(-1, n)
    return _cells(kernel, pts, width / sub, order, moment).reshape(len(centers), -1).sum(axis=1)


def annulus_integral(kernel, a, moment=-1, sub=4, order=6):
    """``int_{Q_a minus Q_{a/2}} K`` (times ``y_moment^2``), ``Q_a = [-a/2, a/2]^n``."""
    n = kernel.n
    t = (np.arange(4) - 1.5) * a / 4
    c = np.stack([g.ravel() for g in np.meshgrid(*([t] * n), indexing="ij")], axis=1)
    keep = np.max(np.abs(c), axis=1) > a / 4
    return float(np.sum(_subdivided(kernel, c[keep], a / 4, sub, order, moment)))


def center_moments(kernel: KernelSpec, h: float) -> np.ndarray:
    """``c0_k = 1/2 int_{Q_h} y_k^2 K``."""
    s = kernel.s
    out = np.empty(kernel.n)
    for k in range(kernel.n):
        if kernel.homogeneous:
            J = annulus_integral(kernel, 1.0, moment=k)
            out[k] = 0.5 * h ** (2 - 2 * s) * J / (1 - 2.0 ** (-(2 - 2 * s)))
        else:
            levels = int(60 / (2 - 2 * s)) + 2
            out[k] = 0.5 * sum(annulus_integral(kernel, h * 2.0 ** (-m), moment=k) for m in range(levels))
    return out


def outer_mass(kernel: KernelSpec, a: float) -> float:
    """``int_{R^n minus Q_a} K``."""
    s = kernel.s
    if kernel.homogeneous:
        J = annulus_integral(kernel, 2.0)
        return a ** (-2 * s) * J / (1 - 2.0 ** (-2 * s))
    levels = int(55 / (2 * s)) + 2
    return sum(annulus_integral(kernel, a * 2.0 ** (m + 1)) for m in range(levels))


def weight_table(kernel: KernelSpec, h: float, half: tuple) -> np.ndarray:
    """Cell masses ``W(z)`` for ``|z_k| <= half_k``, ``W(0) = 0``, before the centre correction."""
    n = kernel.n
    scale = 1.0
    hh = h
    if kernel.homogeneous:
        # W scales as h^(-2s): tabulate at h = 1
        scale = h ** (-2 * kernel.s)
        hh = 1.0
    axes = [np.arange(-m, m + 1) for m in half]
    Z = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    zmax = np.max(np.abs(Z), axis=1)
    W = np.zeros(len(Z))
    far = zmax > NEAR
    near = (zmax <= NEAR) & (zmax > 0)
    if np.any(far):
        W[far] = _cells(kernel, Z[far] * hh, hh, FAR_ORDER)
    W[near] = _subdivided(kernel, Z[near] * hh, hh, NEAR_SUB, NEAR_ORDER)
    W = W.reshape([2 * m + 1 for m in half]) * scale
    W = 0.5 * (W + np.flip(W))
    if kernel.family == "isotropic" and len(set(half)) == 1 and n == 2:
        W = 0.5 * (W + W.T)
    if np.any(W < 0) or not np.all(np.isfinite(W)):
        raise AssemblyError("negative or non-finite lattice weight")
    return W


# -- operator -------------------------------------------------------------------
@dataclass
class DiscreteOperator:
    grid: Grid
    kernel: KernelSpec
    W: np.ndarray = field(repr=False)          # offsets in [-(N_k-1), N_k-1], centre correction included
    diag: float = 0.0
    tails: np.ndarray = field(default=None, repr=False)
    outside_mass: float = 0.0
    threads: int = 1
    _fftW: np.ndarray = field(default=None, repr=False)
    _pshape: tuple = ()

    def __post_init__(self):
        N = self.grid.shape
        self._pshape = tuple(sfft.next_fast_len(2 * m - 1, real=True) for m in N)
        Wc = np.zeros(self._pshape)
        # circular layout: offset z stored at z mod P
        idx = np.ix_(*[np.r_[np.arange(0, m), np.arange(p - m + 1, p)] for m, p in zip(N, self._pshape)])
        src = np.fft.ifftshift(self.W)
        Wc[idx] = src
        self._fftW = sfft.rfftn(Wc, workers=self.threads)

    @property
    def size(self):
        return self.grid.size

    def convolve_box(self, ubox):
        """``sum_j W(i - j) u_j`` over box nodes j, for every box node i."""
        full = sfft.irfftn(sfft.rfftn(ubox, s=self._pshape, workers=self.threads) * self._fftW,
                           s=self._pshape, workers=self.threads)
        return full[tuple(slice(0, m) for m in self.grid.shape)]

    def matvec(self, v):
        g = self.grid
        c = self.convolve_box(g.scatter(v)).ravel()[g.interior_index]
        return self.diag * v - c

    __matmul__ = matvec

    def apply_full(self, box_values, outside: float = 0.0):
        """``(A u)_i`` at interior nodes for arbitrary values on all box nodes.

        Lattice nodes outside the box carry the constant ``outside``.
        """
        g = self.grid
        ub = np.asarray(box_values, float).reshape(g.shape)
        c = self.convolve_box(ub).ravel()[g.interior_index]
        ui = ub.ravel()[g.interior_index]
        out = self.diag * ui - c
        if outside != 0.0:
            ones = self.convolve_box(np.ones(g.shape)).ravel()[g.interior_index]
            out -= outside * (self.diag - ones)
        return out

    def row_dense(self, i):
        g = self.grid
        e = np.zeros(g.size)
        e[i] = 1.0
        return self.matvec(e)

    def to_dense(self):
        if self.size > 4000:
            raise ValueError("operator too large for a dense copy")
        return np.column_stack([self.matvec(e) for e in np.eye(self.size)])

    def dump_triplets(self, path, max_nodes=4000):
        """Write ``row,col,weight`` lines of the assembled matrix."""
        if self.size > max_nodes:
            raise ValueError(f"refusing to dump {self.size} rows (cap {max_nodes})")
        A = self.to_dense()
        r, c = np.nonzero(A)
        with open(path, "w", newline="\n") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row", "col", "weight"])
            for i, j in zip(r, c):
                w.writerow([int(i), int(j), repr(float(A[i, j]))])


def assemble(kernel: KernelSpec, domain, grid: Grid, q=None, threads: int = 1) -> DiscreteOperator:
    """Assemble the lattice operator on ``grid``.

    ``q`` is accepted for interface symmetry; lattice weights use their own
    cell quadrature.
    """
    if kernel.n != grid.n:
        raise GridMismatch("kernel and grid dimensions differ")
    if grid.size == 0:
        raise ValueError("grid has no interior nodes")
    h = grid.h
    half = tuple(m - 1 for m in grid.shape)
    W = weight_table(kernel, h, half)
    c0 = center_moments(kernel, h)
    if np.any(c0 < 0):
        raise AssemblyError("negative centre moment")
    # mass beyond the table: cube of the smallest side minus table cells outside that cube
    m = min(half)
    out = outer_mass(kernel, (2 * m + 1) * h)
    if len(set(half)) > 1:
        axes = [np.arange(-k, k + 1) for k in half]
        Z = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        out -= float(W[np.max(np.abs(Z), axis=-1) > m].sum())
    if out <= 0:
        raise AssemblyError("non-positive mass beyond the weight table")
    center = tuple(half)
    for k in range(grid.n):
        e = list(center)
        e[k] += 1
        W[tuple(e)] += c0[k] / h ** 2
        e[k] -= 2
        W[tuple(e)] += c0[k] / h ** 2
    diag = float(W.sum()) + out
    op = DiscreteOperator(grid=grid, kernel=kernel, W=W, diag=diag, outside_mass=out, threads=threads)
    ones = op.matvec(np.ones(grid.size))
    if not np.all(np.isfinite(ones)) or diag <= 0:
        raise AssemblyError("non-finite operator")
    if np.any(ones < -1e-10 * diag):
        raise AssemblyError("negative row tail")
    op.tails = np.maximum(ones, 0.0)
    return op


# -- fields and solves -----------------------------------------------------------
@dataclass
class SolutionField:
    grid: Grid
    values: np.ndarray
    iterations: int = 0
    residual: float = 0.0
    converged: bool = True

    def box_values(self):
        return self.grid.scatter(self.values)

    def __call__(self, pts):
        """Multilinear interpolation of the box values; zero outside the box."""
        g = self.grid
        pts = np.atleast_2d(np.asarray(pts, float))
        ub = self.box_values()
        t = (pts - g.lo) / g.h
        i0 = np.floor(t).astype(int)
        fr = t - i0
        inside = np.all((t >= 0) & (t <= np.asarray(g.shape) - 1), axis=1)
        out = np.zeros(len(pts))
        i0 = np.clip(i0, 0, np.asarray(g.shape) - 2)
        fr = np.clip(t - i0, 0.0, 1.0)
        for corner in range(2 ** g.n):
            bits = [(corner >> k) & 1 for k in range(g.n)]
            w = np.ones(len(pts))
            idx = []
            for k, b in enumerate(bits):
                w = w * (fr[:, k] if b else 1 - fr[:, k])
                idx.append(i0[:, k] + b)
            out += w * ub[tuple(idx)]
        out[~inside] = 0.0
        return out

    def to_csv(self, path):
        pts = self.grid.interior_points()
        with open(path, "w", newline="\n") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{k + 1}" for k in range(self.grid.n)] + ["u"])
            for p, v in zip(pts, self.values):
                w.writerow([f"{c:.17g}" for c in p] + [f"{v:.17g}"])


def _cg(A: DiscreteOperator, f, tol, max_iter, x0=None):
    x = np.zeros_like(f) if x0 is None else x0.copy()
    r = f - A.matvec(x) if x0 is not None else f.copy()
    p = r.copy()
    rr = float(r @ r)
    fn = float(np.max(np.abs(f)))
    it = 0
    while it < max_iter:
        if np.max(np.abs(r)) <= tol * fn:
            break
        Ap = A.matvec(p)
        alpha = rr / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rr_new = float(r @ r)
        p = r + (rr_new / rr) * p
        rr = rr_new
        it += 1
    return x, it


def solve_dirichlet(A: DiscreteOperator, f, tol: float = 1e-8, max_iter: int = 100_000,
                    x0=None) -> SolutionField:
    """Conjugate gradients until ``max|f - Au| <= tol * max|f|``."""
    f = np.asarray(f, float)
    if f.shape != (A.size,):
        raise GridMismatch("right-hand side does not match the interior index")
    if not np.all(np.isfinite(f)):
        raise ValueError("right-hand side must be finite")
    fn = float(np.max(np.abs(f)))
    if fn == 0.0:
        return SolutionField(grid=A.grid, values=np.zeros(A.size))
    x = None if x0 is None else np.asarray(x0, float)
    used = 0
    while True:
        x, it = _cg(A, f, tol, max_iter - used, x0=x)
        used += it
        res = float(np.max(np.abs(f - A.matvec(x))))
        if res <= tol * fn:
            return SolutionField(grid=A.grid, values=x, iterations=used, residual=res)
        if used >= max_iter or it == 0:
            raise ConvergenceError(f"no convergence in {used} iterations (residual {res:.3e})", res, used)


def residual(A: DiscreteOperator, u, f) -> float:
    vals = u.values if isinstance(u, SolutionField) else np.asarray(u, float)
    if isinstance(u, SolutionField) and not u.grid.same_as(A.grid):
        raise GridMismatch("field lives on another grid")
    f = np.asarray(f, float)
    if vals.shape != (A.size,) or f.shape != (A.size,):
        raise GridMismatch("vector length does not match the interior index")
    return float(np.max(np.abs(A.matvec(vals) - f)))


def discrete_comparison(A: DiscreteOperator, u, v, subset=None, atol: float = 0.0) -> dict:
    """Check the discrete comparison principle on a node set ``S``.

    ``u`` and ``v`` are box arrays (exterior values included) or fields.
    Hypotheses: ``(A(v-u))_i >= -atol`` on S and ``v >= u`` at box nodes off S.
    Conclusion: ``v >= u - atol`` on S.  For an M-matrix the implication is a
    theorem, so ``holds`` false signals a broken invariant.
    """
    g = A.grid
    ub = u.box_values() if isinstance(u, SolutionField) else np.asarray(u, float)
    vb = v.box_values() if isinstance(v, SolutionField) else np.asarray(v, float)
    if ub.shape != g.shape or vb.shape != g.shape:
        raise GridMismatch("fields do not match the operator grid")
    for fld in (u, v):
        if isinstance(fld, SolutionField) and not fld.grid.same_as(g):
            raise GridMismatch("field lives on another grid")
    S = g.interior_mask.copy() if subset is None else (np.asarray(subset, bool).reshape(g.shape) & g.interior_mask)
    w = vb - ub
    # apply the principal submatrix on S with values off S as exterior data
    Aw = A.diag * w - A.convolve_box(w)
    Sflat = S.ravel()
    lhs = Aw.ravel()[Sflat]
    off = ~S
    hyp_ext = bool(np.all(w[off] >= -atol)) if np.any(off) else True
    hyp_op = bool(np.all(lhs >= -atol)) if lhs.size else True
    gap = float(np.min(w[S])) if np.any(S) else 0.0
    conclusion = gap >= -atol
    hyp = hyp_ext and hyp_op
    return {"hypotheses_hold": hyp, "conclusion": conclusion, "holds": (not hyp) or conclusion,
            "worst_gap": gap, "min_operator": float(lhs.min()) if lhs.size else 0.0,
            "min_exterior": float(w[off].min()) if np.any(off) else 0.0}
