"""Independent reference values shared by the test modules."""
import math

import numpy as np
from scipy.integrate import quad

from reifsolve.geometry import make_domain
from reifsolve.kernels import isotropic
from reifsolve.nonlocal_op import evaluate_pv
from reifsolve.solver import assemble, make_grid, solve_dirichlet


def torsion_constant_closed_form(n, s):
    # L (1 - |x|^2)_+^s for the unnormalized kernel |y|^(-n-2s)
    return math.gamma(1 + s) * math.pi ** (n / 2) * abs(math.gamma(-s)) / math.gamma(n / 2)


def torsion_profile(x, s):
    r2 = np.sum(np.asarray(x) ** 2, axis=-1)
    return np.maximum(1 - r2, 0.0) ** s


def torsion_constant_evaluated(s, n=2):
    """``L u*(0)`` for ``u* = (1 - |x|^2)_+^s`` by the point evaluator."""
    ball = make_domain("ball", n=n)
    return evaluate_pv(isotropic(n, s), lambda p: torsion_profile(p, s), np.zeros(n),
                       singular_set=ball, growth=(0.0, 0.0), hessian_bound=2 * s * (1 + 2 * 1e-3))


def ball_torsion_errors(h, s=0.5, gamma=None):
    """(sup error at nodes with d >= 4h, sup of the oracle) for ``Lu = 1`` on ``B_1``."""
    D = make_domain("ball")
    g = make_grid(D, h, box=([-1 - 2 * h, -1 - 2 * h], [1 + 2 * h, 1 + 2 * h]))
    A = assemble(isotropic(2, s), D, g)
    u = solve_dirichlet(A, np.ones(g.size))
    gamma = 1 / torsion_constant_evaluated(s).value if gamma is None else gamma
    pts = g.interior_points()
    exact = gamma * torsion_profile(pts, s)
    far = g.distances() >= 4 * h
    return float(np.max(np.abs(u.values - exact)[far])), float(np.max(exact)), u


def gauss(p):
    return np.exp(-np.sum(np.asarray(p) ** 2, axis=-1))


def radial_gauss_oracle(s):
    """``L e^{-|x|^2}`` at the origin, n = 2, by 1D quadrature of the radial profile."""
    # 2 pi int_0^inf (1 - e^{-r^2}) r^{-1-2s} dr, split at 1 for quad
    f = lambda r: (1 - math.exp(-r * r)) * r ** (-1 - 2 * s)
    return 2 * math.pi * (quad(f, 0, 1, limit=200)[0] + quad(f, 1, math.inf, limit=200)[0])


def sawtooth_oracles(m):
    # peak defect with the plane forced through the peak vs. through the sample centroid
    return m / math.sqrt(1 + m * m), m / (2 * math.sqrt(1 + m * m))


def sagitta_oracle(r, R):
    """Defect at scale ``r`` of a circle of radius ``R`` against its tangent line."""
    t = r * math.sqrt(1 - (r / (2 * R)) ** 2)
    return (R - math.sqrt(R * R - t * t)) / r


def slab_oracle(r):
    """Area fraction of the unit disc within ``r`` of a diameter."""
    return (2 / math.pi) * quad(lambda t: math.sqrt(1 - t * t), 0, r)[0]
