"""Time the compiled core against the numpy fallback on typical workloads.

    python3 benchmarks/bench_core.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from reifsolve import _core_py
from reifsolve.geometry import make_domain
from reifsolve.kernels import isotropic, modulated_two_level

try:
    from reifsolve import _core
except ImportError:
    _core = None


def cases():
    rng = np.random.default_rng(0)
    # kernel cell masses for an assembly stencil at h = 1/64
    h = 1 / 64
    idx = np.argwhere(np.ones((41, 41), bool)) - 20
    idx = idx[np.any(idx != 0, axis=1)]
    centers = idx * h
    for K, name in ((isotropic(2, 0.5), "isotropic"), (modulated_two_level(2, 0.5, 0.1, 1.0, 2.0), "modulated")):
        code, params = K.backend_code()
        yield (f"cell_integrals {name} ({len(centers)} cells)",
               lambda m, code=code, params=params: m.cell_integrals(centers, h, code, params, 0.5, 4))
    # point-to-polyline distance for a depth 5 koch boundary
    D = make_domain("koch_flat", {"eta": 0.05, "depth": 5})
    v = D.vertices
    pts = rng.uniform([-1, -0.5], [1, 1.5], size=(20_000, 2))
    yield (f"segment_distance ({len(pts)} points, {len(v) - 1} segments)",
           lambda m: m.segment_distance(pts, v[:-1], v[1:]))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _core is None:
        print("compiled core not built; only the fallback is timed")
    print(f"{'case':58s} {'numpy':>10s} {'cython':>10s} {'speedup':>8s}")
    for label, fn in cases():
        tp = min(timeit.repeat(lambda: fn(_core_py), number=1, repeat=args.repeat))
        if _core is None:
            print(f"{label:58s} {tp:10.4f}")
            continue
        a, b = fn(_core_py), fn(_core)
        assert np.allclose(a, b, rtol=1e-10, atol=0), label
        tc = min(timeit.repeat(lambda: fn(_core), number=1, repeat=args.repeat))
        print(f"{label:58s} {tp:10.4f} {tc:10.4f} {tp / tc:7.1f}x")


if __name__ == "__main__":
    main()
