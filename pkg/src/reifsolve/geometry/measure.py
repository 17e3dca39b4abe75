"""Monte Carlo estimate of the boundary-layer measure ratio."""
from __future__ import annotations

import numpy as np

from .domains import DomainOracle, split_rng

SHARD = 200_000


def gmt_measure_ratio(domain: DomainOracle, z, rho: float, r: float, n_samples: int,
                      seed: int) -> dict:
    """``|{0 < d < r rho} cap B_rho(z)| / |B_rho|`` with a 95% binomial half-width.

    Samples are drawn in shards of ``SHARD`` points; shard ``k`` uses the
    generator seeded by ``SeedSequence([seed, k])``, so the estimate does not
    depend on how shards are scheduled.
    """
    if n_samples < 1000:
        raise ValueError("n_samples must be >= 1000")
    z = np.asarray(z, float)
    n = domain.n
    hits = 0
    done = 0
    k = 0
    while done < n_samples:
        m = min(SHARD, n_samples - done)
        rng = split_rng(seed, k)
        g = rng.standard_normal((m, n))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        y = z + rho * g * rng.uniform(size=(m, 1)) ** (1.0 / n)
        sd = domain.sd(y)
        hits += int(np.count_nonzero((sd < 0) & (sd > -r * rho)))
        done += m
        k += 1
    p = hits / n_samples
    return {"ratio": p, "ci": 1.96 * float(np.sqrt(p * (1 - p) / n_samples)), "r": r,
            "rho": rho, "n_samples": n_samples}


def fit_measure_exponent(domain, z, rho, rs, n_samples, seed) -> dict:
    """Slope of log ratio against log r."""
    rows = [gmt_measure_ratio(domain, z, rho, r, n_samples, seed) for r in rs]
    x = np.log(np.asarray(rs, float))
    y = np.log([max(row["ratio"], 1e-300) for row in rows])
    slope, icpt = np.polyfit(x, y, 1)
    return {"theta": float(slope), "C": float(np.exp(icpt)), "rows": rows}
