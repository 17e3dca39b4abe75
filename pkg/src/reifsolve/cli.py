"""Command line entry point: one experiment per invocation.

    reifsolve <experiment> [--config PATH] [--seed N] [--threads N] [--out DIR]

Each run writes its CSV tables plus ``manifest.json`` into the output
directory (``REIFSOLVE_OUT`` wins over ``--out``).  Exit codes: 0 done
(including failed verifications, which are data), 2 configuration error,
3 numerical invariant violated, 4 no convergence.
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import BACKEND
from .artifacts import versions, write_csv, write_kv, write_manifest
from .config import (EXPERIMENTS, ConfigError, ExperimentConfig, build_domain, build_grid,
                     build_kernel, build_quadrature, load_config)
from .solver import AssemblyError, ConvergenceError

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_CONVERGENCE = 0, 2, 3, 4


class Run:
    def __init__(self, cfg: ExperimentConfig, seed: int, threads: int, out: Path):
        self.cfg, self.seed, self.threads, self.out = cfg, seed, threads, out
        self.files = []
        self.results = {}

    def csv(self, name, header, rows):
        write_csv(self.out / name, header, rows)
        self.files.append(name)

    def kv(self, name, values):
        write_kv(self.out / name, values)
        self.files.append(name)

    def solve(self, K, D, g, f=None):
        from .solver import assemble, solve_dirichlet
        A = assemble(K, D, g, threads=self.threads)
        f = self.cfg.get("f", 1.0) if f is None else f
        fv = np.full(g.size, float(f))
        gc = self.cfg.grid
        u = solve_dirichlet(A, fv, tol=gc.get("tol", 1e-8), max_iter=gc.get("max_iter", 100_000))
        return A, u, fv


def _coords(n):
    return [f"x{k + 1}" for k in range(n)]


def _corkscrew_params(cfg, domain):
    from .barriers import DEFAULT_CORKSCREW
    from .geometry import CorkscrewParams
    if "R" in cfg.experiment or "kappa" in cfg.experiment:
        base = DEFAULT_CORKSCREW.get(domain.kind, CorkscrewParams(1.0, 0.25))
        try:
            return CorkscrewParams(cfg.get("R", base.R), cfg.get("kappa", base.kappa))
        except ValueError as exc:
            raise ConfigError(f"[experiment] {exc}") from None
    return None


# -- experiments ---------------------------------------------------------------

def run_solve(run: Run):
    K = build_kernel(run.cfg)
    D = build_domain(run.cfg)
    g = build_grid(run.cfg, D)
    A, u, f = run.solve(K, D, g)
    u.to_csv(run.out / "u.csv")
    run.files.append("u.csv")
    run.results.update(residual=u.residual, relative_residual=u.residual / float(np.max(np.abs(f))),
                       iterations=u.iterations, nodes=g.size, tol=run.cfg.grid.get("tol", 1e-8))


def _report_csv(run, rep, n):
    run.csv("report.csv", _coords(n) + ["d", "ratio", "error_bound", "pass"], rep.csv_rows())
    run.results.update(inf_ratio=rep.inf_ratio, passed=rep.passed, d0=rep.d0_used,
                       power=rep.power, points=len(rep.distances), skipped=rep.skipped)


def run_verify_indicator(run: Run):
    from .barriers import verify_indicator_supersolution
    K = build_kernel(run.cfg)
    D = build_domain(run.cfg)
    rep = verify_indicator_supersolution(K, D, run.cfg.get("n_points", 200), run.seed,
                                         params=_corkscrew_params(run.cfg, D), d0=run.cfg.get("d0"),
                                         q=build_quadrature(run.cfg))
    _report_csv(run, rep, D.n)


def run_verify_delta_eps(run: Run):
    from .barriers import scan_eps, verify_delta_eps_supersolution
    cfg = run.cfg
    K = build_kernel(cfg)
    D = build_domain(cfg)
    kw = dict(params=_corkscrew_params(cfg, D), d0=cfg.get("d0"),
              q=build_quadrature(cfg, far_cutoff=1e4))
    n_points = cfg.get("n_points", 200)
    if "eps" in cfg.experiment:
        rep = verify_delta_eps_supersolution(K, D, cfg.get("eps"), n_points, run.seed,
                                             screen=cfg.get("screen", 0), **kw)
        run.results["eps"] = cfg.get("eps")
    else:
        eps0, rep, trail = scan_eps(K, D, n_points, run.seed, eps_min=cfg.get("eps_min", 1e-3),
                                    screen=cfg.get("screen", 16), **kw)
        run.csv("eps_scan.csv", ["eps", "inf_ratio"], trail)
        run.results["eps0"] = eps0
    _report_csv(run, rep, D.n)


def run_verify_comparison(run: Run):
    from .barriers import (BarrierFamily, barrier_floor, fit_barrier_family,
                           verify_comparison_system)
    cfg = run.cfg
    K = build_kernel(cfg)
    D = build_domain(cfg)
    eta = float(D.params.get("eta", cfg.domain.get("eta", 0.05)))
    fam, fit = fit_barrier_family(K, eta, n_points=cfg.get("fit_points", 32), seed=run.seed)
    if "sigma" in cfg.experiment or "strict" in cfg.experiment:
        fam = BarrierFamily(eta=fam.eta, rho=fam.rho, sigma=cfg.get("sigma", fam.sigma), eps=fam.eps,
                            s=fam.s, n=fam.n, C_H=fam.C_H, c=fam.c, strict=cfg.get("strict", True))
    params = fam.to_dict()
    params["sigma_max"] = fit["sigma_max"]
    run.kv("params.txt", params)
    g = build_grid(cfg, D)
    A, u, f = run.solve(K, D, g)
    x0 = cfg.get("x0")
    x0 = D.anchor() if x0 is None else np.asarray(x0, float)
    q = build_quadrature(cfg, far_cutoff=1e4)
    floor = barrier_floor(fam, K, 1 + fam.eta, seed=run.seed, q=q)
    rows = []
    for k in cfg.get("levels", [0, 1, 2]):
        r = verify_comparison_system(fam, K, D, g, k, field=u, f=f, A=A, x0=x0, floor=floor,
                                     max_points=cfg.get("max_points", 128), seed=run.seed, q=q)
        det = r.details
        rows.append((r.k, r.radius, r.check_a, r.check_b, r.check_c, r.step_ok, r.admissible,
                     r.passed, det["a_min_lower"], det["f_tilde"], det["nodes_S"],
                     det["sup_next"], det["bound_next"]))
    run.csv("comparison.csv", ["k", "radius", "check_a", "check_b", "check_c", "step_ok",
                               "admissible", "pass", "a_min_lower", "f_tilde", "nodes_S",
                               "sup_next", "bound_next"], rows)
    run.results.update(passed=all(row[7] for row in rows), floor=floor, M=det["M"],
                       residual=u.residual, levels=len(rows))


def run_measure_exponent(run: Run):
    from .regularity import (boundary_growth, default_radii, fit_holder_exponent,
                             induction_audit, load_barrier_params)
    cfg = run.cfg
    K = build_kernel(cfg)
    D = build_domain(cfg)
    g = build_grid(cfg, D)
    A, u, f = run.solve(K, D, g)
    x0 = cfg.get("x0")
    x0 = D.anchor() if x0 is None else np.asarray(x0, float)
    radii = default_radii(g.h, cfg.get("feature", 1.0), cfg.get("n_radii", 10))
    tol = cfg.grid.get("tol", 1e-8)
    fit = fit_holder_exponent(boundary_growth(u, D, x0, radii), tol=tol)
    run.csv("growth.csv", _coords(D.n) + ["r", "sup"], fit.csv_rows())
    run.csv("fit.csv", _coords(D.n) + ["alpha", "C", "r2"], [(*x0, fit.alpha, fit.C, fit.r2)])
    rho, sigma = cfg.get("rho", 0.5), cfg.get("audit_sigma")
    if "barrier_params" in cfg.experiment:
        rho, sigma = load_barrier_params(cfg.get("barrier_params"))
    if sigma is None:
        sigma = max(fit.alpha - 0.05, 1e-3)
    audit = induction_audit(u, D, x0, rho, sigma, cfg.get("k_max", 6))
    run.csv("audit.csv", ["k", "M_k", "ratio"], audit.csv_rows())
    run.results.update(alpha=fit.alpha, C=fit.C, r2=fit.r2, gamma=fit.gamma(K.s),
                       audit_passed=audit.passed, audit_max_ratio=audit.max_ratio,
                       audit_slack=audit.slack, residual=u.residual)


def run_reifenberg(run: Run):
    from .geometry import reifenberg_estimate
    cfg = run.cfg
    D = build_domain(cfg)
    rep = reifenberg_estimate(D, cfg.get("r0", 1.0), cfg.get("n_points", 16), cfg.get("n_scales", 6),
                              run.seed, samples_per_ball=cfg.get("samples_per_ball", 1000))
    run.csv("report.csv", _coords(D.n) + ["r", "defect", "separation_ok"], rep.csv_rows())
    run.results.update(eta_hat=rep.eta_hat, eta_hat_centroid=rep.eta_hat_centroid,
                       separation_ok=rep.separation_ok, **rep.coverage)


def run_corkscrew(run: Run):
    from .geometry import CorkscrewParams, corkscrew_check
    cfg = run.cfg
    D = build_domain(cfg)
    try:
        p = CorkscrewParams(cfg.get("R", 1.0), cfg.get("kappa", 0.25))
    except ValueError as exc:
        raise ConfigError(f"[experiment] {exc}") from None
    rep = corkscrew_check(D, p, cfg.get("n_boundary", 16), cfg.get("n_scales", 6), run.seed)
    n = D.n
    rows = [(*z, r, *w, m) for z, r, w, m in rep["witnesses"]]
    run.csv("report.csv", [f"z{k + 1}" for k in range(n)] + ["r"] + [f"w{k + 1}" for k in range(n)]
            + ["margin"], rows)
    run.results.update(ok=rep["ok"], worst_margin=rep["worst_margin"], pairs=rep["pairs"])


def run_gmt(run: Run):
    from .geometry import fit_measure_exponent
    cfg = run.cfg
    D = build_domain(cfg)
    z = cfg.get("x0")
    z = D.anchor() if z is None else np.asarray(z, float)
    rs = cfg.get("r", [0.05, 0.1, 0.2, 0.4])
    rep = fit_measure_exponent(D, z, cfg.get("rho", 1.0), rs, cfg.get("n_samples", 100_000), run.seed)
    run.csv("report.csv", ["r", "ratio", "ci"], [(row["r"], row["ratio"], row["ci"]) for row in rep["rows"]])
    run.results.update(theta=rep["theta"], C=rep["C"])


def run_eta_sweep(run: Run):
    from .regularity import default_radii, eta_sweep
    cfg = run.cfg
    K = build_kernel(cfg)
    dom = cfg.domain
    if dom.get("kind", "koch_flat") != "koch_flat":
        raise ConfigError("[domain] eta-sweep runs on koch_flat")
    h = cfg.grid.get("h", 1 / 128)
    kw = dict(s=K.s, h=h, depth=dom.get("depth", 3), kernel=K, threads=run.threads,
              tol=cfg.grid.get("tol", 1e-8),
              radii=default_radii(h, cfg.get("feature", 1.0), cfg.get("n_radii", 10)))
    if "box_lo" in cfg.grid or "box_hi" in cfg.grid:
        kw["box"] = (cfg.grid["box_lo"], cfg.grid["box_hi"])
    rows = eta_sweep(cfg.get("etas", [0.02, 0.05, 0.1, 0.2]), **kw)
    run.csv("alpha_vs_eta.csv", ["eta", "alpha", "C", "r2"], [(r.eta, r.alpha, r.C, r.r2) for r in rows])
    alphas = [r.alpha for r in rows]
    run.results.update(alphas=alphas, gammas=[max(K.s - a, 0.0) for a in alphas],
                       iterations=[r.iterations for r in rows])


RUNNERS = {"solve": run_solve, "verify-indicator": run_verify_indicator,
           "verify-delta-eps": run_verify_delta_eps, "verify-comparison": run_verify_comparison,
           "measure-exponent": run_measure_exponent, "reifenberg": run_reifenberg,
           "corkscrew": run_corkscrew, "gmt": run_gmt, "eta-sweep": run_eta_sweep}
assert set(RUNNERS) == set(EXPERIMENTS)


def build_parser():
    p = argparse.ArgumentParser(prog="reifsolve", description="Boundary regularity experiments.")
    sub = p.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, default=None)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--out", type=Path, default=None)
    return p


def _exit_code(exc) -> int:
    from .barriers import PreconditionError
    from .geometry import DomainError
    from .kernels import KernelDomainError
    from .nonlocal_op import GrowthError
    from .regularity import FitError
    if isinstance(exc, ConvergenceError):
        return EXIT_CONVERGENCE
    if isinstance(exc, (AssemblyError, GrowthError, FitError, FloatingPointError)):
        return EXIT_INVARIANT
    if isinstance(exc, (ConfigError, DomainError, KernelDomainError, PreconditionError, ValueError,
                        OSError)):
        return EXIT_CONFIG
    raise exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        cfg = ExperimentConfig() if args.config is None else load_config(args.config)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
    except ConfigError as exc:
        print(f"reifsolve: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = os.environ.get("REIFSOLVE_OUT") or args.out or cfg.output.get("dir") or "reifsolve_out"
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    run = Run(cfg, args.seed, args.threads, out)
    code, error = EXIT_OK, None
    try:
        RUNNERS[args.experiment](run)
    except Exception as exc:  # mapped to exit codes, re-raised if unknown
        code = _exit_code(exc)
        error = f"{type(exc).__name__}: {exc}"
        print(f"reifsolve: {error}", file=sys.stderr)
        if isinstance(exc, ConvergenceError):
            run.results.update(residual=exc.residual, iterations=exc.iterations)
    write_manifest(out / "manifest.json", {
        "experiment": args.experiment, "config_sha256": cfg.sha256(), "config": cfg.sections(),
        "seed": args.seed, "threads": args.threads, "backend": BACKEND, "versions": versions(),
        "wall_time_s": time.perf_counter() - t0, "exit_code": code, "error": error,
        "files": run.files, "results": run.results})
    return code


if __name__ == "__main__":
    sys.exit(main())
