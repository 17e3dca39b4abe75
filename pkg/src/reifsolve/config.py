"""INI experiment configuration: a closed schema, typed values and builders.

Every section and key is listed in ``SCHEMA``; anything else is rejected.
List values are comma separated.  The canonical form (sorted, typed, repr'd)
is what gets hashed, so comments and spacing do not change the hash.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelSpec, anisotropic_cos2, isotropic, modulated_two_level
from .nonlocal_op import PVQuadrature


class ConfigError(ValueError):
    pass


def _floats(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text):
    return [int(t) for t in text.split(",") if t.strip()]


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


SCHEMA = {
    "kernel": {"family": str, "n": int, "s": float, "lambda": float, "Lambda": float,
               "mean": float, "amp": float, "radius": float, "inner": float, "outer": float},
    "domain": {"kind": str, "eta": float, "depth": int, "angle": float, "base": float,
               "extension": float, "slope": float, "period": float, "extent": float,
               "scale": float, "radius": float, "center": _floats, "a": _floats, "b": _floats,
               "resolution": float},
    "grid": {"h": float, "box_lo": _floats, "box_hi": _floats, "tol": float, "max_iter": int},
    "quadrature": {"inner_radius_factor": float, "growth": float, "radial_per_shell": int,
                   "min_angular": int, "max_angular": int, "far_cutoff": float,
                   "tail_rule": str},
    "experiment": {
        # shared
        "f": float, "n_points": int, "x0": _floats,
        # verify-*
        "d0": float, "eps": float, "eps_min": float, "screen": int, "R": float, "kappa": float,
        # verify-comparison
        "levels": _ints, "fit_points": int, "max_points": int, "sigma": float, "strict": _bool,
        # measure-exponent / eta-sweep
        "n_radii": int, "feature": float, "etas": _floats, "rho": float, "k_max": int,
        "audit_sigma": float, "barrier_params": str,
        # geometry
        "r0": float, "n_scales": int, "samples_per_ball": int, "n_boundary": int,
        "r": _floats, "n_samples": int,
    },
    "output": {"dir": str},
}

EXPERIMENTS = ("solve", "verify-indicator", "verify-delta-eps", "verify-comparison",
               "measure-exponent", "reifenberg", "corkscrew", "gmt", "eta-sweep")


@dataclass
class ExperimentConfig:
    kernel: dict = field(default_factory=dict)
    domain: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    quadrature: dict = field(default_factory=dict)
    experiment: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    def sections(self) -> dict:
        return {k: getattr(self, k) for k in SCHEMA}

    def canonical(self) -> str:
        return json.dumps(self.sections(), sort_keys=True, separators=(",", ":"))

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def get(self, key, default=None):
        return self.experiment.get(key, default)


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    cfg = ExperimentConfig()
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        out = getattr(cfg, sec)
        for key, raw in cp.items(sec):
            conv = SCHEMA[sec].get(key)
            if conv is None:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
            try:
                out[key] = conv(raw.strip())
            except ValueError as exc:
                raise ConfigError(f"[{sec}] {key}: {exc}") from None
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None


# -- builders -----------------------------------------------------------------

def build_kernel(cfg: ExperimentConfig) -> KernelSpec:
    k = cfg.kernel
    fam = k.get("family", "isotropic")
    n, s = k.get("n", 2), k.get("s", 0.5)
    try:
        if fam == "isotropic":
            return isotropic(n, s)
        if fam == "anisotropic":
            return anisotropic_cos2(n, s, k.get("mean", 1.0), k.get("amp", 0.0),
                                    k.get("lambda"), k.get("Lambda"))
        if fam == "modulated":
            return modulated_two_level(n, s, k.get("radius", 1.0), k.get("inner", 1.0),
                                       k.get("outer", 1.0), k.get("lambda"), k.get("Lambda"))
    except ValueError as exc:
        raise ConfigError(f"[kernel] {exc}") from None
    raise ConfigError(f"[kernel] unknown family {fam!r}")


def domain_params(cfg: ExperimentConfig) -> tuple:
    d = dict(cfg.domain)
    kind = d.pop("kind", "ball")
    res = d.pop("resolution", None)
    return kind, d, res


def build_domain(cfg: ExperimentConfig, n: int = None):
    from .geometry import DomainError, make_domain
    kind, params, res = domain_params(cfg)
    n = cfg.kernel.get("n", 2) if n is None else n
    box = None
    if "box_lo" in cfg.grid or "box_hi" in cfg.grid:
        box = _box(cfg)
    try:
        return make_domain(kind, params, resolution=res, n=n, box=box)
    except (DomainError, ValueError) as exc:
        raise ConfigError(f"[domain] {exc}") from None


def _box(cfg):
    g = cfg.grid
    if "box_lo" not in g or "box_hi" not in g:
        raise ConfigError("[grid] box_lo and box_hi go together")
    return np.asarray(g["box_lo"], float), np.asarray(g["box_hi"], float)


def build_grid(cfg: ExperimentConfig, domain):
    from .solver import make_grid
    g = cfg.grid
    box = _box(cfg) if "box_lo" in g or "box_hi" in g else None
    try:
        return make_grid(domain, g.get("h", 1 / 32), box=box)
    except ValueError as exc:
        raise ConfigError(f"[grid] {exc}") from None


def build_quadrature(cfg: ExperimentConfig, **defaults) -> PVQuadrature:
    kw = dict(defaults)
    kw.update(cfg.quadrature)
    try:
        return PVQuadrature(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[quadrature] {exc}") from None
