"""Random ensembles, table presets and report persistence."""
from __future__ import annotations

import csv
import logging
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .bounds import RIP_LIMIT, Invalid, block_rip_mc, bound_l2, rip_bound
from .block_core import normalize_columns
from .errors import BlockCertError
from .fixedpoint import FixedPointConfig, OmegaQuery, solve_fixed_point
from .inner_solver import InnerOptions, verify_s_star
from .io import write_json

log = logging.getLogger(__name__)

KINDS = ("gaussian", "bernoulli")
PRESETS = ("table1", "table2", "table3", "runtime_compare", "custom")
DASH = "-"


@dataclass
class EnsembleSpec:
    kind: str = "gaussian"
    m: int = 72
    n: int = 4
    p: int = 60
    seed: int = 0
    normalize: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown ensemble {self.kind!r}")
        if self.m < 1 or self.n < 1 or self.p < 1:
            raise ValueError("m, n and p must be positive")


def generate(spec: EnsembleSpec) -> np.ndarray:
    """Draw an ``m x np`` matrix; columns are scaled to unit norm when ``normalize``."""
    rng = np.random.default_rng(spec.seed)
    shape = (spec.m, spec.n * spec.p)
    if spec.kind == "gaussian":
        A = rng.standard_normal(shape)
    else:
        A = rng.choice([-1.0, 1.0], size=shape)
    return normalize_columns(A) if spec.normalize else A


@dataclass
class ExperimentConfig:
    preset: str = "custom"
    ensemble: EnsembleSpec = field(default_factory=EnsembleSpec)
    ms: tuple = (72,)
    ks: tuple = (1,)
    s_values: tuple = (2.0,)
    strategies: tuple = ("hybrid",)
    seeds: tuple = (0,)
    tol: float = 1e-5
    eps: float = 1.0
    rip_trials: int = 1000
    eta_lo: float = 0.1
    eta_hi: float = 10.0
    wide_bracket: tuple = (1e-3, 1e3)
    threads: int = 1
    out_dir: str = "results"

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}")


def preset(name: str, full: bool = False, **overrides) -> ExperimentConfig:
    """Preset configurations; ``full`` widens the row range of the tables."""
    name = name.lower()
    if name in ("table1", "table2", "table3"):
        ms = (72, 96, 120, 144, 168, 192) if full else (72, 96)
        ks = (1, 2, 3, 4) if name != "table1" else ()
        cfg = ExperimentConfig(preset=name, ensemble=EnsembleSpec("gaussian", 72, 4, 60), ms=ms, ks=ks)
    elif name == "runtime_compare":
        cfg = ExperimentConfig(preset=name, ensemble=EnsembleSpec("gaussian", 72, 3, 40), ms=(72,),
                               s_values=(2.0,), strategies=("hybrid", "naive", "bisection"))
    elif name == "custom":
        cfg = ExperimentConfig()
    else:
        raise ValueError(f"unknown preset {name!r}")
    return replace(cfg, **overrides)


def _versions() -> dict:
    return {"blockcert": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _fp_config(cfg: ExperimentConfig, strategy: str = "hybrid", wide: bool = False) -> FixedPointConfig:
    lo, hi = cfg.wide_bracket if wide else (cfg.eta_lo, cfg.eta_hi)
    return FixedPointConfig(tol=cfg.tol, eta_lo=lo, eta_hi=hi, strategy=strategy)


def _cell(x):
    if x is None or x is Invalid:
        return DASH if x is None else "invalid"
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else DASH
    return x


def _matrix_rows(cfg: ExperimentConfig, m: int, seed: int) -> tuple[list, dict]:
    """Everything one (m, seed) draw contributes to its table."""
    spec = replace(cfg.ensemble, m=m, seed=seed)
    A = generate(spec)
    n = spec.n
    t0 = time.perf_counter()
    ver = verify_s_star(A, n, InnerOptions(tol=cfg.tol))
    prov = {"ensemble": asdict(spec), "s_star": ver.s_star, "verify_converged": ver.converged,
            "verify_max_gap": ver.max_gap, "verify_seconds": time.perf_counter() - t0, "cells": []}
    if cfg.preset == "table1":
        row = {"m": m, "seed": seed, "s_star": ver.s_star, "k_star": ver.k_star,
               "seconds": prov["verify_seconds"]}
        return [row], prov
    rows = []
    for k in cfg.ks:
        t0 = time.perf_counter()
        cell = {"m": m, "seed": seed, "k": k}
        note = ""
        omega = None
        try:
            if 2 * k < ver.s_star:
                trace = solve_fixed_point(OmegaQuery(A, n, 2.0 * k, "omega2", s_star=ver.s_star),
                                          _fp_config(cfg))
                omega = trace.omega_lower_bound
                prov["cells"].append({"m": m, "seed": seed, "k": k, "trace": trace.to_dict()})
            else:
                note = "not certified"
        except BlockCertError as exc:
            note = f"{type(exc).__name__}: {exc}"
            log.warning("cell m=%d k=%d failed: %s", m, k, exc)
        delta = None
        if 2 * k <= spec.p and cfg.rip_trials > 0:
            delta = block_rip_mc(A, n, k, cfg.rip_trials, seed)
        rip = rip_bound(delta, cfg.eps) if delta is not None else None
        if cfg.preset == "table3":
            cell["l2_bound_omega"] = bound_l2("bsbp", omega, cfg.eps, k=k) if omega else None
            cell["l2_bound_rip"] = rip
        else:
            cell["omega2"] = omega
            cell["delta_hat"] = delta
            cell["rip_valid"] = delta is not None and delta < RIP_LIMIT
        cell["seconds"] = time.perf_counter() - t0
        cell["note"] = note
        rows.append(cell)
    return rows, prov


def _runtime_rows(cfg: ExperimentConfig, seed: int) -> tuple[list, dict]:
    spec = replace(cfg.ensemble, seed=seed)
    A = generate(spec)
    ver = verify_s_star(A, spec.n, InnerOptions(tol=cfg.tol))
    prov = {"ensemble": asdict(spec), "s_star": ver.s_star, "cells": []}
    rows = []
    for s in cfg.s_values:
        for strategy in cfg.strategies:
            wide = strategy == "bisection"
            fpc = _fp_config(cfg, strategy, wide=wide)
            t0 = time.perf_counter()
            trace = solve_fixed_point(OmegaQuery(A, spec.n, s, "omega2", s_star=ver.s_star), fpc)
            rows.append({"seed": seed, "s": s, "strategy": strategy,
                         "bracket": f"[{fpc.eta_lo:g}, {fpc.eta_hi:g}]",
                         "eta_star": trace.eta_star, "omega_lb": trace.omega_lower_bound,
                         "inner_solves": trace.inner_solves, "seconds": time.perf_counter() - t0})
            prov["cells"].append({"s": s, "strategy": strategy, "trace": trace.to_dict()})
    return rows, prov


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run a preset, write ``<preset>.csv`` and ``<preset>.json`` under ``out_dir``."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    if cfg.preset == "runtime_compare":
        jobs = [(_runtime_rows, (cfg, seed)) for seed in cfg.seeds]
    else:
        jobs = [(_matrix_rows, (cfg, m, seed)) for m in cfg.ms for seed in cfg.seeds]
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(lambda job: job[0](*job[1]), jobs))
    else:
        results = [fn(*args) for fn, args in jobs]
    rows = [r for rs, _ in results for r in rs]
    csv_path = out / f"{cfg.preset}.csv"
    if rows:
        fields = list(rows[0])
        for r in rows:
            fields += [k for k in r if k not in fields]
        with open(csv_path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=fields, restval=DASH)
            w.writeheader()
            for r in rows:
                w.writerow({k: _cell(v) for k, v in r.items()})
    json_path = out / f"{cfg.preset}.json"
    cfg_dict = asdict(cfg)
    write_json(json_path, {"config": cfg_dict, "versions": _versions(),
                           "wall_time": time.perf_counter() - t0,
                           "draws": [p for _, p in results]})
    return {"csv": str(csv_path), "json": str(json_path), "rows": rows}
