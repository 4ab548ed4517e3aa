"""Recovery error bounds from certified goodness lower bounds, plus block-RIP estimates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .block_core import BlockStructure
from .errors import BlockCertError, InvalidK, NonPositiveOmega
from .fixedpoint import FixedPointConfig, OmegaQuery, solve_fixed_point
from .inner_solver import verify_s_star

VARIANTS = ("bsbp", "bsds", "bslasso")
RIP_LIMIT = math.sqrt(2.0) - 1.0


class _Invalid:
    """Marker for a RIP bound whose hypothesis fails."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "Invalid"

    def __str__(self):
        return "invalid (delta >= sqrt(2)-1)"

    def __bool__(self):
        return False


Invalid = _Invalid()


def _check(variant, omega_lb, noise, kappa):
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if not omega_lb > 0:
        raise NonPositiveOmega(f"omega lower bound must be positive, got {omega_lb}")
    if noise < 0:
        raise ValueError("noise parameter must be nonnegative")
    if variant == "bslasso" and not (kappa is not None and 0 < kappa < 1):
        raise ValueError("bslasso needs kappa in (0, 1)")


def s_used(variant: str, k: int, kappa: float | None = None) -> float:
    """The ``s`` at which the goodness measure must be certified."""
    if variant == "bslasso":
        return 2.0 * k / (1.0 - kappa)
    return 2.0 * k


def target_for(variant: str) -> str:
    return "omega2" if variant == "bsbp" else "omegabinf"


def bound_binf(variant: str, omega_lb: float, noise: float, kappa: float | None = None) -> float:
    _check(variant, omega_lb, noise, kappa)
    if variant == "bslasso":
        return (1.0 + kappa) * noise / omega_lb
    return 2.0 * noise / omega_lb


def bound_l2(variant: str, omega_lb: float, noise: float, kappa: float | None = None,
             k: int = 1) -> float:
    _check(variant, omega_lb, noise, kappa)
    if k < 1:
        raise InvalidK(f"k must be at least 1, got {k}")
    if variant == "bslasso":
        return math.sqrt(2 * k / (1.0 - kappa)) * (1.0 + kappa) * noise / omega_lb
    return 2.0 * math.sqrt(2 * k) * noise / omega_lb


def block_rip_mc(A, n: int, k: int, trials: int = 1000, seed: int = 0) -> float:
    """Monte-Carlo under-estimate of the block RIP constant of order ``2k``.

    Trial ``t`` draws its ``2k`` blocks from ``default_rng([seed, t])``, so
    runs with more trials extend runs with fewer.
    """
    A = np.asarray(A, dtype=float)
    st = BlockStructure.of(A.shape[1], n)
    if k < 1 or 2 * k > st.p:
        raise InvalidK(f"need 1 <= 2k <= p = {st.p}, got k = {k}")
    if trials < 1:
        raise ValueError("trials must be positive")
    Ab = A.reshape(A.shape[0], st.p, n)
    delta = 0.0
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        T = np.sort(rng.choice(st.p, size=2 * k, replace=False))
        sub = Ab[:, T, :].reshape(A.shape[0], -1)
        sv = np.linalg.svd(sub, compute_uv=False)
        smin = sv[-1] if sub.shape[1] <= sub.shape[0] else 0.0
        delta = max(delta, sv[0] ** 2 - 1.0, 1.0 - smin ** 2)
    return float(delta)


def rip_bound(delta: float, eps: float = 1.0):
    """``4 sqrt(1+delta) / (1 - (1+sqrt 2) delta) * eps``, or ``Invalid``."""
    if not delta < RIP_LIMIT:
        return Invalid
    return 4.0 * math.sqrt(1.0 + delta) / (1.0 - (1.0 + math.sqrt(2.0)) * delta) * eps


@dataclass
class BoundReport:
    variant: str
    k: int
    s_used: float
    omega_lb: float | None
    noise: float
    kappa: float | None = None
    binf_bound: float | None = None
    l2_bound: float | None = None
    rip_delta_hat: float | None = None
    rip_bound: object = None
    certified: bool = True
    note: str = ""
    trace: dict | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        rb = self.rip_bound
        return {
            "variant": self.variant,
            "k": self.k,
            "s_used": self.s_used,
            "omega_lb": self.omega_lb,
            "noise": self.noise,
            "kappa": self.kappa,
            "binf_bound": self.binf_bound,
            "l2_bound": self.l2_bound,
            "rip_delta_hat": self.rip_delta_hat,
            "rip_bound": str(rb) if rb is Invalid else rb,
            "certified": self.certified,
            "note": self.note,
        }

    def row(self) -> dict:
        """Flat table row; uncertified cells become dashes."""
        def cell(x):
            if x is None:
                return "-"
            if x is Invalid:
                return "invalid"
            return x
        d = self.to_dict()
        return {key: cell(getattr(self, key)) if key in ("omega_lb", "binf_bound", "l2_bound",
                                                         "rip_delta_hat", "rip_bound") else d[key]
                for key in d}


@dataclass
class ReportConfig:
    variants: tuple = ("bsbp",)
    kappa: float = 0.5
    rip_trials: int = 1000
    seed: int = 0
    fixed_point: FixedPointConfig | None = None
    s_star: float | None = None


def bound_report(A, n: int, k: int, variant: str, noise: float = 1.0,
                 kappa: float | None = None, s_star: float | None = None,
                 fp: FixedPointConfig | None = None, rip_trials: int = 0,
                 seed: int = 0) -> BoundReport:
    """One report row: certify omega at ``s_used`` and turn it into bounds."""
    A = np.asarray(A, dtype=float)
    s = s_used(variant, k, kappa)
    if s_star is None:
        s_star = verify_s_star(A, n).s_star
    rep = BoundReport(variant, k, s, None, noise, kappa if variant == "bslasso" else None)
    if rip_trials > 0 and variant == "bsbp":
        rep.rip_delta_hat = block_rip_mc(A, n, k, rip_trials, seed)
        rep.rip_bound = rip_bound(rep.rip_delta_hat, noise)
    if not s < s_star:
        rep.certified = False
        rep.note = f"s = {s:g} not below s_* = {s_star:.4g}"
        return rep
    trace = solve_fixed_point(OmegaQuery(A, n, s, target_for(variant), s_star=s_star), fp)
    rep.trace = trace.to_dict()
    rep.omega_lb = trace.omega_lower_bound
    try:
        rep.binf_bound = bound_binf(variant, rep.omega_lb, noise, kappa)
        rep.l2_bound = bound_l2(variant, rep.omega_lb, noise, kappa, k)
    except NonPositiveOmega as exc:
        rep.certified = False
        rep.note = str(exc)
    return rep


def compare_report(A, n: int, k_values, noise_params: dict | None = None,
                   config: ReportConfig | None = None) -> list[BoundReport]:
    """Rows for every ``(k, variant)``; failures are recorded per row."""
    config = config or ReportConfig()
    noise_params = noise_params or {}
    s_star = config.s_star
    if s_star is None:
        s_star = verify_s_star(A, n).s_star
    rows = []
    for k in k_values:
        for variant in config.variants:
            noise = noise_params.get(variant, 1.0)
            try:
                rows.append(bound_report(
                    A, n, k, variant, noise, config.kappa, s_star, config.fixed_point,
                    config.rip_trials, config.seed))
            except BlockCertError as exc:
                rows.append(BoundReport(variant, k, s_used(variant, k, config.kappa), None, noise,
                                        certified=False, note=f"{type(exc).__name__}: {exc}"))
    return rows
