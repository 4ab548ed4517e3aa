"""Fixed points of the relaxed value functions g_s and h_s.

For ``1 < s < s_*`` the functions

    g_{s,i}(eta) = min_P  s*eta * max_j ||delta_ij I - P^T A_j||_2 + ||P||_2
    h_{s,i}(eta) = min_P  s*eta * max_j ||delta_ij I - P^T G_j||_2 + sum_l ||P^l||_2

(``G = A^T A``) are concave and increasing with a unique positive fixed
point; ``g_s = max_i g_{s,i}``.  The fixed point ``eta*`` of ``g_s``
(resp. ``h_s``) satisfies ``eta* >= 1 / omega``, so ``1 / eta*`` is a lower
bound on ``omega_2(A, s)`` (resp. ``omega_binf(A^T A, s)``).

Three strategies locate ``eta*``: plain fixed-point iteration, bisection on
the sign of ``g_s(eta) - eta``, and per-index bisection with index
elimination (``hybrid``).  Inner values are upper bounds on the exact
``g_{s,i}``, which can only push ``eta*`` up and keeps ``1 / eta*`` a valid
lower bound.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import BracketFailure, InvalidQuery, MaxIterations
from .inner_solver import InnerOptions, InnerProblem, InnerWorkspace, solve_inner, verify_s_star

log = logging.getLogger(__name__)

TARGETS = ("omega2", "omegabinf")
STRATEGIES = ("naive", "bisection", "hybrid")


@dataclass
class OmegaQuery:
    """Which goodness measure to bound, for which matrix and ``s``.

    ``s_star`` may be passed when already known; otherwise it is computed on
    first validation.
    """

    A: np.ndarray
    n: int
    s: float
    target: str = "omega2"
    s_star: float | None = None

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        if self.target not in TARGETS:
            raise InvalidQuery(f"unknown target {self.target!r}; expected one of {TARGETS}")
        if self.A.ndim != 2 or self.A.shape[1] % self.n:
            raise InvalidQuery(f"matrix shape {self.A.shape} does not fit block length {self.n}")

    @property
    def penalty(self) -> str:
        return "spectral" if self.target == "omega2" else "blocksum"

    def matrix(self) -> np.ndarray:
        return self.A if self.target == "omega2" else self.A.T @ self.A

    def validate(self, inner: InnerOptions | None = None) -> float:
        if not self.s > 1:
            raise InvalidQuery(f"s must exceed 1, got {self.s}")
        if self.s_star is None:
            self.s_star = verify_s_star(self.A, self.n, inner).s_star
        if not self.s < self.s_star:
            raise InvalidQuery(f"s = {self.s} is not below the certified s_* = {self.s_star:.6g}")
        return self.s_star


@dataclass
class FixedPointConfig:
    tol: float = 1e-5
    eta_lo: float = 0.1
    eta_hi: float = 10.0
    strategy: str = "hybrid"
    max_outer: int = 500
    eta0: float | None = None
    max_expand: int = 20
    inner: InnerOptions | None = None
    check_query: bool = True

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if not 0 < self.eta_lo < self.eta_hi:
            raise ValueError("need 0 < eta_lo < eta_hi")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.inner is None:
            self.inner = InnerOptions(tol=self.tol / 10)


@dataclass
class FixedPointRecord:
    eta: float
    value: float
    index: int | None
    lower: float
    upper: float


@dataclass
class FixedPointTrace:
    strategy: str
    target: str
    s: float
    records: list = field(default_factory=list)
    eta_star: float = math.nan
    omega_lower_bound: float = math.nan
    converged: bool = False
    certificates: dict = field(default_factory=dict, repr=False)
    eta_upper: float = math.inf
    index_fixed_points: dict = field(default_factory=dict)
    inner_solves: int = 0
    inner_iterations: int = 0
    max_inner_gap: float = 0.0
    wall_time: float = 0.0

    def finish(self, eta_star: float, converged: bool) -> "FixedPointTrace":
        self.eta_star = float(eta_star)
        self.omega_lower_bound = 1.0 / self.eta_star
        self.converged = converged
        return self

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "target": self.target,
            "s": self.s,
            "eta_star": self.eta_star,
            "omega_lower_bound": self.omega_lower_bound,
            "eta_upper": self.eta_upper,
            "converged": self.converged,
            "inner_solves": self.inner_solves,
            "inner_iterations": self.inner_iterations,
            "max_inner_gap": self.max_inner_gap,
            "wall_time": self.wall_time,
            "index_fixed_points": {str(k): v for k, v in self.index_fixed_points.items()},
            "records": [
                {"eta": r.eta, "value": r.value, "index": r.index, "lower": r.lower, "upper": r.upper}
                for r in self.records
            ],
        }


class _Evaluator:
    """Per-index values with warm-started certificates and bookkeeping."""

    def __init__(self, Q, n, s, penalty, inner: InnerOptions, trace: FixedPointTrace | None = None,
                 warm: dict | None = None):
        self.ws = InnerWorkspace(Q, n)
        self.n = n
        self.s = s
        self.penalty = penalty
        self.inner = inner
        self.trace = trace
        self.warm = dict(warm or {})
        self.p = self.ws.p

    def value(self, i: int, eta: float, threshold: float | None = None) -> float:
        prob = InnerProblem(self.ws.Q, self.n, i, self.s * eta, self.penalty, workspace=self.ws)
        sol = solve_inner(prob, self.inner, warm=self.warm.get(i), threshold=threshold)
        if not sol.converged:
            log.warning("inner solve for index %d at eta=%.6g stopped with gap %.3g",
                        i, eta, sol.first_order_residual)
        self.warm[i] = sol
        if self.trace is not None:
            self.trace.inner_solves += 1
            self.trace.inner_iterations += sol.iterations
            if threshold is None:
                self.trace.max_inner_gap = max(self.trace.max_inner_gap, sol.first_order_residual)
            self.trace.certificates[i] = sol.P
        return sol.objective

    def above(self, i: int, eta: float, level: float) -> bool:
        """Certified comparison ``g_{s,i}(eta) > level``."""
        v = self.value(i, eta, threshold=level)
        sol = self.warm[i]
        if sol.lower_bound > level:
            return True
        return v > level

    def full(self, eta: float) -> tuple[float, list[float]]:
        vals = [self.value(i, eta) for i in range(self.p)]
        return max(vals), vals


def _evaluate(A, n, s, eta, warm, opts, target):
    query = OmegaQuery(A, n, s, target)
    inner = opts or InnerOptions(tol=1e-6)
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    ev = _Evaluator(query.matrix(), n, s, query.penalty, inner, warm=warm)
    value, per = ev.full(eta)
    return value, per, {i: sol for i, sol in ev.warm.items()}


def eval_g(A, n: int, s: float, eta: float, warm: dict | None = None, opts: InnerOptions | None = None):
    """``g_s(eta)`` with per-index values and certificates.

    ``warm`` maps index to an earlier inner solution; the returned dict can be
    fed back in.  Values are upper bounds on the exact ``g_{s,i}(eta)``.
    """
    return _evaluate(A, n, s, eta, warm, opts, "omega2")


def eval_h(A, n: int, s: float, eta: float, warm: dict | None = None, opts: InnerOptions | None = None):
    """``h_s(eta)`` (Gram matrix, blocksum penalty); see :func:`eval_g`."""
    return _evaluate(A, n, s, eta, warm, opts, "omegabinf")


def _prepare(query: OmegaQuery, config: FixedPointConfig, strategy: str):
    if config.check_query:
        query.validate(config.inner)
    elif not query.s > 1:
        raise InvalidQuery(f"s must exceed 1, got {query.s}")
    trace = FixedPointTrace(strategy, query.target, query.s)
    ev = _Evaluator(query.matrix(), query.n, query.s, query.penalty, config.inner, trace)
    return trace, ev


def _record(trace, eta, value, index, lo, hi):
    trace.records.append(FixedPointRecord(float(eta), float(value), index, float(lo), float(hi)))


def _note_upper(trace, eta, gmax):
    # g(eta) <= eta implies g(g(eta)) <= g(eta): g(eta) is a certified upper point
    if gmax <= eta:
        trace.eta_upper = min(trace.eta_upper, gmax)


def fp_naive(query: OmegaQuery, config: FixedPointConfig | None = None) -> FixedPointTrace:
    """Iterate ``eta <- g_s(eta)`` from ``config.eta0`` (default ``eta_lo``).

    While ascending, ``eta`` jumps to the first per-index value exceeding
    ``eta + tol`` so that most steps need a single inner solve.  Once no index
    improves by ``tol`` the iteration continues with full sweeps and stops when
    the error estimate ``|step| / (1 - rate)`` drops below ``tol``; an
    ascending run then reports the extrapolated limit of the iterates.
    """
    config = config or FixedPointConfig(strategy="naive")
    start = time.perf_counter()
    trace, ev = _prepare(query, config, "naive")
    tol = config.tol
    eta = config.eta0 if config.eta0 is not None else config.eta_lo
    ascending = True
    prev_step = None
    for _ in range(config.max_outer):
        if ascending:
            nxt = None
            for i in range(ev.p):
                v = ev.value(i, eta)
                if v > eta + tol:
                    nxt = v
                    _record(trace, eta, v, i, eta, math.inf)
                    break
            if nxt is not None:
                eta = nxt
                continue
            ascending = False
            # every index was evaluated at eta: this is a full sweep
            gmax = max(ev.warm[i].objective for i in range(ev.p))
        else:
            gmax, _ = ev.full(eta)
        _record(trace, eta, gmax, None, -math.inf, math.inf)
        _note_upper(trace, eta, gmax)
        step = gmax - eta
        # contraction rate from two consecutive full sweeps; unknown on the first
        rate = None
        if prev_step is not None:
            rate = 0.0
            if prev_step != 0.0 and np.sign(step) == np.sign(prev_step):
                rate = min(abs(step / prev_step), 0.99)
        prev_step = step
        eta_new = gmax
        settled = rate is not None and abs(step) / (1.0 - rate) <= tol
        if settled or abs(step) <= 1e-3 * tol:
            rate = rate or 0.0
            trace.wall_time = time.perf_counter() - start
            if step > 0:
                # still ascending: add the geometric tail, which errs upward (the safe side)
                eta_new += step * rate / (1.0 - rate)
            return trace.finish(eta_new, True)
        eta = eta_new
    trace.wall_time = time.perf_counter() - start
    trace.finish(eta, False)
    raise MaxIterations(f"naive iteration did not settle within {config.max_outer} steps", trace)


def _bracket(ev: _Evaluator, trace, lo, hi, config, index=None):
    """Expand ``(lo, hi)`` until it encloses the fixed point."""
    for _ in range(config.max_expand + 1):
        lo_ok = _is_above(ev, index, lo)
        hi_ok = not _is_above(ev, index, hi)
        if lo_ok and hi_ok:
            return lo, hi
        if not lo_ok:
            lo /= 2.0
        if not hi_ok:
            hi *= 2.0
    raise BracketFailure(f"no bracket for the fixed point after {config.max_expand} expansions")


def _is_above(ev: _Evaluator, index, eta) -> bool:
    if index is not None:
        return ev.above(index, eta, eta)
    return any(ev.above(i, eta, eta) for i in range(ev.p))


def fp_bisection(query: OmegaQuery, config: FixedPointConfig | None = None) -> FixedPointTrace:
    """Bisection on the sign of ``g_s(eta) - eta``.

    At the midpoint, the first index with ``g_{s,i}(eta_M) > eta_M`` moves the
    lower end to that value; otherwise all ``p`` values are computed and the
    upper end moves to ``g_s(eta_M)``.
    """
    config = config or FixedPointConfig(strategy="bisection")
    start = time.perf_counter()
    trace, ev = _prepare(query, config, "bisection")
    lo, hi = _bracket(ev, trace, config.eta_lo, config.eta_hi, config)
    steps = 0
    while hi - lo > config.tol:
        steps += 1
        if steps > config.max_outer:
            trace.wall_time = time.perf_counter() - start
            trace.finish(0.5 * (lo + hi), False)
            raise MaxIterations("bisection exceeded max_outer steps", trace)
        mid = 0.5 * (lo + hi)
        raised = False
        for i in range(ev.p):
            if ev.above(i, mid, mid):
                v = ev.value(i, mid)
                lo = min(max(lo, v), hi)
                _record(trace, mid, v, i, lo, hi)
                raised = True
                break
        if not raised:
            # all indices certified at or below mid; tighten to the exact max
            gmax, _ = ev.full(mid)
            gmax = min(gmax, mid)
            hi = max(gmax, lo)
            _note_upper(trace, mid, gmax)
            _record(trace, mid, gmax, None, lo, hi)
    trace.wall_time = time.perf_counter() - start
    trace.eta_upper = min(trace.eta_upper, hi)
    return trace.finish(0.5 * (lo + hi), True)


def _index_bisection(ev, trace, i, lo, hi, tol, max_steps):
    steps = 0
    while hi - lo > tol:
        steps += 1
        if steps > max_steps:
            raise MaxIterations(f"per-index bisection for block {i} exceeded {max_steps} steps", trace)
        mid = 0.5 * (lo + hi)
        v = ev.value(i, mid)
        if v > mid:
            lo = min(v, hi)
        else:
            hi = max(v, lo)
        _record(trace, mid, v, i, lo, hi)
    return 0.5 * (lo + hi), lo, hi


def fp_hybrid(query: OmegaQuery, config: FixedPointConfig | None = None) -> FixedPointTrace:
    """Per-index bisection with index elimination.

    Finds ``eta_i*`` for one index at a time; every index ``j`` with
    ``g_{s,j}(eta_i*) <= eta_i*`` has its own fixed point below ``eta_i*`` and
    is dropped.  The next index is the survivor with the largest value
    (ties to the lowest index).  The last ``eta_i*`` is ``max_i eta_i* = eta*``.
    """
    config = config or FixedPointConfig(strategy="hybrid")
    start = time.perf_counter()
    trace, ev = _prepare(query, config, "hybrid")
    alive = list(range(ev.p))
    current = alive[0]
    lo, hi = config.eta_lo, config.eta_hi
    eta_star = None
    upper = None
    rounds = 0
    while alive:
        rounds += 1
        if rounds > ev.p + 1:
            raise MaxIterations("hybrid strategy did not exhaust the index set", trace)
        alive.remove(current)
        blo, bhi = _bracket(ev, trace, lo, hi, config, index=current)
        eta_i, _, hi_i = _index_bisection(ev, trace, current, blo, bhi, config.tol, config.max_outer)
        trace.index_fixed_points[current] = eta_i
        eta_star = eta_i if eta_star is None else max(eta_star, eta_i)
        # computed g_i(hi_i) <= hi_i; eliminated indices sit below eta_star
        upper = hi_i if upper is None else max(upper, hi_i)
        survivors = []
        for j in alive:
            if ev.above(j, eta_star, eta_star):
                survivors.append((ev.warm[j].objective, j))
        if not survivors:
            break
        survivors.sort(key=lambda t: (-t[0], t[1]))
        alive = [j for _, j in survivors]
        current = alive[0]
        lo = eta_star
        hi = max(hi, eta_star * 2.0)
    # eta_star is the largest per-index fixed point; g_s(eta_star + tol) <= eta_star + tol
    trace.eta_upper = max(upper, eta_star)
    trace.wall_time = time.perf_counter() - start
    return trace.finish(eta_star, True)


_DISPATCH = {"naive": fp_naive, "bisection": fp_bisection, "hybrid": fp_hybrid}


def solve_fixed_point(query: OmegaQuery, config: FixedPointConfig | None = None) -> FixedPointTrace:
    config = config or FixedPointConfig()
    return _DISPATCH[config.strategy](query, config)


def omega_lower_bound(query: OmegaQuery, config: FixedPointConfig | None = None):
    """``(1 / eta*, trace)``; the first entry lower-bounds the goodness measure."""
    trace = solve_fixed_point(query, config)
    return trace.omega_lower_bound, trace
