"""Brute-force reference values for tiny problems.

These are slow and only meant to check the scalable certificates.  Each
returns a one-sided estimate:

* ``oracle_f_s``     lower estimate of f_s(eta) (sampled directions)
* ``oracle_omega``   upper estimate of omega
* ``oracle_s_star``  upper estimate of the kernel ratio s^*
* ``oracle_rho``     upper estimate of the block l1-constrained minimal singular value

Directions on the unit sphere of R^n are the 2n signed axes followed by a
Halton sequence pushed through the Gaussian quantile and normalized, so a
larger ``direction_samples`` always extends a smaller one.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import cvxpy as cp
import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm as _gauss, qmc

from .block_core import BlockStructure, block_norm, block_norms, kernel_basis
from .errors import KernelTooLarge, NoBracket, TooLarge

MAX_COLUMNS = 12
MAX_KERNEL = 6


@dataclass
class OracleConfig:
    direction_samples: int = 32
    restarts: int = 8
    tol: float = 1e-7
    seed: int = 0
    method: str = "direct"
    solver: str = "CLARABEL"

    def __post_init__(self):
        if self.direction_samples < 8:
            raise ValueError("direction_samples must be at least 8")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.method not in ("direct", "bisection"):
            raise ValueError(f"unknown method {self.method!r}")


def _check_size(N):
    if N > MAX_COLUMNS:
        raise TooLarge(f"oracles handle at most {MAX_COLUMNS} columns, got {N}")


@lru_cache(maxsize=32)
def _directions_cached(n: int, samples: int) -> np.ndarray:
    if n == 1:
        return np.array([[1.0], [-1.0]])
    axes = np.vstack([np.eye(n), -np.eye(n)])
    extra = max(0, samples - 2 * n)
    if extra == 0:
        return axes
    pts = qmc.Halton(d=n, scramble=False).random(extra + 1)[1:]
    g = _gauss.ppf(pts)
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return np.vstack([axes, g])


def sphere_directions(n: int, samples: int) -> np.ndarray:
    """Deterministic unit directions in R^n, nested in ``samples``."""
    return _directions_cached(n, samples).copy()


def _target_matrix(A, target):
    A = np.asarray(A, dtype=float)
    if target == "omega2":
        return A, "2"
    if target == "omegabinf":
        return A.T @ A, "binf"
    raise ValueError(f"unknown target {target!r}")


def _measure(Qz, n, which):
    if which == "2":
        return cp.norm(Qz, 2)
    return cp.max(cp.hstack([cp.norm(Qz[j * n:(j + 1) * n], 2) for j in range(Qz.shape[0] // n)]))


def _b1(z, n, p):
    return cp.sum(cp.hstack([cp.norm(z[j * n:(j + 1) * n], 2) for j in range(p)]))


class _BlockPrograms:
    """Parametrized programs over a fixed ``Q``; compiled once, re-solved per direction."""

    def __init__(self, Q, n, which, s, solver):
        self.Q, self.n, self.which, self.s = Q, n, which, s
        self.p = Q.shape[1] // n
        self.solver = solver
        self._fs = {}
        self._fp = {}

    def _zi(self, z, i):
        return z[i * self.n:(i + 1) * self.n]

    def f_value(self, i, u, radius):
        if i not in self._fs:
            z = cp.Variable(self.Q.shape[1])
            up = cp.Parameter(self.n)
            r = cp.Parameter(nonneg=True)
            prob = cp.Problem(cp.Maximize(up @ self._zi(z, i)),
                              [_measure(self.Q @ z, self.n, self.which) <= 1, _b1(z, self.n, self.p) <= r])
            self._fs[i] = (prob, up, r)
        prob, up, r = self._fs[i]
        up.value = np.asarray(u, dtype=float)
        r.value = float(radius)
        prob.solve(solver=self.solver)
        return max(0.0, float(prob.value))

    def fixed_point(self, i, u):
        """Largest ``t`` with ``u^T z_i >= t``, ``||Qz|| <= 1``, ``||z||_b1 <= s t``."""
        if i not in self._fp:
            z = cp.Variable(self.Q.shape[1])
            t = cp.Variable()
            up = cp.Parameter(self.n)
            prob = cp.Problem(cp.Maximize(t),
                              [up @ self._zi(z, i) >= t,
                               _measure(self.Q @ z, self.n, self.which) <= 1,
                               _b1(z, self.n, self.p) <= self.s * t])
            self._fp[i] = (prob, up, z)
        prob, up, z = self._fp[i]
        up.value = np.asarray(u, dtype=float)
        prob.solve(solver=self.solver)
        if prob.status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
            self.last_z = None
            return math.inf
        self.last_z = None if z.value is None else np.array(z.value)
        return float(prob.value)


def oracle_f_s(Q, n: int, s: float, eta: float, norm: str = "2",
               cfg: OracleConfig | None = None, _programs=None) -> float:
    """Lower estimate of ``max ||z||_binf`` s.t. ``||Qz|| <= 1``, ``||z||_b1 <= s eta``.

    ``norm`` is ``"2"`` or ``"binf"`` and selects the measurement norm.
    """
    cfg = cfg or OracleConfig()
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    st = BlockStructure.of(Q.shape[1], n)
    _check_size(Q.shape[1])
    if eta <= 0:
        return 0.0
    progs = _programs or _BlockPrograms(Q, n, norm, s, cfg.solver)
    dirs = sphere_directions(n, cfg.direction_samples)
    return max(progs.f_value(i, u, s * eta) for i in range(st.p) for u in dirs)


def _exceeds(progs, p, dirs, s, eta, order):
    """Whether the sampled f_s(eta) exceeds eta; tries the last winner first."""
    for idx in list(order):
        i, d = divmod(idx, len(dirs))
        if progs.f_value(i, dirs[d], s * eta) > eta:
            order.remove(idx)
            order.insert(0, idx)
            return True
    return False


def oracle_omega(A, n: int, s: float, target: str = "omega2",
                 cfg: OracleConfig | None = None) -> float:
    """Upper estimate of the goodness measure ``omega(Q, s)``.

    It is the reciprocal of the fixed point of the sampled ``f_s``.  The
    sampled ``f_s`` is a max of concave functions of ``eta``, so its fixed
    point is the largest per-direction fixed point, each a single convex
    program (``method="direct"``).  ``method="bisection"`` bisects on the
    sign of ``f_s(eta) - eta`` instead; both give the same value up to the
    bisection tolerance.
    """
    cfg = cfg or OracleConfig()
    Q, which = _target_matrix(A, target)
    st = BlockStructure.of(Q.shape[1], n)
    _check_size(Q.shape[1])
    if not s >= 1:
        raise ValueError("s must be at least 1")
    progs = _BlockPrograms(Q, n, which, s, cfg.solver)
    dirs = sphere_directions(n, cfg.direction_samples)
    if cfg.method == "direct":
        eta = max(progs.fixed_point(i, u) for i in range(st.p) for u in dirs)
        return 0.0 if math.isinf(eta) else 1.0 / eta
    order = list(range(st.p * len(dirs)))
    lo, hi = 1e-3, 1.0
    for _ in range(60):
        if not _exceeds(progs, st.p, dirs, s, lo, order):
            lo /= 10.0
        else:
            break
    else:
        raise NoBracket("f_s(eta) <= eta even for tiny eta")
    for _ in range(60):
        if _exceeds(progs, st.p, dirs, s, hi, order):
            lo, hi = hi, hi * 2.0
        else:
            break
    else:
        return 0.0
    while hi - lo > cfg.tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if _exceeds(progs, st.p, dirs, s, mid, order):
            lo = mid
        else:
            hi = mid
    return 1.0 / (0.5 * (lo + hi))


def _ratio(z, n):
    top = block_norm(z, n, "binf")
    return math.inf if top == 0 else block_norm(z, n, "b1") / top


def oracle_s_star(A, n: int, cfg: OracleConfig | None = None) -> float:
    """Upper estimate of ``min ||z||_b1 / ||z||_binf`` over the kernel of ``A``.

    Candidates come from one convex program per block and direction
    (``min ||z||_b1`` over kernel vectors with ``u^T z_i >= 1``) and from
    random kernel vectors polished by a local search.
    """
    cfg = cfg or OracleConfig()
    A = np.atleast_2d(np.asarray(A, dtype=float))
    st = BlockStructure.of(A.shape[1], n)
    B = kernel_basis(A)
    d = B.shape[1]
    if d == 0:
        return math.inf
    if d > MAX_KERNEL:
        raise KernelTooLarge(f"kernel dimension {d} exceeds {MAX_KERNEL}")
    best = math.inf
    c = cp.Variable(d)
    z = B @ c
    up = cp.Parameter(n)
    progs = {}
    for i in range(st.p):
        prob = cp.Problem(cp.Minimize(_b1(z, n, st.p)), [up @ z[i * n:(i + 1) * n] >= 1])
        progs[i] = prob
        for u in sphere_directions(n, cfg.direction_samples):
            up.value = u
            prob.solve(solver=cfg.solver)
            if c.value is not None and prob.status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
                best = min(best, _ratio(B @ c.value, n))
    rng = np.random.default_rng(cfg.seed)
    for _ in range(cfg.restarts):
        c0 = rng.standard_normal(d)
        res = minimize(lambda v: _ratio(B @ v, n) if np.any(v) else math.inf, c0,
                       method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
        best = min(best, _ratio(B @ res.x, n), _ratio(B @ c0, n))
    return float(best)


def oracle_rho(A, n: int, s: float, cfg: OracleConfig | None = None) -> float:
    """Upper estimate of ``min ||Az|| / ||z||`` over ``||z||_b1^2 <= s ||z||_2^2``.

    Starts include, for every block, the weakest right singular vector of
    that block, so the value never exceeds ``min_i sigma_min(A_i)``.
    """
    cfg = cfg or OracleConfig()
    A = np.atleast_2d(np.asarray(A, dtype=float))
    st = BlockStructure.of(A.shape[1], n)
    _check_size(A.shape[1])
    if s < 1:
        raise ValueError("s must be at least 1")
    N = A.shape[1]
    G = A.T @ A
    starts = []
    best = math.inf
    for i in range(st.p):
        Ai = A[:, i * n:(i + 1) * n]
        _, sv, Vt = np.linalg.svd(Ai, full_matrices=True)
        smin = sv[-1] if Ai.shape[0] >= n else 0.0
        best = min(best, float(smin))
        z = np.zeros(N)
        z[i * n:(i + 1) * n] = Vt[-1]
        starts.append(z)
    # convex witnesses: u^T z_i >= t, ||Az|| <= 1, ||z||_b1 <= sqrt(s) t keeps
    # ||z||_b1^2 <= s ||z||_2^2, so each one is feasible with ratio <= 1/t
    progs = _BlockPrograms(A, n, "2", math.sqrt(s), cfg.solver)
    witnesses = []
    for i in range(st.p):
        for u in sphere_directions(n, cfg.direction_samples):
            with warnings.catch_warnings():
                # accuracy is checked below, per witness
                warnings.simplefilter("ignore", UserWarning)
                t = progs.fixed_point(i, u)
            if math.isinf(t):
                return 0.0
            z = progs.last_z
            if z is None or not t > 0 or not np.any(z):
                continue
            z = z / np.linalg.norm(z)
            # inaccurate solves may leave the cone; such points only seed the local search
            if float(block_norms(z, n).sum()) ** 2 <= s * (1 + 1e-9):
                witnesses.append((float(np.linalg.norm(A @ z)), z))
            else:
                starts.append(z)
    witnesses.sort(key=lambda w: w[0])
    if witnesses:
        best = min(best, witnesses[0][0])
    starts += [z for _, z in witnesses[:cfg.restarts]]
    rng = np.random.default_rng(cfg.seed)
    starts += [rng.standard_normal(N) for _ in range(cfg.restarts)]

    def b1(z):
        return float(block_norms(z, n).sum())

    def b1_grad(z):
        Z = z.reshape(-1, n)
        r = np.linalg.norm(Z, axis=1, keepdims=True)
        return (Z / np.where(r > 0, r, 1.0)).ravel()

    cons = [{"type": "eq", "fun": lambda z: z @ z - 1.0, "jac": lambda z: 2 * z},
            {"type": "ineq", "fun": lambda z: s - b1(z) ** 2,
             "jac": lambda z: -2 * b1(z) * b1_grad(z)}]
    for z0 in starts:
        z0 = z0 / np.linalg.norm(z0)
        res = minimize(lambda z: z @ G @ z, z0, jac=lambda z: 2 * G @ z, method="SLSQP",
                       constraints=cons, options={"ftol": 1e-12, "maxiter": 500})
        z = res.x
        nz = np.linalg.norm(z)
        if nz == 0:
            continue
        z = z / nz
        if b1(z) ** 2 <= s * (1 + 1e-9):
            best = min(best, float(np.linalg.norm(A @ z)))
    return best
