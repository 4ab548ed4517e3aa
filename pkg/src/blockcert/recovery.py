"""Block-l1 recovery programs.

* BS-BP:      min ||z||_b1  s.t. ||y - A z||_2 <= eps
* BS-DS:      min ||z||_b1  s.t. ||A^T (y - A z)||_binf <= mu
* BS-LASSO:   min 1/2 ||y - A z||_2^2 + mu ||z||_b1
* noise-free: min ||z||_b1  s.t. A z = y

BS-LASSO runs monotone FISTA with step ``1 / ||A||_2^2``.  The constrained
programs run ADMM with the block soft-threshold as the b1 prox; their
stopping rule combines primal feasibility with the gap to a feasible dual
point built from the ADMM multipliers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .block_core import block_norm, block_norms, block_soft_threshold, blocks
from .errors import DimensionMismatch, Infeasible, NotConverged
from .inner_solver import spectral_norm

VARIANTS = ("bsbp", "bsds", "bslasso", "noisefree")


@dataclass
class RecoveryOptions:
    feas_tol: float = 1e-7
    obj_tol: float = 1e-6
    kkt_tol: float = 1e-6
    max_iter: int = 50_000
    rho: float = 1.0
    polish: bool = True
    record_objective: bool = False
    strict: bool = True


@dataclass
class RecoveryResult:
    variant: str
    xhat: np.ndarray
    objective: float
    feasibility_residual: float
    iterations: int
    converged: bool
    gap: float = math.nan
    history: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "objective": self.objective,
            "feasibility_residual": self.feasibility_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "gap": self.gap,
        }


@dataclass
class RecoveryProblem:
    A: np.ndarray
    y: np.ndarray
    n: int
    variant: str
    eps: float = 0.0
    mu: float | None = None
    kappa: float | None = None

    def __post_init__(self):
        self.A, self.y = _check(self.A, self.y, self.n)
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        if self.variant in ("bsds", "bslasso") and not (self.mu is not None and self.mu > 0):
            raise ValueError(f"{self.variant} needs mu > 0")
        if self.kappa is not None and not 0 < self.kappa < 1:
            raise ValueError("kappa must lie in (0, 1)")

    def solve(self, opts: RecoveryOptions | None = None) -> RecoveryResult:
        if self.variant == "bsbp":
            return solve_bsbp(self.A, self.y, self.n, self.eps, opts)
        if self.variant == "bsds":
            return solve_bsds(self.A, self.y, self.n, self.mu, opts)
        if self.variant == "bslasso":
            return solve_bslasso(self.A, self.y, self.n, self.mu, opts)
        return solve_noisefree(self.A, self.y, self.n, opts)


def _check(A, y, n):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if A.shape[0] != y.size:
        raise DimensionMismatch(f"A has {A.shape[0]} rows but y has length {y.size}")
    if A.shape[1] % n:
        raise DimensionMismatch(f"{A.shape[1]} columns are not a multiple of block length {n}")
    return A, y


def _finish(result: RecoveryResult, opts: RecoveryOptions) -> RecoveryResult:
    if opts.strict and not result.converged:
        raise NotConverged(
            f"{result.variant} stopped after {result.iterations} iterations "
            f"(feasibility {result.feasibility_residual:.3g}, gap {result.gap:.3g})",
            result=result, iterations=result.iterations,
            residuals=(result.feasibility_residual, result.gap),
        )
    return result


def lasso_objective(A, y, n, mu, x) -> float:
    r = y - A @ x
    return 0.5 * float(r @ r) + mu * block_norm(x, n, "b1")


def lasso_kkt_residual(A, y, n, mu, x, tol: float = 0.0) -> float:
    """Distance of ``0`` from the optimality set of BS-LASSO at ``x``.

    On blocks with norm above ``tol`` the subgradient is ``x_i / ||x_i||``;
    elsewhere any vector in the unit ball is admissible.
    """
    g = blocks(A.T @ (A @ x - y), n)
    xb = blocks(x, n)
    norms = np.linalg.norm(xb, axis=1)
    res = np.empty(g.shape[0])
    nz = norms > tol
    res[nz] = np.linalg.norm(g[nz] + mu * xb[nz] / norms[nz, None], axis=1)
    res[~nz] = np.maximum(0.0, np.linalg.norm(g[~nz], axis=1) - mu)
    return float(np.linalg.norm(res))


def solve_bslasso(A, y, n: int, mu: float, opts: RecoveryOptions | None = None) -> RecoveryResult:
    """Monotone FISTA (prox step ``1/L``, ``L = ||A^T A||_2``)."""
    opts = opts or RecoveryOptions()
    A, y = _check(A, y, n)
    if not mu > 0:
        raise ValueError("mu must be positive")
    N = A.shape[1]
    Aty = A.T @ y
    if block_norm(Aty, n, "binf") <= mu:
        x = np.zeros(N)
        hist = [lasso_objective(A, y, n, mu, x)] if opts.record_objective else []
        return RecoveryResult("bslasso", x, lasso_objective(A, y, n, mu, x), 0.0, 0, True, 0.0, hist)
    L = spectral_norm(A) ** 2
    step = 1.0 / L
    x = np.zeros(N)
    v = x.copy()
    t = 1.0
    F = lasso_objective(A, y, n, mu, x)
    hist = [F] if opts.record_objective else []
    kkt = math.inf
    it = 0
    for it in range(1, opts.max_iter + 1):
        z = block_soft_threshold(v - step * (A.T @ (A @ v - y)), n, step * mu)
        Fz = lasso_objective(A, y, n, mu, z)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        if Fz <= F:
            v = z + ((t - 1.0) / t_new) * (z - x)
            x, F = z, Fz
        else:
            # reject the step, keep x, restart momentum
            v = x + (t / t_new) * (z - x)
            t_new = 1.0
        t = t_new
        if opts.record_objective:
            hist.append(F)
        if it % 10 == 0:
            kkt = lasso_kkt_residual(A, y, n, mu, x)
            if kkt <= opts.kkt_tol:
                break
    res = RecoveryResult("bslasso", x, F, 0.0, it, kkt <= opts.kkt_tol, kkt, hist)
    return _finish(res, opts)


class _Admm:
    """ADMM for ``min ||z||_b1`` with ``x = z`` and ``B x - r = c``, ``r`` in a ball.

    The x-update solves ``(I + B^T B) x = rhs``, which is independent of rho.
    """

    def __init__(self, B, c, n, project, dual_value, opts):
        self.B, self.c, self.n = B, c, n
        self.project = project
        self.dual_value = dual_value
        self.opts = opts
        k, N = B.shape
        if k <= N:
            self._chol = scipy.linalg.cho_factor(np.eye(k) + B @ B.T)
            self._mode = "wide"
        else:
            self._chol = scipy.linalg.cho_factor(np.eye(N) + B.T @ B)
            self._mode = "tall"

    def _xsolve(self, rhs):
        if self._mode == "tall":
            return scipy.linalg.cho_solve(self._chol, rhs)
        # Woodbury: (I + B^T B)^{-1} = I - B^T (I + B B^T)^{-1} B
        return rhs - self.B.T @ scipy.linalg.cho_solve(self._chol, self.B @ rhs)

    def run(self, feasibility):
        B, c, n, opts = self.B, self.c, self.n, self.opts
        N = B.shape[1]
        rho = opts.rho
        z = np.zeros(N)
        r = self.project(-c)
        u = np.zeros(N)
        v = np.zeros(B.shape[0])
        scale = max(1.0, float(np.linalg.norm(c)))
        best = None
        it = 0
        for it in range(1, opts.max_iter + 1):
            x = self._xsolve((z - u) + B.T @ (r + c - v))
            Bx = B @ x
            z_old, r_old = z, r
            z = block_soft_threshold(x + u, n, 1.0 / rho)
            r = self.project(Bx - c + v)
            u += x - z
            v += Bx - r - c
            if it % 10 and it != opts.max_iter:
                continue
            prim = math.hypot(np.linalg.norm(x - z), np.linalg.norm(Bx - r - c))
            dual = rho * math.hypot(np.linalg.norm(z - z_old), np.linalg.norm(B.T @ (r - r_old)))
            obj = block_norm(z, n, "b1")
            feas = feasibility(z)
            lam = -rho * v
            dval = self.dual_value(lam, rho * u)
            gap = obj - dval
            ok = feas <= opts.feas_tol * scale and gap <= opts.obj_tol * max(1.0, obj)
            if best is None or (ok and not best[-1]) or (ok == best[-1] and feas + gap < best[1] + best[2]):
                best = (z.copy(), feas, gap, obj, it, ok)
            if ok:
                break
            # residual balancing; scaled duals follow rho
            if it % 50 == 0:
                if prim > 10.0 * dual:
                    rho *= 2.0
                    u /= 2.0
                    v /= 2.0
                elif dual > 10.0 * prim:
                    rho /= 2.0
                    u *= 2.0
                    v *= 2.0
        z, feas, gap, obj, it_best, ok = best
        return z, obj, feas, gap, it, ok


def _polish_equality(A, y, n, z, obj, opts):
    """Least-squares refit on the detected block support."""
    support = np.flatnonzero(block_norms(z, n) > 1e-10 * max(1.0, np.abs(z).max()))
    if support.size == 0:
        return None
    cols = (support[:, None] * n + np.arange(n)).ravel()
    As = A[:, cols]
    if cols.size > A.shape[0] or np.linalg.matrix_rank(As) < cols.size:
        return None
    xs, *_ = np.linalg.lstsq(As, y, rcond=None)
    x = np.zeros(A.shape[1])
    x[cols] = xs
    return x


def solve_noisefree(A, y, n: int, opts: RecoveryOptions | None = None) -> RecoveryResult:
    """``min ||z||_b1`` subject to ``A z = y``."""
    opts = opts or RecoveryOptions()
    A, y = _check(A, y, n)
    ynorm = float(np.linalg.norm(y))
    if ynorm == 0.0:
        return RecoveryResult("noisefree", np.zeros(A.shape[1]), 0.0, 0.0, 0, True, 0.0)
    ls, *_ = np.linalg.lstsq(A, y, rcond=None)
    if np.linalg.norm(A @ ls - y) > opts.feas_tol * max(1.0, ynorm):
        raise Infeasible("y is not in the range of A")

    def feasibility(z):
        return float(np.linalg.norm(A @ z - y))

    def dual_value(lam, g):
        # max <lam, y> s.t. ||A^T lam||_binf <= 1
        s = block_norm(A.T @ lam, n, "binf")
        return float(lam @ y) / max(1.0, s)

    admm = _Admm(A, y, n, lambda w: np.zeros_like(w), dual_value, opts)
    z, obj, feas, gap, it, ok = admm.run(feasibility)
    z, obj, feas = _maybe_polish(A, y, n, z, obj, feas, opts, ynorm)
    ok = ok or (feas <= opts.feas_tol * max(1.0, ynorm) and gap <= opts.obj_tol * max(1.0, obj))
    return _finish(RecoveryResult("noisefree", z, obj, feas, it, ok, gap), opts)


def _maybe_polish(A, y, n, z, obj, feas, opts, ynorm):
    if not opts.polish:
        return z, obj, feas
    xp = _polish_equality(A, y, n, z, obj, opts)
    if xp is None:
        return z, obj, feas
    fp = float(np.linalg.norm(A @ xp - y))
    op = block_norm(xp, n, "b1")
    if fp <= opts.feas_tol * max(1.0, ynorm) and op <= obj + opts.obj_tol * max(1.0, obj):
        return xp, op, fp
    return z, obj, feas


def solve_bsbp(A, y, n: int, eps: float, opts: RecoveryOptions | None = None) -> RecoveryResult:
    """``min ||z||_b1`` subject to ``||y - A z||_2 <= eps``."""
    opts = opts or RecoveryOptions()
    A, y = _check(A, y, n)
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if eps == 0.0:
        res = solve_noisefree(A, y, n, opts)
        res.variant = "bsbp"
        return res
    ynorm = float(np.linalg.norm(y))
    if ynorm <= eps:
        return RecoveryResult("bsbp", np.zeros(A.shape[1]), 0.0, 0.0, 0, True, 0.0)
    ls, *_ = np.linalg.lstsq(A, y, rcond=None)
    if np.linalg.norm(A @ ls - y) > eps + opts.feas_tol * max(1.0, ynorm):
        raise Infeasible(f"least-squares residual exceeds eps = {eps}")

    def project(w):
        nw = np.linalg.norm(w)
        return w if nw <= eps else w * (eps / nw)

    def feasibility(z):
        return max(0.0, float(np.linalg.norm(y - A @ z)) - eps)

    def dual_value(lam, g):
        # max <lam, y> - eps ||lam|| s.t. ||A^T lam||_binf <= 1
        s = max(1.0, block_norm(A.T @ lam, n, "binf"))
        lam = lam / s
        return float(lam @ y) - eps * float(np.linalg.norm(lam))

    z, obj, feas, gap, it, ok = _Admm(A, y, n, project, dual_value, opts).run(feasibility)
    return _finish(RecoveryResult("bsbp", z, obj, feas, it, ok, gap), opts)


def solve_bsds(A, y, n: int, mu: float, opts: RecoveryOptions | None = None) -> RecoveryResult:
    """``min ||z||_b1`` subject to ``||A^T (y - A z)||_binf <= mu``."""
    opts = opts or RecoveryOptions()
    A, y = _check(A, y, n)
    if not mu > 0:
        raise ValueError("mu must be positive")
    G = A.T @ A
    c = A.T @ y
    if block_norm(c, n, "binf") <= mu:
        return RecoveryResult("bsds", np.zeros(A.shape[1]), 0.0, 0.0, 0, True, 0.0)

    def project(w):
        B = blocks(w, n)
        norms = np.linalg.norm(B, axis=1)
        scale = np.minimum(1.0, mu / np.maximum(norms, 1e-300))
        return (B * scale[:, None]).ravel()

    def feasibility(z):
        return max(0.0, block_norm(c - G @ z, n, "binf") - mu)

    def dual_value(lam, g):
        # max <lam, c> - mu ||lam||_b1 s.t. ||G lam||_binf <= 1
        s = max(1.0, block_norm(G @ lam, n, "binf"))
        lam = lam / s
        return float(lam @ c) - mu * block_norm(lam, n, "b1")

    z, obj, feas, gap, it, ok = _Admm(G, c, n, project, dual_value, opts).run(feasibility)
    return _finish(RecoveryResult("bsds", z, obj, feas, it, ok, gap), opts)


def solve(variant: str, A, y, n: int, eps: float = 0.0, mu: float | None = None,
          opts: RecoveryOptions | None = None) -> RecoveryResult:
    return RecoveryProblem(A, y, n, variant, eps=eps, mu=mu).solve(opts)
