"""Per-index min-max subproblems behind the verification and relaxation bounds.

For a matrix ``Q`` with column blocks ``Q_j`` and a fixed index ``i`` we
minimize over ``P_i`` (``q x n``)::

    w * max_j ||delta_ij I_n - P_i^T Q_j||_2 + penalty(P_i)

with penalty ``0`` (verification), ``||P_i||_2`` (spectral) or
``sum_l ||P_i^l||_2`` over the ``n x n`` row blocks of ``P_i`` (blocksum).

Any ``P_i`` gives a valid upper bound on the infimum.  The default solver is
a primal-dual hybrid gradient (Chambolle-Pock) iteration: both proximal maps
reduce to projecting singular values onto an l1 ball, so each step costs a
batch of tiny SVDs.  The dual iterate is turned into a feasible dual point at
every check, which yields a lower bound and hence a duality-gap stopping rule.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .block_core import orthonormalize_rows
from .errors import DimensionMismatch, NotConverged

PENALTIES = ("none", "spectral", "blocksum")
# primal/dual step balance, tuned per penalty on Gaussian ensembles; with a
# penalty the dual ball has radius w, so the ratio used is this value over w
DEFAULT_STEP_RATIO = {"none": 10.0, "spectral": 5.0, "blocksum": 2.0}


def spectral_norm(M, tol: float = 1e-9, max_iter: int = 10_000) -> float:
    """Largest singular value by power iteration on ``M^T M``.

    The start vector is deterministic; iteration stops once the eigen-residual
    ``||G v - rho v||`` of the Rayleigh quotient ``rho`` is below ``tol * rho``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not M.size or not np.any(M):
        return 0.0
    G = M.T @ M if M.shape[0] >= M.shape[1] else M @ M.T
    d = G.shape[0]
    # deterministic, not orthogonal to any coordinate axis
    v = 1.0 + np.arange(d, dtype=float) / (d + 1.0)
    v[1::2] *= -1.0
    v /= np.linalg.norm(v)
    lam = 0.0
    w = G @ v
    for _ in range(max_iter):
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            # start vector in the null space; restart from the dominant column
            v = G[:, np.argmax(np.linalg.norm(G, axis=0))].copy()
            v /= np.linalg.norm(v)
            w = G @ v
            continue
        v = w / norm_w
        w = G @ v
        lam = float(v @ w)
        if np.linalg.norm(w - lam * v) <= tol * lam:
            break
    return math.sqrt(max(lam, 0.0))


def _project_l1_nonneg(v: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection of a nonnegative vector onto {x >= 0, sum x <= radius}."""
    if v.sum() <= radius:
        return v
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - radius
    k = np.arange(1, u.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def _project_nuclear_ball(Y: np.ndarray, radius: float) -> np.ndarray:
    """Project a stack of matrices onto {sum_j ||Y_j||_* <= radius}."""
    U, S, Vt = np.linalg.svd(Y, full_matrices=False)
    S = _project_l1_nonneg(S.ravel(), radius).reshape(S.shape)
    return (U * S[..., None, :]) @ Vt


def _prox_spectral(X: np.ndarray, tau: float) -> np.ndarray:
    """Prox of ``tau * ||X||_2`` for a matrix or a stack of matrices."""
    U, S, Vt = np.linalg.svd(X, full_matrices=False)
    if X.ndim == 2:
        S = S - _project_l1_nonneg(S, tau)
    else:
        S = S - np.stack([_project_l1_nonneg(s, tau) for s in S])
    return (U * S[..., None, :]) @ Vt


class InnerWorkspace:
    """Precomputed data for one matrix ``Q`` shared by all indices ``i``."""

    def __init__(self, Q, n: int):
        Q = np.ascontiguousarray(np.asarray(Q, dtype=float))
        if Q.ndim != 2 or Q.shape[1] % n:
            raise DimensionMismatch(f"Q with shape {Q.shape} has no column blocks of length {n}")
        self.Q = Q
        self.n = n
        self.q, self.N = Q.shape
        self.p = self.N // n
        # Qb[j] is the q x n column block Q_j
        self.Qb = np.ascontiguousarray(Q.reshape(self.q, self.p, n).transpose(1, 0, 2))
        _, s, Vt = np.linalg.svd(Q, full_matrices=False)
        self.norm = float(s[0]) if s.size else 0.0
        rank = int(np.sum(s > 1e-10 * max(self.norm, 1e-300)))
        self._row_basis = Vt[:rank].T  # orthonormal basis of range(Q^T)
        self._block_inv = {}

    def K(self, P: np.ndarray) -> np.ndarray:
        """``P -> (P^T Q_j)_j`` as a ``(p, n, n)`` stack."""
        return (P.T @ self.Q).reshape(self.n, self.p, self.n).transpose(1, 0, 2)

    def Kt(self, Y: np.ndarray) -> np.ndarray:
        """Adjoint of :meth:`K`: ``Y -> sum_j Q_j Y_j^T``."""
        return self.Q @ Y.transpose(0, 2, 1).reshape(self.N, self.n)

    def kernel_part(self, Y: np.ndarray) -> np.ndarray:
        """Project ``Y`` onto ``{Y : sum_j Q_j Y_j^T = 0}``."""
        Yt = Y.transpose(0, 2, 1).reshape(self.N, self.n)
        Yt = Yt - self._row_basis @ (self._row_basis.T @ Yt)
        return Yt.reshape(self.p, self.n, self.n).transpose(0, 2, 1)

    def block_pinv(self, i: int):
        """``Q_i (Q_i^T Q_i)^{-1}`` or ``None`` when ``Q_i`` is ill conditioned."""
        if i not in self._block_inv:
            Qi = self.Qb[i]
            G = Qi.T @ Qi
            sv = np.linalg.svd(G, compute_uv=False)
            if sv[-1] <= 1e-10 * max(sv[0], 1e-300):
                self._block_inv[i] = None
            else:
                self._block_inv[i] = Qi @ np.linalg.inv(G)
        return self._block_inv[i]


@dataclass
class InnerProblem:
    Q: np.ndarray
    n: int
    index: int
    weight: float = 1.0
    penalty: str = "none"
    workspace: InnerWorkspace | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.penalty not in PENALTIES:
            raise ValueError(f"unknown penalty {self.penalty!r}")
        if self.weight < 0:
            raise ValueError("weight must be nonnegative")
        if self.workspace is None:
            self.workspace = InnerWorkspace(self.Q, self.n)
        if not 0 <= self.index < self.workspace.p:
            raise IndexError(f"block index {self.index} outside [0, {self.workspace.p})")
        if self.penalty == "blocksum" and self.workspace.q % self.n:
            raise DimensionMismatch("blocksum penalty needs the row count of Q divisible by n")

    @property
    def verification(self) -> bool:
        return self.penalty == "none"


@dataclass
class InnerOptions:
    tol: float = 1e-5
    max_iter: int = 20_000
    check_every: int = 25
    method: str = "pdhg"
    step_ratio: float | None = None
    relaxation: float = 1.8
    adaptive: bool = False
    record_history: bool = False


@dataclass
class InnerSolution:
    P: np.ndarray
    objective: float
    maxterm: float
    penalty_value: float
    iterations: int
    first_order_residual: float
    lower_bound: float
    converged: bool
    dual: np.ndarray | None = field(default=None, repr=False)
    history: list = field(default_factory=list, repr=False)


def _maxterm(ws: InnerWorkspace, P: np.ndarray, i: int) -> float:
    M = -ws.K(P)
    M[i] += np.eye(ws.n)
    return float(np.linalg.svd(M, compute_uv=False)[:, 0].max())


def _penalty(ws: InnerWorkspace, P: np.ndarray, penalty: str) -> float:
    if penalty == "none":
        return 0.0
    if penalty == "spectral":
        return float(np.linalg.svd(P, compute_uv=False)[0])
    Pb = P.reshape(-1, ws.n, ws.n)
    return float(np.linalg.svd(Pb, compute_uv=False)[:, 0].sum())


def _combine(prob: InnerProblem, maxterm: float, pen: float) -> float:
    return maxterm if prob.verification else prob.weight * maxterm + pen


def inner_objective(prob: InnerProblem, P) -> tuple[float, float, float]:
    """Exact objective ``(objective, maxterm, penalty_value)`` at ``P``."""
    ws = prob.workspace
    P = np.asarray(P, dtype=float)
    if P.shape != (ws.q, ws.n):
        raise DimensionMismatch(f"P must have shape {(ws.q, ws.n)}, got {P.shape}")
    mt = _maxterm(ws, P, prob.index)
    pen = _penalty(ws, P, prob.penalty)
    return _combine(prob, mt, pen), mt, pen


def _dual_bound(prob: InnerProblem, Y: np.ndarray) -> float:
    """Objective of a feasible dual point built from ``Y``.

    ``Y`` is first scaled into the ball ``sum_j ||Y_j||_* <= w``; relaxed
    iterates can sit slightly outside it.
    """
    ws = prob.workspace
    i = prob.index
    if prob.verification:
        Yk = ws.kernel_part(Y)
        nuc = float(np.linalg.svd(Yk, compute_uv=False).sum())
        if nuc == 0.0:
            return 0.0
        return -float(np.trace(Yk[i])) / max(1.0, nuc)
    radius = float(np.linalg.svd(Y, compute_uv=False).sum())
    if radius > prob.weight:
        Y = Y * (prob.weight / radius)
    R = ws.Kt(Y)
    if prob.penalty == "spectral":
        dn = float(np.linalg.svd(R, compute_uv=False).sum())
    else:
        dn = float(np.linalg.svd(R.reshape(-1, ws.n, ws.n), compute_uv=False).sum(axis=1).max())
    t = 1.0 if dn <= 1.0 else 1.0 / dn
    return -t * float(np.trace(Y[i]))


def _initial_P(prob: InnerProblem) -> np.ndarray:
    ws = prob.workspace
    zero = np.zeros((ws.q, ws.n))
    Pi = ws.block_pinv(prob.index)
    if Pi is None:
        return zero
    if inner_objective(prob, Pi)[0] <= inner_objective(prob, zero)[0]:
        return Pi.copy()
    return zero


def solve_inner(prob: InnerProblem, opts: InnerOptions | None = None, warm=None,
                strict: bool = False, threshold: float | None = None) -> InnerSolution:
    """Minimize the per-index objective; always returns the best iterate.

    ``warm`` is an earlier :class:`InnerSolution` (or ``(P, Y)`` pair) to start
    from.  With ``threshold`` set, the solve also stops as soon as the optimal
    value is certified to lie on one side of it (upper bound ``<= threshold``
    or lower bound ``> threshold``); ``converged`` is then true as well.
    With ``strict=True`` a run that ends with duality gap above ``opts.tol``
    raises :class:`NotConverged` carrying the best iterate.
    """
    opts = opts or InnerOptions()
    if opts.method == "pdhg":
        sol = _solve_pdhg(prob, opts, warm, threshold)
    elif opts.method == "subgradient":
        sol = _solve_subgradient(prob, opts, warm)
    else:
        raise ValueError(f"unknown inner method {opts.method!r}")
    if strict and not sol.converged:
        raise NotConverged(
            f"inner solve for index {prob.index} stopped with gap {sol.first_order_residual:.3g}",
            result=sol, iterations=sol.iterations, residuals=sol.first_order_residual,
        )
    return sol


def _unpack_warm(prob, warm):
    ws = prob.workspace
    if warm is None:
        return _initial_P(prob), None
    if isinstance(warm, InnerSolution):
        P, Y = warm.P, warm.dual
    else:
        P, Y = warm
    P = np.array(P, dtype=float, copy=True) if P is not None else _initial_P(prob)
    if P.shape != (ws.q, ws.n):
        raise DimensionMismatch("warm-start P has the wrong shape")
    if Y is not None:
        Y = np.array(Y, dtype=float, copy=True)
    return P, Y


def _solve_pdhg(prob: InnerProblem, opts: InnerOptions, warm, threshold=None) -> InnerSolution:
    ws = prob.workspace
    i, n = prob.index, ws.n
    w = 1.0 if prob.verification else prob.weight
    P, Y = _unpack_warm(prob, warm)

    obj, mt, pen = inner_objective(prob, P)
    best = (obj, mt, pen, P.copy())
    history = [(0, obj, obj)] if opts.record_history else []
    # a zero weight makes the maxterm irrelevant; P = 0 is then optimal
    if w == 0.0 or ws.norm == 0.0:
        P0 = np.zeros_like(P)
        o0, m0, p0 = inner_objective(prob, P0)
        if o0 <= obj:
            best = (o0, m0, p0, P0)
        lb = best[0] if w == 0.0 else min(best[0], w * 1.0)
        return InnerSolution(best[3], best[0], best[1], best[2], 0, best[0] - lb, lb,
                             best[0] - lb <= opts.tol, None, history)

    if Y is None or Y.shape != (ws.p, n, n):
        Y = np.zeros((ws.p, n, n))
    else:
        Y = _project_nuclear_ball(Y, w)
    lower = _dual_bound(prob, Y) if np.any(Y) else -math.inf

    I = np.eye(n)
    L = ws.norm
    ratio = opts.step_ratio or DEFAULT_STEP_RATIO[prob.penalty] / max(w, 0.1)
    adapt = 0.5
    KtY = ws.Kt(Y)
    it = 0
    gap = best[0] - lower

    def decided():
        if gap <= opts.tol:
            return True
        return threshold is not None and (best[0] <= threshold or lower > threshold)

    while not decided() and it < opts.max_iter:
        it += 1
        tau = 0.95 * ratio / L
        sigma = 0.95 / (ratio * L)
        Pn = P - tau * KtY
        if prob.penalty == "spectral":
            Pn = _prox_spectral(Pn, tau)
        elif prob.penalty == "blocksum":
            Pn = _prox_spectral(Pn.reshape(-1, n, n), tau).reshape(ws.q, n)
        V = Y + sigma * ws.K(2.0 * Pn - P)
        V[i] -= sigma * I
        Yn = _project_nuclear_ball(V, w)
        if opts.relaxation != 1.0:
            Pn = P + opts.relaxation * (Pn - P)
            Yn = Y + opts.relaxation * (Yn - Y)
        KtYn = ws.Kt(Yn)

        if opts.adaptive and it % 10 == 0 and adapt > 1e-3:
            dP = P - Pn
            rp = np.linalg.norm(dP / tau - (KtY - KtYn))
            rd = np.linalg.norm((Y - Yn) / sigma - ws.K(dP))
            if rp > 2.0 * rd:
                ratio /= 1.0 - adapt
                adapt *= 0.95
            elif rd > 2.0 * rp:
                ratio *= 1.0 - adapt
                adapt *= 0.95

        P, Y, KtY = Pn, Yn, KtYn
        if it % opts.check_every == 0:
            obj, mt, pen = inner_objective(prob, P)
            if obj < best[0]:
                best = (obj, mt, pen, P.copy())
            lower = max(lower, _dual_bound(prob, Y))
            gap = best[0] - lower
            if opts.record_history:
                history.append((it, obj, best[0]))

    return InnerSolution(best[3], best[0], best[1], best[2], it, max(gap, 0.0), lower,
                         decided(), Y, history)


def _solve_subgradient(prob: InnerProblem, opts: InnerOptions, warm) -> InnerSolution:
    """Projected-free subgradient descent with Polyak or 1/sqrt(t) steps.

    Kept for cross-checking; it has no dual certificate, so the reported
    residual is the last observed objective decrease.
    """
    ws = prob.workspace
    i, n = prob.index, ws.n
    w = 1.0 if prob.verification else prob.weight
    P, _ = _unpack_warm(prob, warm)
    obj, mt, pen = inner_objective(prob, P)
    best = (obj, mt, pen, P.copy())
    history = [(0, obj, obj)] if opts.record_history else []
    I = np.eye(n)
    step0 = 1.0 / max(ws.norm, 1e-12)
    last_improve = 0
    it = 0
    for it in range(1, opts.max_iter + 1):
        M = -ws.K(P)
        M[i] += I
        U, S, Vt = np.linalg.svd(M)
        top = S[:, 0]
        active = np.flatnonzero(top >= top.max() - 1e-6)
        G = np.zeros_like(P)
        for j in active:
            # d||M_j||/dP = -Q_j v u^T with (u, v) the top singular pair
            G -= ws.Qb[j] @ np.outer(Vt[j, 0], U[j, :, 0])
        G *= w / active.size
        if prob.penalty == "spectral":
            u, s, vt = np.linalg.svd(P, full_matrices=False)
            if s[0] > 0:
                G += np.outer(u[:, 0], vt[0])
        elif prob.penalty == "blocksum":
            Pb = P.reshape(-1, n, n)
            u, s, vt = np.linalg.svd(Pb)
            nz = s[:, 0] > 0
            Gb = np.einsum("la,lb->lab", u[:, :, 0], vt[:, 0, :]) * nz[:, None, None]
            G += Gb.reshape(ws.q, n)
        gnorm = np.linalg.norm(G)
        if gnorm == 0.0:
            break
        P = P - (step0 / math.sqrt(it)) * G / gnorm
        obj, mt, pen = inner_objective(prob, P)
        if obj < best[0] - 1e-15:
            best = (obj, mt, pen, P.copy())
            last_improve = it
        if opts.record_history and it % opts.check_every == 0:
            history.append((it, obj, best[0]))
        if it - last_improve > 2000:
            break
    return InnerSolution(best[3], best[0], best[1], best[2], it, float("nan"), -math.inf,
                         False, None, history)


@dataclass
class CertifierResult:
    s_star: float
    k_star: int | float
    per_index: list
    multipliers: list = field(repr=False)
    converged: bool = True
    max_gap: float = 0.0
    matrix: np.ndarray | None = field(default=None, repr=False)

    @property
    def unconditional(self) -> bool:
        return math.isinf(self.s_star)

    def to_dict(self) -> dict:
        return {
            "s_star": self.s_star,
            "k_star": self.k_star,
            "unconditional": self.unconditional,
            "converged": self.converged,
            "max_gap": self.max_gap,
            "per_index": self.per_index,
        }


def verify_s_star(A, n: int, opts: InnerOptions | None = None, qr: bool = True,
                  threads: int = 1) -> CertifierResult:
    """Certified lower bound ``s_*`` on the kernel ratio ``s^*`` of ``A``.

    With ``qr`` (the default) ``A`` is first replaced by a row-orthonormal
    matrix with the same kernel.  ``k_*`` is ``floor(s_* / 2)``.
    """
    A = np.asarray(A, dtype=float)
    opts = opts or InnerOptions()
    Q = orthonormalize_rows(A) if qr else A
    q, N = Q.shape
    if N % n:
        raise DimensionMismatch(f"{N} columns are not a multiple of block length {n}")
    ws = InnerWorkspace(Q, n)
    if np.linalg.matrix_rank(Q) >= N:
        # trivial kernel: P = Q^{-T} gives every objective zero
        Pfull = np.linalg.pinv(Q).T
        mults = [Pfull[:, i * n:(i + 1) * n] for i in range(ws.p)]
        per = [{"index": i, "objective": 0.0, "lower_bound": 0.0, "gap": 0.0, "iterations": 0}
               for i in range(ws.p)]
        return CertifierResult(math.inf, math.inf, per, mults, True, 0.0, Q)

    def run(i):
        return solve_inner(InnerProblem(Q, n, i, workspace=ws), opts)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            sols = list(pool.map(run, range(ws.p)))
    else:
        sols = [run(i) for i in range(ws.p)]
    per = [
        {"index": i, "objective": s.objective, "lower_bound": s.lower_bound,
         "gap": s.first_order_residual, "iterations": s.iterations}
        for i, s in enumerate(sols)
    ]
    worst = max(s.objective for s in sols)
    s_star = math.inf if worst <= 0 else 1.0 / worst
    k_star = math.floor(s_star / 2) if math.isfinite(s_star) else math.inf
    return CertifierResult(
        s_star, k_star, per, [s.P for s in sols],
        all(s.converged for s in sols), max(s.first_order_residual for s in sols), Q,
    )
