"""Block-structured vectors and matrices.

Vectors of length ``N = n * p`` are split into ``p`` contiguous blocks of
length ``n``; column block ``j`` of a matrix is columns ``j*n ... (j+1)*n - 1``.
Block indices are 0-based throughout the package.

Vectors and matrices are plain numpy arrays; the block length ``n`` is passed
alongside them.  :class:`BlockStructure` bundles ``(n, p)`` when a value needs
to be validated or serialized.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, RankDeficient, ZeroColumn

SUPPORT_TOL = 1e-8
COLUMN_FLOOR = 1e-12
RANK_RTOL = 1e-10

NORMS = ("b1", "b2", "binf")


@dataclass(frozen=True)
class BlockStructure:
    n: int
    p: int

    def __post_init__(self):
        if int(self.n) < 1 or int(self.p) < 1:
            raise ValueError(f"block structure needs n, p >= 1, got n={self.n}, p={self.p}")

    @property
    def N(self) -> int:
        return self.n * self.p

    @classmethod
    def of(cls, length: int, n: int) -> "BlockStructure":
        if n < 1 or length % n:
            raise DimensionMismatch(f"length {length} is not a multiple of block length {n}")
        return cls(n, length // n)

    def check_vector(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.ndim != 1 or v.size != self.N:
            raise DimensionMismatch(f"expected vector of length {self.N}, got shape {v.shape}")
        return v

    def check_matrix(self, A) -> np.ndarray:
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[1] != self.N:
            raise DimensionMismatch(f"expected matrix with {self.N} columns, got shape {A.shape}")
        return A


def blocks(v, n: int) -> np.ndarray:
    """View a length ``n*p`` vector as a ``(p, n)`` array of blocks."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size % n:
        raise DimensionMismatch(f"length {v.size} is not a multiple of block length {n}")
    return v.reshape(-1, n)


def block_norms(v, n: int) -> np.ndarray:
    """Euclidean norm of every block."""
    return np.linalg.norm(blocks(v, n), axis=1)


def block_norm(v, n: int, q: str = "b2") -> float:
    norms = block_norms(v, n)
    if q == "b1":
        return float(norms.sum())
    if q == "b2":
        return float(np.sqrt(np.sum(norms**2)))
    if q == "binf":
        return float(norms.max()) if norms.size else 0.0
    raise ValueError(f"unknown block norm {q!r}; expected one of {NORMS}")


def block_support(v, n: int, tol: float = SUPPORT_TOL) -> tuple[int, ...]:
    """Indices of blocks whose norm exceeds ``tol``."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return tuple(int(i) for i in np.flatnonzero(block_norms(v, n) > tol))


def threshold_support(v, n: int, beta: float) -> tuple[int, ...]:
    """Blocks with norm strictly above ``beta / 2``.

    Recovers the true block support whenever the block-l_inf error is below
    ``beta / 2`` and ``beta`` is the smallest nonzero block norm of the signal.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    return tuple(int(i) for i in np.flatnonzero(block_norms(v, n) > beta / 2))


def block_soft_threshold(v, n: int, tau: float) -> np.ndarray:
    """Proximal operator of ``tau * ||.||_b1`` (group soft thresholding)."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    B = blocks(v, n)
    norms = np.linalg.norm(B, axis=1)
    scale = np.zeros_like(norms)
    nz = norms > 0
    scale[nz] = np.maximum(0.0, 1.0 - tau / norms[nz])
    return (B * scale[:, None]).ravel()


def column_block(A, n: int, j: int) -> np.ndarray:
    return np.asarray(A)[:, j * n:(j + 1) * n]


def normalize_columns(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    norms = np.linalg.norm(A, axis=0)
    bad = np.flatnonzero(norms < COLUMN_FLOOR)
    if bad.size:
        raise ZeroColumn(f"columns {bad.tolist()} have norm below {COLUMN_FLOOR}")
    return A / norms


def orthonormalize_rows(A) -> np.ndarray:
    """Row-orthonormal matrix with the same kernel as ``A``.

    Uses the economy QR factorization of ``A.T``; raises ``RankDeficient`` when
    ``A`` does not have full row rank.
    """
    A = np.asarray(A, dtype=float)
    m = A.shape[0]
    sv = np.linalg.svd(A, compute_uv=False)
    if sv.size < m or sv[-1] <= RANK_RTOL * sv[0]:
        rank = int(np.sum(sv > RANK_RTOL * (sv[0] if sv.size else 0.0)))
        raise RankDeficient(f"matrix has numerical rank {rank} < {m} rows")
    Qf, _ = np.linalg.qr(A.T, mode="reduced")
    return np.ascontiguousarray(Qf.T)


def kernel_basis(A, rtol: float = RANK_RTOL) -> np.ndarray:
    """Orthonormal basis of Ker(A) as columns of an ``N x d`` array."""
    A = np.asarray(A, dtype=float)
    _, s, Vt = np.linalg.svd(A, full_matrices=True)
    rank = int(np.sum(s > rtol * s[0])) if s.size else 0
    return Vt[rank:].T.copy()
