"""Truncated SVD and the closed-form rank-constrained quadratic maximizer.

Every estimator in this package eventually reduces to one of two
primitives: a rank-K partial singular value decomposition, or the
maximizer of ``<G, Gamma> - 0.5 * ||H1 Gamma H2||_F^2`` over matrices of
rank at most K, which is solved by unwrapping an SVD between the two
positive-definite weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "RankKFactors",
    "QuadraticProblem",
    "truncated_svd",
    "solve_rank_constrained_quadratic",
    "quadratic_objective",
]


@dataclass(frozen=True)
class RankKFactors:
    """Rank-K factorization U diag(d) V^T with orthonormal U, V columns."""

    u: np.ndarray
    d: np.ndarray
    v: np.ndarray

    @property
    def rank(self) -> int:
        return self.d.shape[0]

    def matrix(self) -> np.ndarray:
        """Dense reconstruction U diag(d) V^T."""
        return (self.u * self.d) @ self.v.T

    def check(self, tol: float = 1e-10) -> None:
        """Raise unless columns are orthonormal and d is nonincreasing >= 0."""
        k = self.rank
        if self.u.shape[1] != k or self.v.shape[1] != k:
            raise ValueError("factor shapes disagree with rank")
        if k and (np.diff(self.d) > tol).any():
            raise ValueError("singular values must be nonincreasing")
        if k and self.d.min() < -tol:
            raise ValueError("singular values must be nonnegative")
        for mat, name in ((self.u, "U"), (self.v, "V")):
            gram = mat.T @ mat
            if not np.allclose(gram, np.eye(k), atol=tol):
                raise ValueError(f"{name} columns are not orthonormal")


def _canonical_signs(u: np.ndarray, v: np.ndarray) -> None:
    # Flip each component so the largest-magnitude entry of the U column is
    # positive; makes coordinates reproducible (axes are defined up to sign).
    for k in range(u.shape[1]):
        i = int(np.argmax(np.abs(u[:, k])))
        if u[i, k] < 0:
            u[:, k] = -u[:, k]
            v[:, k] = -v[:, k]


def _stabilize_ties(u: np.ndarray, d: np.ndarray, v: np.ndarray) -> None:
    # Within groups of (numerically) equal singular values, order columns
    # lexicographically by the U column entries.
    k = d.shape[0]
    if k < 2:
        return
    scale = d[0] if d[0] > 0 else 1.0
    start = 0
    while start < k - 1:
        stop = start + 1
        while stop < k and abs(d[start] - d[stop]) <= 1e-12 * scale:
            stop += 1
        if stop - start > 1:
            order = sorted(range(start, stop), key=lambda j: tuple(u[:, j]))
            u[:, start:stop] = u[:, order]
            v[:, start:stop] = v[:, order]
            d[start:stop] = d[order]
        start = stop


def truncated_svd(m: np.ndarray, k: int) -> RankKFactors:
    """Best rank-k approximation factors of a dense matrix.

    The returned triple minimizes the Frobenius reconstruction error over
    all rank-k matrices.  Signs are fixed so the largest-magnitude entry of
    each left factor column is positive.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    if not np.isfinite(m).all():
        raise ValueError("matrix contains non-finite entries")
    if not 0 <= k <= min(m.shape):
        raise ValueError(f"rank {k} out of range for shape {m.shape}")
    u, d, vt = np.linalg.svd(m, full_matrices=False)
    u = u[:, :k].copy()
    d = d[:k].copy()
    v = vt[:k].T.copy()
    _canonical_signs(u, v)
    _stabilize_ties(u, d, v)
    return RankKFactors(u=u, d=d, v=v)


@dataclass(frozen=True)
class QuadraticProblem:
    """Data for maximizing <Gamma, g> - 0.5 ||H1 Gamma H2||_F^2, rank(Gamma) <= k.

    ``h1`` and ``h2`` may be 1-D vectors (diagonal weights, the fast path
    used throughout this package) or full symmetric positive-definite
    matrices.
    """

    g: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    k: int


def _check_weight(h: np.ndarray, size: int, name: str):
    h = np.asarray(h, dtype=np.float64)
    if h.ndim == 1:
        if h.shape[0] != size:
            raise ValueError(f"{name} has wrong length")
        if (h <= 0).any():
            raise ValueError(f"{name} is not positive definite")
        return h, None
    if h.shape != (size, size):
        raise ValueError(f"{name} has wrong shape")
    if not np.allclose(h, h.T, atol=1e-10 * max(1.0, np.abs(h).max())):
        raise ValueError(f"{name} must be symmetric")
    try:
        cho = scipy.linalg.cho_factor(h, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{name} is not positive definite") from exc
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - scipy alias
        raise ValueError(f"{name} is not positive definite") from exc
    return h, cho


def solve_rank_constrained_quadratic(q: QuadraticProblem) -> np.ndarray:
    """Closed-form maximizer H1^{-1} [SVD_k(H1^{-1} G H2^{-1})] H2^{-1}."""
    g = np.asarray(q.g, dtype=np.float64)
    n, p = g.shape
    if not 0 <= q.k <= min(n, p):
        raise ValueError(f"rank {q.k} out of range for shape {g.shape}")
    h1, cho1 = _check_weight(q.h1, n, "h1")
    h2, cho2 = _check_weight(q.h2, p, "h2")

    if h1.ndim == 1 and h2.ndim == 1:
        core = g / h1[:, None] / h2[None, :]
        inner = truncated_svd(core, q.k).matrix()
        return inner / h1[:, None] / h2[None, :]

    def left_solve(mat):
        return mat / h1[:, None] if h1.ndim == 1 else scipy.linalg.cho_solve(cho1, mat)

    def right_solve(mat):
        return mat / h2[None, :] if h2.ndim == 1 else scipy.linalg.cho_solve(cho2, mat.T).T

    core = left_solve(right_solve(g))
    inner = truncated_svd(core, q.k).matrix()
    return left_solve(right_solve(inner))


def quadratic_objective(q: QuadraticProblem, gamma: np.ndarray) -> float:
    """Evaluate <Gamma, g> - 0.5 ||H1 Gamma H2||_F^2 at a candidate."""
    g = np.asarray(q.g, dtype=np.float64)
    h1 = np.asarray(q.h1, dtype=np.float64)
    h2 = np.asarray(q.h2, dtype=np.float64)
    weighted = gamma * h1[:, None] if h1.ndim == 1 else h1 @ gamma
    weighted = weighted * h2[None, :] if h2.ndim == 1 else weighted @ h2
    return float(np.sum(gamma * g) - 0.5 * np.sum(weighted**2))
