"""Correspondence analysis of a two-way contingency table.

The table is normalized by its grand total, margins are computed, and the
matrix of pseudo-residuals

    z_ij = (x_ij / N - r_i c_j) / sqrt(r_i c_j)

is decomposed by a truncated SVD.  ``N * ||Z||_F^2`` is the Pearson
chi-square statistic of the independence model, and the rank-K coordinates
reconstruct the table through

    xhat_ij / N = r_i c_j (1 + sum_k d_k u_ik v_jk).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lowrank import RankKFactors, truncated_svd

__all__ = [
    "ContingencyTable",
    "CaResult",
    "contingency_table",
    "ca_pseudo_residuals",
    "ca_fit",
    "ca_reconstruct",
    "pearson_chi2",
    "total_inertia",
]


@dataclass(frozen=True)
class ContingencyTable:
    """Nonnegative count matrix with its grand total and margins."""

    counts: np.ndarray
    total: float
    row_margins: np.ndarray
    col_margins: np.ndarray


def contingency_table(counts) -> ContingencyTable:
    """Validate a count matrix and compute N, r, c.

    Zero row or column margins are rejected rather than smoothed: the
    chi-square and reconstruction identities all divide by the margins.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 2:
        raise ValueError("expected a 2-D count matrix")
    if not np.isfinite(counts).all() or (counts < 0).any():
        raise ValueError("counts must be finite and nonnegative")
    total = counts.sum()
    if total <= 0:
        raise ValueError("grand total must be positive")
    r = counts.sum(axis=1) / total
    c = counts.sum(axis=0) / total
    if (r == 0).any():
        raise ValueError(f"zero row margin at row {int(np.nonzero(r == 0)[0][0])}")
    if (c == 0).any():
        raise ValueError(f"zero column margin at column {int(np.nonzero(c == 0)[0][0])}")
    return ContingencyTable(counts=counts, total=float(total), row_margins=r, col_margins=c)


@dataclass(frozen=True)
class CaResult:
    """Coordinates and inertia of a fitted correspondence analysis.

    Standard coordinates are the singular vectors rescaled by the inverse
    square-root margins; principal coordinates additionally scale each
    column by its singular value.  ``total_inertia`` always comes from the
    full spectrum so percentage-of-inertia reporting does not depend on K.
    """

    factors: RankKFactors
    row_standard: np.ndarray
    col_standard: np.ndarray
    row_principal: np.ndarray
    col_principal: np.ndarray
    total_inertia: float


def ca_pseudo_residuals(t: ContingencyTable) -> np.ndarray:
    """Standardized residuals Z of the independence model, on the N=1 scale."""
    r, c = t.row_margins, t.col_margins
    expected = np.outer(r, c)
    return (t.counts / t.total - expected) / np.sqrt(expected)


def ca_fit(t: ContingencyTable, k: int) -> CaResult:
    """Rank-k correspondence analysis of a contingency table.

    k up to min(n, m) is accepted; min(n, m) - 1 is the number of
    nontrivial dimensions once the margin direction is centered out.
    """
    z = ca_pseudo_residuals(t)
    full = np.linalg.svd(z, compute_uv=False)
    factors = truncated_svd(z, k)
    inv_sqrt_r = 1.0 / np.sqrt(t.row_margins)
    inv_sqrt_c = 1.0 / np.sqrt(t.col_margins)
    row_standard = factors.u * inv_sqrt_r[:, None]
    col_standard = factors.v * inv_sqrt_c[:, None]
    return CaResult(
        factors=factors,
        row_standard=row_standard,
        col_standard=col_standard,
        row_principal=row_standard * factors.d,
        col_principal=col_standard * factors.d,
        total_inertia=float(np.sum(full**2)),
    )


def ca_reconstruct(res: CaResult, t: ContingencyTable, k: int) -> np.ndarray:
    """Fitted cell proportions at rank k: r_i c_j (1 + sum_k d_k u_ik v_jk)."""
    if not 0 <= k <= res.factors.rank:
        raise ValueError(f"rank {k} exceeds the {res.factors.rank} fitted dimensions")
    interaction = (res.row_standard[:, :k] * res.factors.d[:k]) @ res.col_standard[:, :k].T
    return np.outer(t.row_margins, t.col_margins) * (1.0 + interaction)


def total_inertia(t: ContingencyTable) -> float:
    """||Z||_F^2, the chi-square statistic divided by the grand total."""
    z = ca_pseudo_residuals(t)
    return float(np.sum(z**2))


def pearson_chi2(t: ContingencyTable) -> float:
    """Pearson chi-square statistic of row-column independence, N * ||Z||_F^2."""
    return t.total * total_inertia(t)
