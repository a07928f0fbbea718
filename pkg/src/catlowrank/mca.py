"""Multiple correspondence analysis and its one-step likelihood reading.

MCA is correspondence analysis applied to the indicator matrix A (or the
Burt matrix B = A^T A) of a categorical dataset.  The centered, weighted
residual matrices are

    Z_A = (1 / sqrt(mn)) (A - 1 p^T) D_p^{-1/2}
    Z_B = (1 / mn) D_p^{-1/2} (B - n p p^T) D_p^{-1/2}

and satisfy Z_B = Z_A^T Z_A exactly, so the Burt decomposition is
recoverable from the indicator one (but not vice versa).

The same SVD also maximizes the second-order expansion of the
multilogit-bilinear log-likelihood around the independence model, which is
what :func:`mca_one_step` returns: offsets log p together with the
rank-K interaction SVD_K((A - 1 p^T) D_p^{-1/2}) D_p^{-1/2}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lowrank import QuadraticProblem, RankKFactors, solve_rank_constrained_quadratic, truncated_svd
from .tables import (
    BurtMatrix,
    CategoricalTable,
    IndicatorMatrix,
    MarginVector,
    burt_matrix,
    category_margins,
    drop_empty_categories,
    encode_indicator,
)

__all__ = [
    "McaResult",
    "OneStepEstimate",
    "indicator_residuals",
    "burt_residuals",
    "mca_indicator",
    "mca_burt",
    "mca_one_step",
    "one_step_interaction",
    "centered_log_margins",
    "correlation_ratio",
]


@dataclass(frozen=True)
class McaResult:
    """MCA coordinates from either the indicator or the Burt route.

    Row principal coordinates are sqrt(n) U_K D_K; category standard
    coordinates are sqrt(mn) D_p^{-1/2} V_K and category principal
    coordinates scale those by the singular values.  ``eigenvalues`` holds
    the full spectrum of Z_B (indicator singular values squared), not just
    the K retained dimensions.  ``row_principal`` is None for the Burt
    variant, which has no access to individual rows.
    """

    factors: RankKFactors
    row_principal: np.ndarray | None
    category_standard: np.ndarray
    category_principal: np.ndarray
    eigenvalues: np.ndarray
    variant: str
    margins: MarginVector

    @property
    def category_coords(self) -> np.ndarray:
        return self.category_standard


@dataclass(frozen=True)
class OneStepEstimate:
    """Offsets and rank-K interaction maximizing the quadratic expansion
    of the multilogit-bilinear likelihood at the independence model."""

    beta0: np.ndarray
    gamma: np.ndarray
    factors: RankKFactors
    margins: MarginVector


def indicator_residuals(a: IndicatorMatrix, margins: MarginVector) -> np.ndarray:
    """Pseudo-residual matrix Z_A = (A - 1 p^T) D_p^{-1/2} / sqrt(mn)."""
    p = margins.p
    return (a.entries - p[None, :]) / np.sqrt(p)[None, :] / np.sqrt(a.m * a.n)


def burt_residuals(b: BurtMatrix, margins: MarginVector, n: int) -> np.ndarray:
    """Pseudo-residual matrix Z_B = D_p^{-1/2} (B - n p p^T) D_p^{-1/2} / (mn)."""
    p = margins.p
    m = len(b.category_counts)
    inv = 1.0 / np.sqrt(p)
    centered = b.entries.astype(np.float64) - n * np.outer(p, p)
    return inv[:, None] * centered * inv[None, :] / (m * n)


def _prepare(t: CategoricalTable):
    clean, _ = drop_empty_categories(t)
    a = encode_indicator(clean)
    return clean, a, category_margins(a)


def _check_rank(k: int, n: int, c: int, m: int) -> None:
    cap = min(n, c - m)
    if not 1 <= k <= cap:
        raise ValueError(f"rank {k} out of range; at most min(n, C - m) = {cap}")


def mca_indicator(t: CategoricalTable, k: int) -> McaResult:
    """MCA via the SVD of the indicator pseudo-residuals Z_A."""
    clean, a, margins = _prepare(t)
    _check_rank(k, a.n, a.total_categories, a.m)
    z = indicator_residuals(a, margins)
    spectrum = np.linalg.svd(z, compute_uv=False)
    factors = truncated_svd(z, k)
    scale = np.sqrt(a.m * a.n)
    cat_standard = scale * factors.v / np.sqrt(margins.p)[:, None]
    return McaResult(
        factors=factors,
        row_principal=np.sqrt(a.n) * factors.u * factors.d,
        category_standard=cat_standard,
        category_principal=cat_standard * factors.d,
        eigenvalues=spectrum**2,
        variant="indicator",
        margins=margins,
    )


def mca_burt(t: CategoricalTable, k: int) -> McaResult:
    """MCA via the eigendecomposition of the Burt pseudo-residuals Z_B."""
    clean, a, margins = _prepare(t)
    _check_rank(k, a.n, a.total_categories, a.m)
    z = burt_residuals(burt_matrix(a), margins, a.n)
    eigvals, eigvecs = np.linalg.eigh(z)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order]
    u = eigvecs[:, :k].copy()
    v = u.copy()
    for col in range(k):  # same sign convention as the SVD path
        i = int(np.argmax(np.abs(u[:, col])))
        if u[i, col] < 0:
            u[:, col] = -u[:, col]
            v[:, col] = -v[:, col]
    factors = RankKFactors(u=u, d=eigvals[:k].copy(), v=v)
    scale = np.sqrt(a.m * a.n)
    cat_standard = scale * factors.v / np.sqrt(margins.p)[:, None]
    # principal coordinates scale by sqrt(eigenvalue) in both variants, so
    # the Burt route reproduces the indicator-route category coordinates
    return McaResult(
        factors=factors,
        row_principal=None,
        category_standard=cat_standard,
        category_principal=cat_standard * np.sqrt(factors.d),
        eigenvalues=eigvals,
        variant="burt",
        margins=margins,
    )


def centered_log_margins(margins: MarginVector) -> np.ndarray:
    """log p, shifted per variable so the p-weighted block mean is zero.

    The shift is softmax-invariant; it pins down the additive freedom of
    multinomial offsets.
    """
    beta0 = np.log(margins.p)
    bounds = margins.boundaries
    for j in range(len(margins.category_counts)):
        sl = slice(bounds[j], bounds[j + 1])
        beta0[sl] -= float(beta0[sl] @ margins.p[sl])
    return beta0


def _project_blocks_against_p(gamma: np.ndarray, margins: MarginVector) -> np.ndarray:
    # Remove each block's component along p^j so Gamma^j p^j = 0 exactly.
    # Right-multiplication by a projector, so the rank bound is preserved.
    out = gamma.copy()
    bounds = margins.boundaries
    for j in range(len(margins.category_counts)):
        sl = slice(bounds[j], bounds[j + 1])
        pj = margins.p[sl]
        out[:, sl] -= np.outer(out[:, sl] @ pj, pj / (pj @ pj))
    return out


def one_step_interaction(a: IndicatorMatrix, margins: MarginVector, k: int) -> np.ndarray:
    """Rank-k maximizer of <Gamma, A - 1p^T> - 0.5 ||Gamma D_p^{1/2}||_F^2."""
    g = a.entries - margins.p[None, :]
    problem = QuadraticProblem(g=g, h1=np.ones(a.n), h2=np.sqrt(margins.p), k=k)
    gamma = solve_rank_constrained_quadratic(problem)
    return _project_blocks_against_p(gamma, margins)


def mca_one_step(t: CategoricalTable, k: int) -> OneStepEstimate:
    """One-step estimate of the multilogit-bilinear model at rank k.

    Expanding the log-likelihood to second order around the independence
    model (log p, 0) and maximizing under the rank constraint yields the
    same singular system as :func:`mca_indicator`; the interaction returned
    here satisfies gamma * D_p^{1/2} = sqrt(mn) U_K D_K V_K^T of Z_A.
    """
    clean, a, margins = _prepare(t)
    _check_rank(k, a.n, a.total_categories, a.m)
    gamma = one_step_interaction(a, margins, k)
    return OneStepEstimate(
        beta0=centered_log_margins(margins),
        gamma=gamma,
        factors=truncated_svd(gamma, k),
        margins=margins,
    )


def correlation_ratio(scores: np.ndarray, t: CategoricalTable, j: int) -> float:
    """Squared correlation ratio eta^2 of a score vector against variable j.

    Between-category variance over total variance, in the one-way analysis
    of variance sense; lies in [0, 1].
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (t.n,):
        raise ValueError("scores must be a length-n vector")
    if not 0 <= j < t.m:
        raise ValueError(f"variable index {j} out of range")
    dev = scores - scores.mean()
    total = float(dev @ dev)
    if total == 0.0:
        raise ValueError("scores are constant; correlation ratio undefined")
    groups = t.values[:, j] - 1
    cj = t.category_counts[j]
    counts = np.bincount(groups, minlength=cj)
    sums = np.bincount(groups, weights=dev, minlength=cj)
    nonzero = counts > 0
    between = float(np.sum(sums[nonzero] ** 2 / counts[nonzero]))
    return between / total
