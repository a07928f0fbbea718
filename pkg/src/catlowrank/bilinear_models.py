"""Likelihood models cognate to PCA and CA on a two-way table.

Three fitters live here:

* :func:`fit_linear_bilinear` -- Gaussian main effects plus a rank-K
  multiplicative interaction; the maximum likelihood interaction is the
  truncated SVD of the (double-)centered data matrix.
* :func:`fit_log_bilinear` -- the Poisson log-bilinear (row-column) model
  log mu = alpha_i + beta_j + sum_k d_k u_ik v_jk, fitted by alternating
  damped Newton steps of the two conditional Poisson regressions.
* :func:`fit_ca_glm` -- correspondence analysis expressed as a Gaussian
  GLM with the data-driven link g(mu) = mu / (r_i c_j) - 1, fitted by
  alternating weighted linear regressions; at convergence it reproduces
  the CA coordinates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .corresp import ContingencyTable, ca_fit
from .lowrank import RankKFactors, truncated_svd

__all__ = [
    "LinearBilinearFit",
    "RcModelFit",
    "CaGlmFit",
    "fit_linear_bilinear",
    "fit_log_bilinear",
    "fit_ca_glm",
    "poisson_deviance",
    "rc_fitted_means",
    "fit_summary",
    "save_fit_summary",
]


@dataclass(frozen=True)
class LinearBilinearFit:
    """Main effects, orthonormal interaction factors, and residual variance."""

    alpha: np.ndarray | None
    beta: np.ndarray
    interaction: RankKFactors
    sigma2: float

    def fitted(self) -> np.ndarray:
        out = self.beta[None, :] + self.interaction.matrix()
        if self.alpha is not None:
            out = out + self.alpha[:, None]
        return out


@dataclass(frozen=True)
class RcModelFit:
    """Fitted Poisson log-bilinear model with its deviance history."""

    alpha: np.ndarray
    beta: np.ndarray
    interaction: RankKFactors
    deviance_trace: np.ndarray
    converged: bool
    diagnostic: str | None = None

    def log_means(self) -> np.ndarray:
        return self.alpha[:, None] + self.beta[None, :] + self.interaction.matrix()


@dataclass(frozen=True)
class CaGlmFit:
    """CA coordinates recovered through the GLM route (CaResult-compatible)."""

    factors: RankKFactors
    row_standard: np.ndarray
    col_standard: np.ndarray
    row_principal: np.ndarray
    col_principal: np.ndarray
    fitted_proportions: np.ndarray
    iterations: int
    converged: bool
    diagnostic: str | None = None


def fit_linear_bilinear(x: np.ndarray, k: int, row_effects: bool = False) -> LinearBilinearFit:
    """Least-squares fit of column effects (optionally row effects) plus a
    rank-k interaction.

    Without row effects the interaction is the truncated SVD of the
    column-centered matrix; with them, of the double-centered matrix.
    """
    x = np.asarray(x, dtype=np.float64)
    n, m = x.shape
    cap = min(n - 1, m - 1)
    if not 0 <= k <= cap:
        raise ValueError(f"rank {k} out of range; at most min(n-1, m-1) = {cap}")
    beta = x.mean(axis=0)
    resid = x - beta[None, :]
    alpha = None
    if row_effects:
        alpha = resid.mean(axis=1)
        resid = resid - alpha[:, None]
    factors = truncated_svd(resid, k)
    sigma2 = float(np.mean((resid - factors.matrix()) ** 2))
    return LinearBilinearFit(alpha=alpha, beta=beta, interaction=factors, sigma2=sigma2)


def poisson_deviance(x: np.ndarray, mu: np.ndarray) -> float:
    """2 sum [x log(x/mu) - (x - mu)], with x log x = 0 at zero counts."""
    return float(2.0 * np.sum(xlogy(x, x) - xlogy(x, mu) - x + mu))


def rc_fitted_means(fit: RcModelFit) -> np.ndarray:
    return np.exp(fit.log_means())


def _double_center(gamma: np.ndarray):
    # Row/column means move into the additive effects; both removals are
    # projections, so the rank bound on gamma is preserved.
    row_means = gamma.mean(axis=1)
    gamma = gamma - row_means[:, None]
    col_means = gamma.mean(axis=0)
    gamma = gamma - col_means[None, :]
    return gamma, row_means, col_means


def _orthonormalize(gamma: np.ndarray, k: int) -> RankKFactors:
    return truncated_svd(gamma, k)


def fit_log_bilinear(
    x: np.ndarray,
    k: int,
    max_iter: int = 200,
    tol: float = 1e-8,
    ridge: float = 0.0,
) -> RcModelFit:
    """Fit the Poisson log-bilinear model by alternating damped GLM steps.

    Passes alternate closed-form margin updates, a Newton step in the left
    factors (right factors fixed), re-centering and re-orthonormalization
    of the interaction, then the mirrored right-factor step.  Step-halving
    on the (ridge-penalized) deviance keeps the trace nonincreasing; if the
    linear predictor diverges the best iterate is returned with
    ``converged=False`` and a diagnostic.

    ridge adds ridge * ||Gamma||_F^2 to the minimized deviance, which tames
    the overfitting that sparse tables provoke.
    """
    x = np.asarray(x, dtype=np.float64)
    n, m = x.shape
    if x.sum() <= 0:
        raise ValueError("grand total must be positive")
    if (x < 0).any():
        raise ValueError("counts must be nonnegative")
    row_tot = x.sum(axis=1)
    col_tot = x.sum(axis=0)
    if (row_tot == 0).any() or (col_tot == 0).any():
        raise ValueError("zero row or column margin; drop empty rows/columns first")
    if not 0 <= k <= min(n - 1, m - 1):
        raise ValueError(f"rank {k} out of range")

    total = x.sum()
    if k == 0:
        mu = np.outer(row_tot, col_tot) / total
        return RcModelFit(
            alpha=np.log(row_tot / total),
            beta=np.log(col_tot),
            interaction=RankKFactors(u=np.zeros((n, 0)), d=np.zeros(0), v=np.zeros((m, 0))),
            deviance_trace=np.array([poisson_deviance(x, mu)]),
            converged=True,
        )

    alpha = np.log(row_tot / total)
    beta = np.log(col_tot)
    ca = ca_fit(ContingencyTable(x, float(total), row_tot / total, col_tot / total), k)
    gamma, rmeans, cmeans = _double_center(
        (ca.row_standard * ca.factors.d) @ ca.col_standard.T
    )
    alpha = alpha + rmeans
    beta = beta + cmeans
    factors = _orthonormalize(gamma, k)

    def penalized(dev: float, gam: np.ndarray) -> float:
        return dev + ridge * float(np.sum(gam**2))

    def newton_rows(data, left, right, row_eff, col_eff, obj):
        # One damped Newton step for every left-factor row at once.
        eta = row_eff[:, None] + col_eff[None, :] + left @ right.T
        mu = np.exp(eta)
        grad = (data - mu) @ right - ridge * left @ (right.T @ right)
        hess = np.einsum("ij,jk,jl->ikl", mu, right, right)
        hess += ridge * (right.T @ right)[None, :, :] + 1e-12 * np.eye(right.shape[1])
        try:
            step = np.linalg.solve(hess, grad[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            step = np.zeros_like(left)
        scale = 1.0
        for _ in range(30):
            cand = left + scale * step
            eta_c = row_eff[:, None] + col_eff[None, :] + cand @ right.T
            if eta_c.max() < 40.0:
                new = penalized(poisson_deviance(data, np.exp(eta_c)), cand @ right.T)
                if new <= obj + 1e-12:
                    return cand, new
            scale *= 0.5
        return left, obj

    mu = np.exp(alpha[:, None] + beta[None, :] + gamma)
    trace = [poisson_deviance(x, mu)]
    best = (trace[0], alpha.copy(), beta.copy(), factors)
    converged = False
    diagnostic = None

    for _ in range(max_iter):
        gamma = factors.matrix()
        # closed-form margin refreshes (exact conditional minimizers)
        alpha = np.log(row_tot) - np.log(np.exp(beta[None, :] + gamma).sum(axis=1))
        beta = np.log(col_tot) - np.log(np.exp(alpha[:, None] + gamma).sum(axis=0))
        obj = penalized(poisson_deviance(x, np.exp(alpha[:, None] + beta[None, :] + gamma)), gamma)

        left = factors.u.copy()
        right = factors.v * factors.d
        left, obj = newton_rows(x, left, right, alpha, beta, obj)
        gamma, rmeans, cmeans = _double_center(left @ right.T)
        alpha = alpha + rmeans
        beta = beta + cmeans
        factors = _orthonormalize(gamma, k)

        right = factors.v.copy()
        left_scaled = factors.u * factors.d
        right, obj = newton_rows(x.T, right, left_scaled, beta, alpha, obj)
        gamma_t, col_eff_means, row_eff_means = _double_center(right @ left_scaled.T)
        beta = beta + col_eff_means
        alpha = alpha + row_eff_means
        factors = _orthonormalize(gamma_t.T, k)

        gamma = factors.matrix()
        eta = alpha[:, None] + beta[None, :] + gamma
        if np.abs(eta).max() > 40.0:
            diagnostic = (
                "linear predictor diverging (separable or overfit table); "
                "returning best iterate"
            )
            break
        dev = poisson_deviance(x, np.exp(eta))
        trace.append(dev)
        if penalized(dev, gamma) <= best[0]:
            best = (penalized(dev, gamma), alpha.copy(), beta.copy(), factors)
        if abs(trace[-2] - trace[-1]) <= tol * (abs(trace[-2]) + 1e-12):
            converged = True
            break

    _, alpha, beta, factors = best
    return RcModelFit(
        alpha=alpha,
        beta=beta,
        interaction=factors,
        deviance_trace=np.asarray(trace),
        converged=converged,
        diagnostic=diagnostic,
    )


def fit_ca_glm(
    t: ContingencyTable, k: int, max_iter: int = 500, tol: float = 1e-12
) -> CaGlmFit:
    """Recover CA by alternating weighted regressions of the working response.

    The Gaussian GLM with link g(mu) = mu / M0 - 1, M0 = r_i c_j, has the
    constant working response z = y / M0 - 1 on the correspondence scale
    and weights M0, so alternation solves the weighted low-rank problem
    || Z - D_r^{1/2} eta D_c^{1/2} ||_F^2 whose optimum is the CA fit.
    """
    r, c = t.row_margins, t.col_margins
    m0 = np.outer(r, c)
    if not 1 <= k <= min(t.counts.shape):
        raise ValueError(f"rank {k} out of range")

    rng = np.random.default_rng(0)
    right = np.linalg.qr(rng.standard_normal((t.counts.shape[1], k)))[0]
    eta = np.zeros_like(m0)
    converged = False
    iterations = 0
    for it in range(1, max_iter + 1):
        iterations = it
        mu = m0 * (1.0 + eta)
        z = (t.counts / t.total - mu) / m0 + eta  # constant: equals y/M0 - 1
        left = (z * c[None, :]) @ right @ np.linalg.pinv(right.T @ (right * c[:, None]))
        right = (z.T * r[None, :]) @ left @ np.linalg.pinv(left.T @ (left * r[:, None]))
        eta_new = left @ right.T
        delta = np.sqrt(np.sum(m0 * (eta_new - eta) ** 2))
        scale = np.sqrt(np.sum(m0 * eta_new**2))
        eta = eta_new
        if delta <= tol * max(scale, 1.0) or scale < 1e-14:
            converged = True
            break

    weighted = np.sqrt(r)[:, None] * eta * np.sqrt(c)[None, :]
    factors = truncated_svd(weighted, k)
    row_standard = factors.u / np.sqrt(r)[:, None]
    col_standard = factors.v / np.sqrt(c)[:, None]
    return CaGlmFit(
        factors=factors,
        row_standard=row_standard,
        col_standard=col_standard,
        row_principal=row_standard * factors.d,
        col_principal=col_standard * factors.d,
        fitted_proportions=m0 * (1.0 + (row_standard * factors.d) @ col_standard.T),
        iterations=iterations,
        converged=converged,
        diagnostic=None if converged else "alternating regressions hit max_iter",
    )


def fit_summary(fit: RcModelFit) -> dict:
    """JSON-ready summary of a log-bilinear fit."""
    return {
        "alpha": fit.alpha.tolist(),
        "beta": fit.beta.tolist(),
        "d": fit.interaction.d.tolist(),
        "u": fit.interaction.u.tolist(),
        "v": fit.interaction.v.tolist(),
        "deviance_trace": fit.deviance_trace.tolist(),
        "converged": bool(fit.converged),
        "diagnostic": fit.diagnostic,
    }


def save_fit_summary(fit: RcModelFit, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(fit_summary(fit), fh, sort_keys=True)
        fh.write("\n")
