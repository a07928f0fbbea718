"""The multilogit-bilinear model: probabilities, likelihood, and fitting.

Each cell (i, j) of a categorical table is modeled as a multinomial logit
over the C_j categories of variable j,

    P(x_ij = c) = exp(theta_ij(c)) / sum_c' exp(theta_ij(c')),
    theta_ij(c) = beta_j(c) + Gamma_i^j(c),

where the n x C interaction Gamma has rank at most K and satisfies the
identifiability constraint Gamma^j p^j = 0 per variable.  Fitting
maximizes the (optionally trace-norm penalized) log-likelihood by
majorization: the multinomial Hessian of each (i, j) block is bounded by
1/2 times the identity, so stepping the natural parameters by twice the
residual A - P and projecting back onto the constraint set ascends the
objective at every iteration.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .lowrank import RankKFactors, truncated_svd
from .mca import OneStepEstimate, centered_log_margins, one_step_interaction
from .tables import IndicatorMatrix, MarginVector, block_boundaries, category_margins

__all__ = [
    "MultilogitModel",
    "ProbabilityBlocks",
    "FitTrace",
    "predict_probabilities",
    "latent_coordinates",
    "log_likelihood",
    "gradient_interaction",
    "taylor_objective",
    "fit_majorization",
    "rmse_probabilities",
    "probabilities_from_one_step",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]

# Keeps unpenalized runs on separable data finite; inactive at the scales
# any of the estimators reach on non-degenerate tables.
THETA_CLAMP = 30.0


@dataclass(frozen=True)
class MultilogitModel:
    """Offsets plus factored rank-K interaction, sharing the indicator layout."""

    beta: np.ndarray
    factors: RankKFactors
    block_offsets: np.ndarray
    category_counts: tuple

    @property
    def n(self) -> int:
        return self.factors.u.shape[0]

    @property
    def m(self) -> int:
        return len(self.category_counts)

    @property
    def total_categories(self) -> int:
        return self.beta.shape[0]

    @property
    def boundaries(self) -> np.ndarray:
        return block_boundaries(self.category_counts)

    def interaction(self) -> np.ndarray:
        return self.factors.matrix()

    def natural_parameters(self) -> np.ndarray:
        return self.beta[None, :] + self.interaction()


@dataclass(frozen=True)
class ProbabilityBlocks:
    """n x C probabilities; each per-variable block of each row is a simplex point."""

    probs: np.ndarray
    block_offsets: np.ndarray
    category_counts: tuple

    @property
    def boundaries(self) -> np.ndarray:
        return block_boundaries(self.category_counts)


@dataclass(frozen=True)
class FitTrace:
    """Per-iteration penalized objective and gradient norm of a fit."""

    objective: np.ndarray
    gradient_norm: np.ndarray
    converged: bool
    iterations: int


def _expand(values: np.ndarray, counts) -> np.ndarray:
    return np.repeat(values, np.asarray(counts, dtype=np.int64), axis=1)


def block_softmax(theta: np.ndarray, counts) -> np.ndarray:
    """Softmax within each per-variable block of columns, max-stabilized."""
    bounds = block_boundaries(counts)
    mx = np.maximum.reduceat(theta, bounds[:-1], axis=1)
    e = np.exp(theta - _expand(mx, counts))
    s = np.add.reduceat(e, bounds[:-1], axis=1)
    return e / _expand(s, counts)


def block_logsumexp(theta: np.ndarray, counts) -> np.ndarray:
    """log sum exp within each per-variable block of columns (n x m)."""
    bounds = block_boundaries(counts)
    mx = np.maximum.reduceat(theta, bounds[:-1], axis=1)
    e = np.exp(theta - _expand(mx, counts))
    return mx + np.log(np.add.reduceat(e, bounds[:-1], axis=1))


def _same_layout(x, y) -> bool:
    return tuple(x.category_counts) == tuple(y.category_counts) and np.array_equal(
        x.block_offsets, y.block_offsets
    )


def _clamped_theta(model: MultilogitModel) -> np.ndarray:
    theta = model.natural_parameters()
    if not np.isfinite(theta).all():
        raise ValueError("model parameters are not finite")
    return np.clip(theta, -THETA_CLAMP, THETA_CLAMP)


def predict_probabilities(model: MultilogitModel) -> ProbabilityBlocks:
    """Blockwise softmax of the natural parameters."""
    probs = block_softmax(_clamped_theta(model), model.category_counts)
    return ProbabilityBlocks(
        probs=probs,
        block_offsets=model.block_offsets.copy(),
        category_counts=model.category_counts,
    )


def latent_coordinates(model: MultilogitModel):
    """Individual and category points whose distances drive the probabilities.

    With u_i scaled to D^{1/2} u_i and v(c) to D^{1/2} v(c),

        P(x_ij = c) proportional to exp(betatilde_j(c) - 0.5 ||v(c) - u_i||^2)

    where betatilde_j(c) = beta_j(c) + 0.5 ||v(c)||^2: a category is likely
    for an individual when its point is close in latent space.
    Returns (individuals n x K, categories C x K).
    """
    root = np.sqrt(model.factors.d)
    return model.factors.u * root[None, :], model.factors.v * root[None, :]


def log_likelihood(model: MultilogitModel, a: IndicatorMatrix) -> float:
    """Multinomial log-likelihood sum_ij [theta_ij(x_ij) - logsumexp_c theta_ij(c)]."""
    if not _same_layout(model, a):
        raise ValueError("model and indicator matrix have different category layouts")
    theta = _clamped_theta(model)
    lse = block_logsumexp(theta, model.category_counts)
    return float(np.sum(theta * a.entries) - np.sum(lse))


def gradient_interaction(model: MultilogitModel, a: IndicatorMatrix) -> np.ndarray:
    """Gradient of the log-likelihood in the interaction matrix: A - P."""
    if not _same_layout(model, a):
        raise ValueError("model and indicator matrix have different category layouts")
    return a.entries - predict_probabilities(model).probs


def taylor_objective(a: IndicatorMatrix, beta: np.ndarray, gamma: np.ndarray) -> float:
    """Quadratic expansion of the log-likelihood around the independence model.

    Evaluates, with p the empirical margins and beta0 the centered log
    margins,

        <Gamma, A - 1 p^T> - 0.5 ||Gamma D_p^{1/2}||_F^2
        - 0.5 1^T Gamma D_p (beta - beta0)

    omitting the constant value of the log-likelihood at (beta0, 0).
    """
    margins = category_margins(a)
    p = margins.p
    beta0 = centered_log_margins(margins)
    g = a.entries - p[None, :]
    linear = float(np.sum(gamma * g))
    quad = 0.5 * float(np.sum(gamma**2 * p[None, :]))
    cross = 0.5 * float(gamma.sum(axis=0) @ (p * (np.asarray(beta) - beta0)))
    return linear - quad - cross


def rmse_probabilities(truth: ProbabilityBlocks, est: ProbabilityBlocks) -> float:
    """Root mean squared difference over all n x C probability entries."""
    if truth.probs.shape != est.probs.shape or not _same_layout(truth, est):
        raise ValueError("probability blocks have different shapes or layouts")
    return float(np.sqrt(np.mean((truth.probs - est.probs) ** 2)))


def probabilities_from_one_step(est: OneStepEstimate) -> ProbabilityBlocks:
    """Plug the one-step estimate (beta0, gamma) into the multilogit model."""
    margins = est.margins
    model = MultilogitModel(
        beta=est.beta0,
        factors=est.factors,
        block_offsets=margins.block_offsets.copy(),
        category_counts=margins.category_counts,
    )
    return predict_probabilities(model)


def _project_rows_blockwise(mat: np.ndarray, margins: MarginVector) -> np.ndarray:
    # Euclidean projection of each block onto {rows orthogonal to p^j};
    # right-multiplying by a projector cannot increase the rank.
    out = mat.copy()
    bounds = margins.boundaries
    for j in range(len(margins.category_counts)):
        sl = slice(bounds[j], bounds[j + 1])
        pj = margins.p[sl]
        out[:, sl] -= np.outer(out[:, sl] @ pj, pj / (pj @ pj))
    return out


def _center_beta(beta: np.ndarray, margins: MarginVector) -> np.ndarray:
    # Per-block uniform shift (softmax-invariant) to p-weighted mean zero.
    out = beta.copy()
    bounds = margins.boundaries
    for j in range(len(margins.category_counts)):
        sl = slice(bounds[j], bounds[j + 1])
        out[sl] -= float(out[sl] @ margins.p[sl])
    return out


def fit_majorization(
    a: IndicatorMatrix,
    k: int,
    lam: float = 0.0,
    max_iter: int = 2000,
    tol: float = 1e-8,
    seed: int | None = None,
    init: str = "mca",
    margins: MarginVector | None = None,
):
    """Fit the multilogit-bilinear model by majorization-minimization.

    Each iteration majorizes the negative log-likelihood by the uniform
    quadratic with curvature 1/2 per (i, j) block, takes the step
    theta + 2 (A - P), splits the result into offsets (column means,
    p-centered per block) and an interaction part, and projects the latter
    by soft-thresholding its singular values at 2 * lam followed by rank-k
    truncation.  The penalized objective is nondecreasing at every
    iteration.

    Parameters
    ----------
    a : IndicatorMatrix
    k : target interaction rank (0 gives the closed-form independence fit)
    lam : trace-norm penalty weight, >= 0
    max_iter, tol : stop when the relative objective change drops below tol
    seed : recorded for provenance; every code path is deterministic
    init : "mca" warm-starts from half the one-step interaction, "cold"
        starts from zero
    margins : override for the category margins (cross-validation fits on
        row subsets pass smoothed margins here so no weight is zero)

    Returns
    -------
    (MultilogitModel, FitTrace)
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if init not in ("mca", "cold"):
        raise ValueError(f"unknown init {init!r}")
    if margins is None:
        margins = category_margins(a)
    counts = a.category_counts
    cap = min(a.n, a.total_categories - a.m)
    if not 0 <= k <= cap:
        raise ValueError(f"rank {k} out of range; at most min(n, C - m) = {cap}")

    beta0 = centered_log_margins(margins)
    if k == 0:
        model = MultilogitModel(
            beta=beta0,
            factors=RankKFactors(
                u=np.zeros((a.n, 0)), d=np.zeros(0), v=np.zeros((a.total_categories, 0))
            ),
            block_offsets=a.block_offsets.copy(),
            category_counts=counts,
        )
        obj = log_likelihood(model, a)
        return model, FitTrace(
            objective=np.array([obj]),
            gradient_norm=np.array([np.linalg.norm(gradient_interaction(model, a))]),
            converged=True,
            iterations=0,
        )

    beta = beta0.copy()
    if init == "mca":
        gamma = 0.5 * one_step_interaction(a, margins, k)
    else:
        gamma = np.zeros_like(a.entries)
    sigma = np.linalg.svd(gamma, compute_uv=False)[:k]

    trace_obj: list[float] = []
    trace_gnorm: list[float] = []
    converged = False
    iterations = 0
    obj_prev = None

    for it in range(max_iter + 1):
        theta = np.clip(beta[None, :] + gamma, -THETA_CLAMP, THETA_CLAMP)
        probs = block_softmax(theta, counts)
        loglik = float(np.sum(theta * a.entries) - np.sum(block_logsumexp(theta, counts)))
        obj = loglik - lam * float(sigma.sum())
        resid = a.entries - probs
        trace_obj.append(obj)
        trace_gnorm.append(float(np.linalg.norm(resid)))
        iterations = it
        if obj_prev is not None and abs(obj - obj_prev) <= tol * (abs(obj_prev) + 1e-12):
            converged = True
            break
        if it == max_iter:
            break
        obj_prev = obj

        theta_plus = theta + 2.0 * resid
        # exact block-coordinate surrogate steps: offsets by column means,
        # interaction by constraint-projected soft thresholding; the
        # per-block centering of beta is a gauge shift applied after the
        # interaction target is formed, so ascent is preserved exactly
        beta_hat = (theta_plus - gamma).mean(axis=0)
        beta = _center_beta(beta_hat, margins)
        target = _project_rows_blockwise(theta_plus - beta_hat[None, :], margins)
        u, s, vt = np.linalg.svd(target, full_matrices=False)
        s = np.maximum(s - 2.0 * lam, 0.0)[:k]
        gamma = (u[:, :k] * s) @ vt[:k]
        sigma = s

    if not converged and lam == 0.0:
        warnings.warn(
            "majorization did not converge with lam=0; parameters may be "
            "wandering off to infinity on separable data (iteration capped)",
            UserWarning,
            stacklevel=2,
        )

    model = MultilogitModel(
        beta=beta,
        factors=truncated_svd(gamma, k),
        block_offsets=a.block_offsets.copy(),
        category_counts=counts,
    )
    trace = FitTrace(
        objective=np.asarray(trace_obj),
        gradient_norm=np.asarray(trace_gnorm),
        converged=converged,
        iterations=iterations,
    )
    return model, trace


def _smoothed_margins(a: IndicatorMatrix) -> MarginVector:
    # Additive-half smoothing keeps every weight positive on row subsets.
    counts = a.entries.sum(axis=0)
    bounds = block_boundaries(a.category_counts)
    p = np.empty_like(counts)
    for j, cj in enumerate(a.category_counts):
        sl = slice(bounds[j], bounds[j + 1])
        p[sl] = (counts[sl] + 0.5) / (a.n + 0.5 * cj)
    return MarginVector(
        p=p, block_offsets=a.block_offsets.copy(), category_counts=a.category_counts
    )


def _take_rows(a: IndicatorMatrix, rows: np.ndarray) -> IndicatorMatrix:
    return IndicatorMatrix(
        entries=a.entries[rows],
        block_offsets=a.block_offsets.copy(),
        category_counts=a.category_counts,
    )


def _row_log_likelihood(theta_row: np.ndarray, a_row: np.ndarray, counts) -> float:
    theta = np.clip(theta_row, -THETA_CLAMP, THETA_CLAMP)[None, :]
    return float(np.sum(theta * a_row) - np.sum(block_logsumexp(theta, counts)))


def _score_new_row(a_row: np.ndarray, beta: np.ndarray, design: np.ndarray, counts) -> float:
    """Log-likelihood of a held-out row after estimating its latent position.

    The row's K-dimensional score is fitted by damped Newton steps on its
    own multinomial likelihood with the category directions held fixed.
    """
    k = design.shape[1]
    w = np.zeros(k)
    bounds = block_boundaries(counts)
    ll = _row_log_likelihood(beta, a_row, counts)
    for _ in range(50):
        theta = beta + design @ w
        probs = block_softmax(theta[None, :], counts)[0]
        grad = design.T @ (a_row - probs)
        hess = 1e-8 * np.eye(k)
        for j, cj in enumerate(counts):
            sl = slice(bounds[j], bounds[j + 1])
            pj = probs[sl]
            dj = design[sl]
            hess += dj.T @ (dj * pj[:, None]) - np.outer(dj.T @ pj, dj.T @ pj)
        step = np.linalg.solve(hess, grad)
        scale, improved = 1.0, False
        for _ in range(25):
            cand = w + scale * step
            ll_cand = _row_log_likelihood(beta + design @ cand, a_row, counts)
            if ll_cand >= ll - 1e-12:
                improved = ll_cand > ll + 1e-10
                w, ll = cand, ll_cand
                break
            scale *= 0.5
        if not improved:
            break
    return ll


DEFAULT_LAMBDA_GRID = (0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0)


def choose_lambda(
    a: IndicatorMatrix,
    k: int,
    lambdas=DEFAULT_LAMBDA_GRID,
    n_folds: int = 3,
    seed: int = 0,
    max_iter: int = 600,
    tol: float = 1e-7,
):
    """Pick the trace-norm penalty by row-holdout cross-validation.

    Rows are split into folds; for each candidate penalty the model is
    fitted on the remaining rows and each held-out row is scored by its
    predictive deviance after estimating only that row's latent position.
    Returns ``(best_lambda, {lambda: total predictive deviance})``; ties go
    to the smaller penalty.
    """
    if a.n < 2 * n_folds:
        raise ValueError("not enough rows for the requested number of folds")
    rng = np.random.default_rng(seed)
    order = rng.permutation(a.n)
    folds = [order[f::n_folds] for f in range(n_folds)]
    counts = a.category_counts
    scores = {float(lam): 0.0 for lam in lambdas}
    for fold in folds:
        test_mask = np.zeros(a.n, dtype=bool)
        test_mask[fold] = True
        train = _take_rows(a, np.nonzero(~test_mask)[0])
        margins = _smoothed_margins(train)
        k_eff = min(k, train.n, train.total_categories - train.m)
        for lam in lambdas:
            model, _ = fit_majorization(
                train, k_eff, lam=float(lam), max_iter=max_iter, tol=tol, margins=margins
            )
            design = model.factors.v * model.factors.d
            for i in fold:
                scores[float(lam)] -= 2.0 * _score_new_row(
                    a.entries[i], model.beta, design, counts
                )
    best = min(scores, key=lambda lam: (scores[lam], lam))
    return best, scores


def model_to_dict(model: MultilogitModel, trace: FitTrace | None = None) -> dict:
    """JSON-ready serialization of a fitted model (and optionally its trace)."""
    payload = {
        "beta": model.beta.tolist(),
        "u": model.factors.u.tolist(),
        "d": model.factors.d.tolist(),
        "v": model.factors.v.tolist(),
        "block_offsets": model.block_offsets.tolist(),
        "category_counts": list(model.category_counts),
    }
    if trace is not None:
        payload["trace"] = {
            "objective": trace.objective.tolist(),
            "gradient_norm": trace.gradient_norm.tolist(),
            "converged": bool(trace.converged),
            "iterations": int(trace.iterations),
        }
    return payload


def model_from_dict(payload: dict) -> MultilogitModel:
    return MultilogitModel(
        beta=np.asarray(payload["beta"], dtype=np.float64),
        factors=RankKFactors(
            u=np.asarray(payload["u"], dtype=np.float64),
            d=np.asarray(payload["d"], dtype=np.float64),
            v=np.asarray(payload["v"], dtype=np.float64),
        ),
        block_offsets=np.asarray(payload["block_offsets"], dtype=np.int64),
        category_counts=tuple(payload["category_counts"]),
    )


def save_model(model: MultilogitModel, path, trace: FitTrace | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model, trace), fh, sort_keys=True)
        fh.write("\n")


def load_model(path) -> MultilogitModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
