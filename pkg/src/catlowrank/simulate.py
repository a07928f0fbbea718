"""Simulation benchmark: draw tables from the multilogit-bilinear model and
score estimators against the true cell probabilities.

Latent positions for individuals and categories are centered Gaussians
whose per-axis standard deviations are (d_1, ..., d_K) with d_1 = ratio
and the remaining values 1, all multiplied by the ``strength`` factor.
(The spread ratio between the first and last axis equals ``ratio``; with a
dominant first axis this is the regime where the horseshoe artifact shows
up in the MCA scores.)  Cell probabilities follow the squared-distance
form

    P(x_ij = c) proportional to exp(-0.5 ||u_i - v_j(c)||^2)

and each cell is sampled independently.  The grid runner scores the
majorization fit and the one-step (MCA) estimate by the root mean squared
probability error, with per-cell seeds derived counter-style from a master
seed so results do not depend on execution order or parallelism.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field

import numpy as np

from .mca import mca_one_step
from .multilogit import (
    ProbabilityBlocks,
    block_softmax,
    fit_majorization,
    predict_probabilities,
    probabilities_from_one_step,
    rmse_probabilities,
)
from .tables import CategoricalTable, block_boundaries, drop_empty_categories

__all__ = [
    "SimConfig",
    "SimDataset",
    "CellSummary",
    "RmseReport",
    "generate_dataset",
    "run_grid",
    "table2_cells",
    "estimate_probs_one_step",
    "estimate_probs_model",
]


@dataclass(frozen=True)
class SimConfig:
    """One cell of the experiment grid."""

    n: int
    m: int
    k: int
    ratio: float
    strength: float
    seed: int
    categories: int = 3

    def __post_init__(self):
        if min(self.n, self.m, self.k) < 1 or self.categories < 2:
            raise ValueError("n, m, k must be positive and categories >= 2")
        if self.ratio < 1:
            raise ValueError("ratio must be >= 1")
        if self.strength < 0:
            raise ValueError("strength must be nonnegative")


@dataclass(frozen=True)
class SimDataset:
    """A sampled table with the truth that generated it."""

    config: SimConfig
    table: CategoricalTable
    true_probs: ProbabilityBlocks
    individual_latents: np.ndarray
    category_latents: np.ndarray


def singular_value_profile(k: int, ratio: float) -> np.ndarray:
    """Latent axis scales (d_1, ..., d_K) with d_1 = ratio and the rest 1."""
    d = np.ones(k)
    d[0] = ratio
    return d


def generate_dataset(cfg: SimConfig) -> SimDataset:
    """Draw latents, probabilities, and one sampled table, all from cfg.seed."""
    rng = np.random.default_rng(cfg.seed)
    q = cfg.categories
    c_total = cfg.m * q
    sd = singular_value_profile(cfg.k, cfg.ratio)
    u = cfg.strength * rng.standard_normal((cfg.n, cfg.k)) * sd[None, :]
    v = cfg.strength * rng.standard_normal((c_total, cfg.k)) * sd[None, :]

    sq_u = np.sum(u**2, axis=1)
    sq_v = np.sum(v**2, axis=1)
    theta = u @ v.T - 0.5 * (sq_u[:, None] + sq_v[None, :])
    counts = (q,) * cfg.m
    probs = block_softmax(theta, counts)

    cum = np.cumsum(probs.reshape(cfg.n, cfg.m, q), axis=2)
    draws = rng.random((cfg.n, cfg.m))
    values = np.minimum((draws[:, :, None] > cum).sum(axis=2), q - 1) + 1
    table = CategoricalTable(values=values.astype(np.int64), category_counts=counts)
    offsets = block_boundaries(counts)[:-1]
    return SimDataset(
        config=cfg,
        table=table,
        true_probs=ProbabilityBlocks(probs=probs, block_offsets=offsets, category_counts=counts),
        individual_latents=u,
        category_latents=v,
    )


def _embed_probs(reduced: ProbabilityBlocks, kept: np.ndarray, full_counts) -> ProbabilityBlocks:
    # Categories never observed carry estimated probability zero.
    full = np.zeros((reduced.probs.shape[0], kept.shape[0]))
    full[:, kept] = reduced.probs
    return ProbabilityBlocks(
        probs=full,
        block_offsets=block_boundaries(full_counts)[:-1],
        category_counts=tuple(full_counts),
    )


def estimate_probs_one_step(dataset: SimDataset, k: int | None = None) -> ProbabilityBlocks:
    """One-step (MCA) probability estimate in the full category layout."""
    cfg = dataset.config
    k = cfg.k if k is None else k
    clean, kept = drop_empty_categories(dataset.table)
    k = min(k, clean.n, clean.total_categories - clean.m)
    est = mca_one_step(clean, k)
    return _embed_probs(
        probabilities_from_one_step(est), kept, dataset.table.category_counts
    )


def estimate_probs_model(
    dataset: SimDataset,
    k: int | None = None,
    lam: float = 0.0,
    max_iter: int = 2000,
    tol: float = 1e-8,
    init: str = "mca",
) -> ProbabilityBlocks:
    """Majorization-fit probability estimate in the full category layout."""
    from .tables import category_margins, encode_indicator

    cfg = dataset.config
    k = cfg.k if k is None else k
    clean, kept = drop_empty_categories(dataset.table)
    a = encode_indicator(clean)
    k = min(k, clean.n, clean.total_categories - clean.m)
    model, _ = fit_majorization(a, k, lam=lam, max_iter=max_iter, tol=tol, init=init)
    return _embed_probs(predict_probabilities(model), kept, dataset.table.category_counts)


@dataclass
class CellSummary:
    """Aggregated scores for one grid cell."""

    cell: int
    n: int
    m: int
    k: int
    ratio: float
    strength: float
    reps: int
    rmse_model_mean: float
    rmse_model_sd: float
    rmse_mca_mean: float
    rmse_mca_sd: float
    mse_model_mean: float
    mse_mca_mean: float
    failures_model: int
    failures_mca: int
    reps_detail: list = field(default_factory=list)


@dataclass
class RmseReport:
    """Per-cell summaries plus the provenance needed to reproduce them."""

    cells: list
    master_seed: int
    reps: int
    metadata: dict


def rep_seed(master_seed: int, cell: int, rep: int) -> int:
    """Counter-style per-(cell, rep) seed; independent of execution order."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(cell, rep))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _score_once(cell_id, cfg, estimators):
    dataset = generate_dataset(cfg)
    record = {"cell": cell_id, "seed": cfg.seed}
    for name, estimator in estimators.items():
        try:
            est = estimator(dataset)
            record[f"rmse_{name}"] = rmse_probabilities(dataset.true_probs, est)
        except Exception as exc:  # noqa: BLE001 - recorded, not fatal
            record[f"rmse_{name}"] = None
            record[f"error_{name}"] = f"{type(exc).__name__}: {exc}"
    return record


def _default_estimators(lam: float, fit_kwargs: dict):
    return {
        "model": lambda ds: estimate_probs_model(ds, lam=lam, **fit_kwargs),
        "mca": estimate_probs_one_step,
    }


def _worker(args):
    try:  # avoid BLAS oversubscription across worker processes
        import threadpoolctl

        threadpoolctl.threadpool_limits(1)
    except ImportError:
        pass
    cell_id, cfg, lam, fit_kwargs = args
    return _score_once(cell_id, cfg, _default_estimators(lam, fit_kwargs))


def run_grid(
    cells: dict,
    reps: int,
    master_seed: int,
    estimators: dict | None = None,
    lam: float = 0.0,
    fit_kwargs: dict | None = None,
    workers: int = 1,
) -> RmseReport:
    """Score the estimators over a grid of cells, ``reps`` replicates each.

    Parameters
    ----------
    cells : mapping cell id -> SimConfig template (its seed field is ignored;
        per-rep seeds are derived from master_seed)
    reps : replicates per cell
    master_seed : root of the counter-based seed derivation
    estimators : optional mapping name -> callable(SimDataset) ->
        ProbabilityBlocks; defaults to the majorization fit ("model") and
        the one-step estimate ("mca").  Custom estimators run serially.
    lam, fit_kwargs : forwarded to the default model estimator
    workers : process count for the default estimators (1 = serial)
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    fit_kwargs = dict(fit_kwargs or {})
    custom = estimators is not None
    if not custom:
        estimators = _default_estimators(lam, fit_kwargs)
    names = list(estimators.keys())

    tasks = []
    for cell_id in sorted(cells):
        template = cells[cell_id]
        for rep in range(reps):
            cfg = SimConfig(
                n=template.n,
                m=template.m,
                k=template.k,
                ratio=template.ratio,
                strength=template.strength,
                seed=rep_seed(master_seed, cell_id, rep),
                categories=template.categories,
            )
            tasks.append((cell_id, cfg))

    records = {}
    if workers > 1 and not custom:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            for (cell_id, cfg), rec in zip(
                tasks, pool.map(_worker, [(c, cfg, lam, fit_kwargs) for c, cfg in tasks])
            ):
                records[(cell_id, cfg.seed)] = rec
    else:
        for cell_id, cfg in tasks:
            records[(cell_id, cfg.seed)] = _score_once(cell_id, cfg, estimators)

    summaries = []
    for cell_id in sorted(cells):
        template = cells[cell_id]
        recs = [records[(cell_id, rep_seed(master_seed, cell_id, rep))] for rep in range(reps)]
        stats = {}
        fails = {}
        for name in names:
            vals = np.array([r[f"rmse_{name}"] for r in recs if r[f"rmse_{name}"] is not None])
            fails[name] = sum(1 for r in recs if r[f"rmse_{name}"] is None)
            if vals.size == 0:
                stats[name] = (np.nan, np.nan, np.nan)
            else:
                sd = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
                stats[name] = (float(vals.mean()), sd, float(np.mean(vals**2)))
        model_name = names[0]
        mca_name = names[1] if len(names) > 1 else names[0]
        summaries.append(
            CellSummary(
                cell=cell_id,
                n=template.n,
                m=template.m,
                k=template.k,
                ratio=template.ratio,
                strength=template.strength,
                reps=reps,
                rmse_model_mean=stats[model_name][0],
                rmse_model_sd=stats[model_name][1],
                rmse_mca_mean=stats[mca_name][0],
                rmse_mca_sd=stats[mca_name][1],
                mse_model_mean=stats[model_name][2],
                mse_mca_mean=stats[mca_name][2],
                failures_model=fails[model_name],
                failures_mca=fails[mca_name],
                reps_detail=recs,
            )
        )
    return RmseReport(
        cells=summaries,
        master_seed=master_seed,
        reps=reps,
        metadata={
            "strength_scaling": "latent coordinates multiplied by strength",
            "axis_scaling": "latent standard deviations (ratio, 1, ..., 1)",
            "estimators": names,
            "lam": lam,
        },
    )


# (n, m, rank, ratio, strength) for the 24 benchmark cells.
_GRID_ROWS = {
    1: (50, 20, 2, 1, 0.1),
    2: (50, 20, 2, 1, 1),
    3: (50, 20, 2, 2, 0.1),
    4: (50, 20, 2, 2, 1),
    5: (50, 20, 6, 1, 0.1),
    6: (50, 20, 6, 1, 1),
    7: (50, 20, 6, 2, 0.1),
    8: (50, 20, 6, 2, 1),
    9: (300, 100, 2, 1, 0.1),
    10: (300, 100, 2, 1, 1),
    11: (300, 100, 2, 2, 0.1),
    12: (300, 100, 2, 2, 1),
    13: (300, 300, 2, 1, 0.1),
    14: (300, 300, 2, 1, 1),
    15: (300, 300, 2, 2, 0.1),
    16: (300, 300, 2, 2, 1),
    17: (300, 100, 6, 1, 0.1),
    18: (300, 100, 6, 1, 1),
    19: (300, 100, 6, 2, 0.1),
    20: (300, 100, 6, 2, 1),
    21: (300, 300, 6, 1, 0.1),
    22: (300, 300, 6, 1, 1),
    23: (300, 300, 6, 2, 0.1),
    24: (300, 300, 6, 2, 1),
}


def table2_cells(ids=None) -> dict:
    """The benchmark grid (3 categories per variable), keyed by cell id."""
    if ids is None:
        ids = sorted(_GRID_ROWS)
    out = {}
    for cell_id in ids:
        if cell_id not in _GRID_ROWS:
            raise ValueError(f"unknown cell id {cell_id}; valid ids are 1..24")
        n, m, k, ratio, strength = _GRID_ROWS[cell_id]
        out[cell_id] = SimConfig(
            n=n, m=m, k=k, ratio=float(ratio), strength=float(strength), seed=0
        )
    return out
