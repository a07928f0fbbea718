"""Command-line surface: CA/MCA analyses, multilogit fitting, and the
simulation benchmark, each emitting a reproducibility manifest.

Exit codes: 0 success, 2 usage or input error, 3 internal error.  Every
command is deterministic given its seed; the manifest records the exact
configuration, input digest, and library versions, and equal manifests
imply byte-identical numeric outputs.  ``CATLOWRANK_WORKERS`` sets the
process count for simulation grids (flag > environment > 1).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .bilinear_models import fit_ca_glm
from .corresp import ca_fit, ca_reconstruct, contingency_table, pearson_chi2, total_inertia
from .export import (
    biplot_payload,
    fmt,
    write_biplot_json,
    write_biplot_svg,
    write_coordinates_csv,
    write_matrix_csv,
)
from .mca import correlation_ratio, mca_burt, mca_indicator, mca_one_step
from .multilogit import (
    DEFAULT_LAMBDA_GRID,
    choose_lambda,
    fit_majorization,
    latent_coordinates,
    predict_probabilities,
    save_model,
)
from .simulate import run_grid, table2_cells
from .tables import (
    category_margins,
    drop_empty_categories,
    encode_indicator,
    load_table,
    save_table_schema,
)


class UsageError(ValueError):
    """Bad input or flags; maps to exit code 2."""


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: Path, command: str, config: dict, input_path=None, outputs=()):
    manifest = {
        "command": command,
        "config": config,
        "versions": {
            "catlowrank": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "input_digest": _sha256(input_path) if input_path else None,
        "outputs": sorted(Path(p).name for p in outputs),
    }
    path = out_dir / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def _load_config_file(path) -> dict:
    """Simple key=value file; '#' starts a comment line."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"config file {path} line {lineno}: expected key=value")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if key == "lambda":  # flag spelling; stored as lam
            key = "lam"
        values[key] = value.strip()
    return values


def _resolve(args, key, default, cast):
    """Precedence: explicit flag > config file > default."""
    flag_val = getattr(args, key)
    if flag_val is not None:
        return flag_val
    if key in args._config:
        try:
            return cast(args._config[key])
        except (TypeError, ValueError) as exc:
            raise UsageError(f"config value for {key} is invalid: {exc}") from exc
    return default


def _read_count_csv(path, delimiter=","):
    """Numeric count grid with a header row; a leading label column is
    detected when its body cells are not numeric."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [row for row in csv.reader(fh, delimiter=delimiter) if row]
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    if len(rows) < 2:
        raise UsageError(f"{path}: need a header row and at least one data row")
    header = rows[0]
    body = rows[1:]

    def numeric(s):
        try:
            float(s)
            return True
        except ValueError:
            return False

    has_row_labels = any(not numeric(r[0]) for r in body)
    col_names = header[1:] if has_row_labels else header
    row_names = []
    data = []
    for i, row in enumerate(body):
        cells = row[1:] if has_row_labels else row
        row_names.append(row[0] if has_row_labels else f"r{i + 1}")
        if len(cells) != len(col_names):
            raise UsageError(f"{path}: row '{row_names[-1]}' has {len(cells)} cells, "
                             f"expected {len(col_names)}")
        parsed = []
        for name, cell in zip(col_names, cells):
            try:
                parsed.append(float(cell))
            except ValueError as exc:
                raise UsageError(
                    f"{path}: row '{row_names[-1]}', column '{name}': "
                    f"not a number: {cell!r}"
                ) from exc
        data.append(parsed)
    return np.asarray(data), row_names, [str(c) for c in col_names]


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_ca(args) -> int:
    out = _out_dir(args)
    counts, row_names, col_names = _read_count_csv(args.input, delimiter=args.delimiter)
    try:
        t = contingency_table(counts)
        k = args.rank if args.rank is not None else max(1, min(counts.shape) - 1)
        res = ca_fit(t, k)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    ids = row_names + col_names
    types = ["row"] * len(row_names) + ["col"] * len(col_names)
    coords = np.vstack([res.row_principal, res.col_principal])
    write_coordinates_csv(out / "coordinates.csv", ids, types, coords)

    chi2 = pearson_chi2(t)
    inertia = total_inertia(t)
    eig = res.factors.d**2
    with open(out / "inertia.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "chi2": chi2,
                "total_inertia": inertia,
                "grand_total": t.total,
                "singular_values": res.factors.d.tolist(),
                "explained_inertia": (eig / inertia).tolist() if inertia > 0 else
                    [0.0] * len(eig),
            },
            fh,
            sort_keys=True,
            indent=2,
        )
        fh.write("\n")
    write_matrix_csv(out / "reconstruction.csv", ca_reconstruct(res, t, k),
                     row_ids=row_names, col_ids=col_names)
    payload = biplot_payload(ids, types, coords)
    write_biplot_json(out / "biplot.json", payload)
    write_biplot_svg(out / "biplot.svg", payload, title="correspondence analysis")
    _write_manifest(
        out, "ca",
        {"input": str(args.input), "rank": k, "delimiter": args.delimiter},
        input_path=args.input,
        outputs=[out / n for n in
                 ("coordinates.csv", "inertia.json", "reconstruction.csv",
                  "biplot.json", "biplot.svg")],
    )
    return 0


def cmd_mca(args) -> int:
    out = _out_dir(args)
    if args.rank is not None and args.rank < 1:
        raise UsageError("--rank must be at least 1")
    try:
        t = load_table(args.input, delimiter=args.delimiter)
        t, _ = drop_empty_categories(t)
        k = args.rank if args.rank is not None else 2
        res = mca_indicator(t, k) if args.variant == "indicator" else mca_burt(t, k)
        indicator_res = res if args.variant == "indicator" else mca_indicator(t, k)
    except (ValueError, OSError) as exc:
        raise UsageError(str(exc)) from exc

    names = t.variable_names or tuple(f"v{j + 1}" for j in range(t.m))
    cat_ids = []
    for j in range(t.m):
        labels = (t.category_labels[j] if t.category_labels is not None
                  else tuple(str(c + 1) for c in range(t.category_counts[j])))
        cat_ids.extend(f"{names[j]}={lab}" for lab in labels)

    ids = list(cat_ids)
    types = ["category"] * len(cat_ids)
    coords = res.category_principal
    if res.row_principal is not None:
        ids = [f"i{i + 1}" for i in range(t.n)] + ids
        types = ["individual"] * t.n + types
        coords = np.vstack([res.row_principal, res.category_principal])
    write_coordinates_csv(out / "coordinates.csv", ids, types, coords)

    eigmax = min(len(res.eigenvalues), t.total_categories - t.m)
    with open(out / "eigenvalues.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "variant": res.variant,
                "eigenvalues": res.eigenvalues[:eigmax].tolist(),
                "total_inertia": (t.total_categories - t.m) / t.m,
            },
            fh, sort_keys=True, indent=2,
        )
        fh.write("\n")

    scores = indicator_res.factors.u
    with open(out / "correlation_ratios.csv", "w", encoding="utf-8") as fh:
        fh.write("variable," + ",".join(f"dim{d + 1}" for d in range(k)) + "\n")
        for j in range(t.m):
            etas = [correlation_ratio(scores[:, d], t, j) for d in range(k)]
            fh.write(names[j] + "," + ",".join(fmt(e) for e in etas) + "\n")

    payload = biplot_payload(ids, types, coords)
    write_biplot_json(out / "biplot.json", payload)
    write_biplot_svg(out / "biplot.svg", payload, title=f"MCA ({res.variant})")
    save_table_schema(t, out / "schema.json")
    _write_manifest(
        out, "mca",
        {"input": str(args.input), "rank": k, "variant": args.variant,
         "delimiter": args.delimiter},
        input_path=args.input,
        outputs=[out / n for n in
                 ("coordinates.csv", "eigenvalues.json", "correlation_ratios.csv",
                  "biplot.json", "biplot.svg", "schema.json")],
    )
    return 0


def cmd_fit_multilogit(args) -> int:
    out = _out_dir(args)
    lam = _resolve(args, "lam", 0.0, float)
    seed = _resolve(args, "seed", 0, int)
    max_iter = _resolve(args, "max_iter", 2000, int)
    if args.rank is None or args.rank < 0:
        raise UsageError("--rank is required and must be >= 0")
    try:
        t = load_table(args.input, delimiter=args.delimiter)
        t, _ = drop_empty_categories(t)
        a = encode_indicator(t)
        model, trace = fit_majorization(
            a, args.rank, lam=lam, max_iter=max_iter, tol=args.tol,
            seed=seed, init=args.init,
        )
    except (ValueError, OSError) as exc:
        raise UsageError(str(exc)) from exc

    save_model(model, out / "model.json", trace)
    with open(out / "trace.csv", "w", encoding="utf-8") as fh:
        fh.write("iteration,objective,gradient_norm\n")
        for i, (o, g) in enumerate(zip(trace.objective, trace.gradient_norm)):
            fh.write(f"{i},{fmt(o)},{fmt(g)}\n")
    probs = predict_probabilities(model)
    cat_ids = [f"v{j + 1}={c + 1}" for j, cj in enumerate(t.category_counts)
               for c in range(cj)]
    write_matrix_csv(out / "probabilities.csv", probs.probs,
                     row_ids=[f"i{i + 1}" for i in range(t.n)], col_ids=cat_ids)

    upoints, vpoints = latent_coordinates(model)
    k_eff = upoints.shape[1]
    ids = [f"i{i + 1}" for i in range(t.n)] + cat_ids
    types = ["individual"] * t.n + ["category"] * len(cat_ids)
    coords = np.vstack([upoints, vpoints]) if k_eff else np.zeros((len(ids), 1))
    payload = biplot_payload(ids, types, coords)
    write_biplot_json(out / "biplot.json", payload)
    write_biplot_svg(out / "biplot.svg", payload, title="multilogit latent space")
    _write_manifest(
        out, "fit-multilogit",
        {"input": str(args.input), "rank": args.rank, "lam": lam, "init": args.init,
         "seed": seed, "max_iter": max_iter, "tol": args.tol,
         "converged": bool(trace.converged)},
        input_path=args.input,
        outputs=[out / n for n in
                 ("model.json", "trace.csv", "probabilities.csv",
                  "biplot.json", "biplot.svg")],
    )
    return 0


def _parse_cells(spec: str):
    if spec == "all":
        return sorted(table2_cells())
    try:
        ids = [int(tok) for tok in spec.split(",") if tok.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --cells value {spec!r}: {exc}") from exc
    if not ids:
        raise UsageError("--cells is empty")
    known = table2_cells()
    for cid in ids:
        if cid not in known:
            raise UsageError(f"unknown cell id {cid}; valid ids are 1..24")
    return ids


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    reps = _resolve(args, "reps", 10, int)
    seed = _resolve(args, "seed", 0, int)
    lam = _resolve(args, "lam", 0.0, float)
    workers = args.workers or int(os.environ.get("CATLOWRANK_WORKERS", "1"))
    ids = _parse_cells(args.cells)
    cells = table2_cells(ids)
    report = run_grid(cells, reps=reps, master_seed=seed, lam=lam, workers=workers)

    rows_path = out / "table2.csv"
    with open(rows_path, "w", encoding="utf-8") as fh:
        fh.write("cell,n,m,p,rank,ratio,strength,model,MCA,"
                 "model_sd,MCA_sd,model_mse,MCA_mse,reps,failures\n")
        for cell in report.cells:
            fh.write(",".join([
                str(cell.cell), str(cell.n), str(cell.m), str(cell.m), str(cell.k),
                fmt(cell.ratio), fmt(cell.strength),
                fmt(cell.rmse_model_mean), fmt(cell.rmse_mca_mean),
                fmt(cell.rmse_model_sd), fmt(cell.rmse_mca_sd),
                fmt(cell.mse_model_mean), fmt(cell.mse_mca_mean),
                str(cell.reps), str(cell.failures_model + cell.failures_mca),
            ]) + "\n")

    detail = {
        "master_seed": report.master_seed,
        "reps": report.reps,
        "metadata": report.metadata,
        "cells": [
            {
                "cell": c.cell, "n": c.n, "m": c.m, "rank": c.k,
                "ratio": c.ratio, "strength": c.strength,
                "reps_detail": c.reps_detail,
            }
            for c in report.cells
        ],
    }
    with open(out / "detail.json", "w", encoding="utf-8") as fh:
        json.dump(detail, fh, sort_keys=True)
        fh.write("\n")

    outputs = [rows_path, out / "detail.json"]
    penalized = {}
    if args.lambda_cv:
        for cid in (c for c in ids if c in (7, 12, 19)):
            penalized[cid] = _penalized_cell(cells[cid], reps, seed, cid)
        with open(out / "penalized.json", "w", encoding="utf-8") as fh:
            json.dump(penalized, fh, sort_keys=True, indent=2)
            fh.write("\n")
        outputs.append(out / "penalized.json")

    _write_manifest(
        out, "simulate",
        {"cells": ids, "reps": reps, "seed": seed, "lam": lam,
         "lambda_cv": bool(args.lambda_cv), "workers": workers},
        outputs=outputs,
    )
    return 0


def _penalized_cell(template, reps, master_seed, cell_id):
    """Cross-validated trace-norm fit for one grid cell."""
    from .simulate import SimConfig, estimate_probs_model, generate_dataset, rep_seed
    from .multilogit import rmse_probabilities

    per_rep = []
    for rep in range(reps):
        cfg = SimConfig(
            n=template.n, m=template.m, k=template.k, ratio=template.ratio,
            strength=template.strength, categories=template.categories,
            seed=rep_seed(master_seed, cell_id, rep),
        )
        ds = generate_dataset(cfg)
        clean, _ = drop_empty_categories(ds.table)
        a = encode_indicator(clean)
        k_eff = min(cfg.k, clean.n, clean.total_categories - clean.m)
        best_lam, _ = choose_lambda(a, k_eff, seed=cfg.seed)
        est = estimate_probs_model(ds, lam=best_lam)
        per_rep.append(
            {"rep": rep, "lambda": best_lam,
             "rmse": rmse_probabilities(ds.true_probs, est)}
        )
    return per_rep


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="catlowrank",
        description="Low-rank analysis of categorical data tables",
    )
    parser.add_argument("--config", default=None,
                        help="key=value config file (flags take precedence)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ca = sub.add_parser("ca", help="correspondence analysis of a count table")
    p_ca.add_argument("input")
    p_ca.add_argument("--rank", type=int, default=None)
    p_ca.add_argument("--delimiter", default=",")
    p_ca.add_argument("--out", required=True)
    p_ca.set_defaults(func=cmd_ca)

    p_mca = sub.add_parser("mca", help="multiple correspondence analysis")
    p_mca.add_argument("input")
    p_mca.add_argument("--rank", type=int, default=None)
    p_mca.add_argument("--variant", choices=("indicator", "burt"), default="indicator")
    p_mca.add_argument("--delimiter", default=",")
    p_mca.add_argument("--out", required=True)
    p_mca.set_defaults(func=cmd_mca)

    p_fit = sub.add_parser("fit-multilogit", help="fit the multilogit-bilinear model")
    p_fit.add_argument("input")
    p_fit.add_argument("--rank", type=int, default=None)
    p_fit.add_argument("--lambda", dest="lam", type=float, default=None)
    p_fit.add_argument("--init", choices=("mca", "cold"), default="mca")
    p_fit.add_argument("--seed", type=int, default=None)
    p_fit.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    p_fit.add_argument("--tol", type=float, default=1e-8)
    p_fit.add_argument("--delimiter", default=",")
    p_fit.add_argument("--out", required=True)
    p_fit.set_defaults(func=cmd_fit_multilogit)

    for name in ("simulate", "reproduce-table2"):
        p_sim = sub.add_parser(name, help="run the benchmark grid")
        p_sim.add_argument("--cells", default="all",
                           help="'all' or comma-separated cell ids (1..24)")
        p_sim.add_argument("--reps", type=int, default=None)
        p_sim.add_argument("--seed", type=int, default=None)
        p_sim.add_argument("--lambda", dest="lam", type=float, default=None)
        p_sim.add_argument("--lambda-cv", action="store_true",
                           help="also run the cross-validated penalized fit "
                                "for cells 7, 12, 19")
        p_sim.add_argument("--workers", type=int, default=None)
        p_sim.add_argument("--out", required=True)
        p_sim.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args._config = _load_config_file(args.config) if args.config else {}
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
