"""Categorical data tables and the indicator / Burt / margin structures built from them.

A dataset of n individuals answering m nominal variables is stored as an
integer-coded table (levels 1..C_j per variable).  From it we build the
dummy-coded indicator matrix, the Burt matrix of all pairwise crossings,
and the vector of category margins that every downstream decomposition
weights by.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CategoricalTable",
    "IndicatorMatrix",
    "BurtMatrix",
    "MarginVector",
    "load_table",
    "encode_indicator",
    "burt_matrix",
    "category_margins",
    "cross_tab",
    "drop_empty_categories",
    "table_schema",
]


def block_boundaries(category_counts) -> np.ndarray:
    """Column boundaries [0, C_1, C_1+C_2, ..., C] of the per-variable blocks."""
    counts = np.asarray(category_counts, dtype=np.int64)
    return np.concatenate([[0], np.cumsum(counts)])


@dataclass(frozen=True)
class CategoricalTable:
    """n x m integer-coded nominal observations, entries of column j in 1..C_j."""

    values: np.ndarray
    category_counts: tuple
    variable_names: tuple | None = None
    category_labels: tuple | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.int64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError("values must be an n x m matrix with n, m >= 1")
        counts = tuple(int(c) for c in self.category_counts)
        if len(counts) != values.shape[1]:
            raise ValueError("category_counts must have one entry per variable")
        for j, cj in enumerate(counts):
            if cj < 2:
                raise ValueError(f"variable {j} has {cj} categories; at least 2 required")
            col = values[:, j]
            if col.min() < 1 or col.max() > cj:
                raise ValueError(f"entries of variable {j} must lie in 1..{cj}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "category_counts", counts)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def total_categories(self) -> int:
        return int(sum(self.category_counts))


@dataclass(frozen=True)
class IndicatorMatrix:
    """n x C dummy coding, one block of C_j columns per variable (row block sums = 1)."""

    entries: np.ndarray
    block_offsets: np.ndarray
    category_counts: tuple

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def m(self) -> int:
        return len(self.category_counts)

    @property
    def total_categories(self) -> int:
        return self.entries.shape[1]

    @property
    def boundaries(self) -> np.ndarray:
        return block_boundaries(self.category_counts)

    def block(self, j: int) -> np.ndarray:
        b = self.boundaries
        return self.entries[:, b[j]:b[j + 1]]


@dataclass(frozen=True)
class BurtMatrix:
    """C x C symmetric matrix of all two-way crossing counts, B = A^T A."""

    entries: np.ndarray
    block_offsets: np.ndarray
    category_counts: tuple

    @property
    def boundaries(self) -> np.ndarray:
        return block_boundaries(self.category_counts)

    def block(self, j: int, j2: int) -> np.ndarray:
        b = self.boundaries
        return self.entries[b[j]:b[j + 1], b[j2]:b[j2 + 1]]


@dataclass(frozen=True)
class MarginVector:
    """Length-C category proportions; each per-variable block sums to 1."""

    p: np.ndarray
    block_offsets: np.ndarray
    category_counts: tuple

    @property
    def boundaries(self) -> np.ndarray:
        return block_boundaries(self.category_counts)

    def block(self, j: int) -> np.ndarray:
        b = self.boundaries
        return self.p[b[j]:b[j + 1]]


def load_table(path, columns=None, delimiter: str = ",") -> CategoricalTable:
    """Read a categorical CSV (header required) into a CategoricalTable.

    String levels are mapped to codes 1..C_j in order of first appearance,
    and the mapping is kept in ``category_labels`` so outputs are
    reproducible across runs.

    Parameters
    ----------
    path : str or pathlib.Path
    columns : optional list of column names to use (default: all columns)
    delimiter : CSV delimiter, default comma
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        rows = [row for row in reader if row]
    if not rows:
        raise ValueError(f"empty file: {path}")
    header = [name.strip() for name in rows[0]]
    data_rows = rows[1:]
    if not data_rows:
        raise ValueError(f"no data rows in {path}")
    if columns is None:
        use = list(range(len(header)))
    else:
        missing = [c for c in columns if c not in header]
        if missing:
            raise ValueError(f"columns not found in header: {missing}")
        use = [header.index(c) for c in columns]

    n = len(data_rows)
    m = len(use)
    values = np.zeros((n, m), dtype=np.int64)
    labels = []
    for out_j, j in enumerate(use):
        seen: dict = {}
        for i, row in enumerate(data_rows):
            if j >= len(row):
                raise ValueError(f"row {i + 2} has too few fields for column '{header[j]}'")
            level = row[j].strip()
            code = seen.setdefault(level, len(seen) + 1)
            values[i, out_j] = code
        if len(seen) < 2:
            raise ValueError(
                f"column with a single level: '{header[j]}' has only one observed level"
            )
        labels.append(tuple(seen.keys()))

    return CategoricalTable(
        values=values,
        category_counts=tuple(len(lab) for lab in labels),
        variable_names=tuple(header[j] for j in use),
        category_labels=tuple(labels),
    )


def encode_indicator(t: CategoricalTable) -> IndicatorMatrix:
    """Dummy-code the table: A[i, offset_j + c - 1] = 1 iff x_ij = c."""
    bounds = block_boundaries(t.category_counts)
    a = np.zeros((t.n, int(bounds[-1])))
    cols = bounds[:-1][None, :] + (t.values - 1)
    a[np.arange(t.n)[:, None], cols] = 1.0
    return IndicatorMatrix(
        entries=a, block_offsets=bounds[:-1].copy(), category_counts=t.category_counts
    )


def burt_matrix(a: IndicatorMatrix) -> BurtMatrix:
    """All pairwise two-way tables in block form: B = A^T A."""
    b = a.entries.T @ a.entries
    return BurtMatrix(
        entries=np.rint(b).astype(np.int64),
        block_offsets=a.block_offsets.copy(),
        category_counts=a.category_counts,
    )


def category_margins(a: IndicatorMatrix) -> MarginVector:
    """Normalized column margins p(c) = (1/n) * column sum of A.

    Raises if any category has zero observations; callers may drop the
    category (see :func:`drop_empty_categories`) and re-encode.
    """
    sums = a.entries.sum(axis=0)
    if np.any(sums == 0):
        bounds = a.boundaries
        for j in range(a.m):
            block = sums[bounds[j]:bounds[j + 1]]
            empty = np.nonzero(block == 0)[0]
            if empty.size:
                raise ValueError(
                    f"empty category: variable {j}, category {empty[0] + 1} "
                    "has no observations"
                )
    return MarginVector(
        p=sums / a.n,
        block_offsets=a.block_offsets.copy(),
        category_counts=a.category_counts,
    )


def cross_tab(t: CategoricalTable, j: int, j2: int) -> np.ndarray:
    """Two-way contingency counts of variables j and j2 (0-based, j != j2)."""
    if not (0 <= j < t.m and 0 <= j2 < t.m):
        raise ValueError(f"variable index out of range: {j}, {j2} with m={t.m}")
    if j == j2:
        raise ValueError("cross_tab requires two distinct variables")
    cj, cj2 = t.category_counts[j], t.category_counts[j2]
    counts = np.zeros((cj, cj2), dtype=np.int64)
    np.add.at(counts, (t.values[:, j] - 1, t.values[:, j2] - 1), 1)
    return counts


def drop_empty_categories(t: CategoricalTable):
    """Remove categories with zero observations, re-coding the survivors.

    Returns ``(table, kept)`` where ``kept`` is a boolean mask over the
    original C = sum C_j category columns.  Emits a warning when anything
    is dropped.  Margins must be strictly positive before the usual
    D_p^{-1/2} weighting can be formed, so every analysis entry point
    funnels through this.
    """
    kept_mask = []
    new_cols = []
    new_counts = []
    new_labels = [] if t.category_labels is not None else None
    dropped = []
    for j in range(t.m):
        cj = t.category_counts[j]
        observed = np.zeros(cj, dtype=bool)
        observed[np.unique(t.values[:, j]) - 1] = True
        kept_mask.append(observed)
        if observed.all():
            new_cols.append(t.values[:, j])
            new_counts.append(cj)
            if new_labels is not None:
                new_labels.append(t.category_labels[j])
            continue
        remap = np.cumsum(observed)  # old code -> new code for kept levels
        new_cols.append(remap[t.values[:, j] - 1])
        new_counts.append(int(observed.sum()))
        if new_labels is not None:
            new_labels.append(
                tuple(lab for lab, keep in zip(t.category_labels[j], observed) if keep)
            )
        dropped.extend((j, int(c) + 1) for c in np.nonzero(~observed)[0])
    if dropped:
        warnings.warn(
            f"dropping empty categories (variable, category): {dropped}",
            UserWarning,
            stacklevel=2,
        )
    if any(c < 2 for c in new_counts):
        bad = [j for j, c in enumerate(new_counts) if c < 2]
        raise ValueError(f"column with a single level after dropping: variables {bad}")
    table = CategoricalTable(
        values=np.column_stack(new_cols),
        category_counts=tuple(new_counts),
        variable_names=t.variable_names,
        category_labels=tuple(new_labels) if new_labels is not None else None,
    )
    return table, np.concatenate(kept_mask)


def table_schema(t: CategoricalTable) -> dict:
    """JSON-ready schema: variable names, level labels, and category counts."""
    names = t.variable_names or tuple(f"v{j + 1}" for j in range(t.m))
    schema = {"n": t.n, "m": t.m, "variables": []}
    for j in range(t.m):
        entry = {"name": names[j], "categories": t.category_counts[j]}
        if t.category_labels is not None:
            entry["labels"] = list(t.category_labels[j])
        schema["variables"].append(entry)
    return schema


def save_table_schema(t: CategoricalTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(table_schema(t), fh, indent=2, sort_keys=True)
        fh.write("\n")
