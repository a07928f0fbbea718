"""Coordinate, biplot, and report export in diff-stable formats.

All floats are written with 17 significant digits so every numeric output
round-trips exactly and reruns are byte-identical.
"""

from __future__ import annotations

import json
from xml.sax.saxutils import escape

import numpy as np

__all__ = [
    "fmt",
    "write_coordinates_csv",
    "biplot_payload",
    "write_biplot_json",
    "write_biplot_svg",
    "write_matrix_csv",
]


def fmt(x) -> str:
    """Round-trip-exact decimal rendering of a double."""
    return "%.17g" % float(x)


def write_coordinates_csv(path, ids, types, coords) -> None:
    """One row per point: id, dim1..dimK, type."""
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    k = coords.shape[1]
    header = ["id"] + [f"dim{i + 1}" for i in range(k)] + ["type"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for pid, ptype, row in zip(ids, types, coords):
            fh.write(",".join([str(pid)] + [fmt(v) for v in row] + [str(ptype)]) + "\n")


def write_matrix_csv(path, matrix, row_ids=None, col_ids=None) -> None:
    """Numeric matrix with optional header row and row-label column."""
    matrix = np.asarray(matrix, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        if col_ids is not None:
            prefix = ["id"] if row_ids is not None else []
            fh.write(",".join(prefix + [str(c) for c in col_ids]) + "\n")
        for i, row in enumerate(matrix):
            prefix = [str(row_ids[i])] if row_ids is not None else []
            fh.write(",".join(prefix + [fmt(v) for v in row]) + "\n")


def biplot_payload(ids, types, coords, dims=(0, 1)) -> dict:
    """JSON-ready biplot data: one point per row/category with 2-D coords."""
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    points = []
    for pid, ptype, row in zip(ids, types, coords):
        x = float(row[dims[0]])
        y = float(row[dims[1]]) if coords.shape[1] > dims[1] else 0.0
        points.append({"id": str(pid), "type": str(ptype), "x": x, "y": y})
    return {"dims": [d + 1 for d in dims], "points": points}


def write_biplot_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


_MARKERS = {
    "row": ("circle", "#1f6fb4"),
    "individual": ("circle", "#1f6fb4"),
    "col": ("square", "#c23b22"),
    "category": ("square", "#c23b22"),
}


def write_biplot_svg(path, payload: dict, width: int = 640, height: int = 480, title: str = "") -> None:
    """Scatter biplot as standalone SVG.

    Each point becomes one marker element carrying ``data-x``/``data-y``
    attributes with the untransformed coordinates, so plots are exactly
    parseable back against the CSV export.
    """
    points = payload["points"]
    xs = np.array([p["x"] for p in points]) if points else np.zeros(1)
    ys = np.array([p["y"] for p in points]) if points else np.zeros(1)
    pad = 0.05
    span_x = max(xs.max() - xs.min(), 1e-9)
    span_y = max(ys.max() - ys.min(), 1e-9)
    x0, x1 = xs.min() - pad * span_x, xs.max() + pad * span_x
    y0, y1 = ys.min() - pad * span_y, ys.max() + pad * span_y
    margin = 40

    def sx(x):
        return margin + (x - x0) / (x1 - x0) * (width - 2 * margin)

    def sy(y):
        return height - margin - (y - y0) / (y1 - y0) * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">'
            f"{escape(title)}</text>"
        )
    # zero axes when inside the viewport
    if x0 < 0 < x1:
        parts.append(
            f'<line x1="{fmt(sx(0))}" y1="{margin}" x2="{fmt(sx(0))}" '
            f'y2="{height - margin}" stroke="#cccccc"/>'
        )
    if y0 < 0 < y1:
        parts.append(
            f'<line x1="{margin}" y1="{fmt(sy(0))}" x2="{width - margin}" '
            f'y2="{fmt(sy(0))}" stroke="#cccccc"/>'
        )
    for p in points:
        shape, color = _MARKERS.get(p["type"], ("circle", "#555555"))
        cx, cy = sx(p["x"]), sy(p["y"])
        common = (
            f'class="point {escape(p["type"])}" data-id="{escape(p["id"])}" '
            f'data-x="{fmt(p["x"])}" data-y="{fmt(p["y"])}" fill="{color}" fill-opacity="0.8"'
        )
        if shape == "circle":
            parts.append(f'<circle {common} cx="{fmt(cx)}" cy="{fmt(cy)}" r="3"/>')
        else:
            parts.append(
                f'<rect {common} x="{fmt(cx - 3)}" y="{fmt(cy - 3)}" width="6" height="6"/>'
            )
        parts.append(
            f'<text x="{fmt(cx + 4)}" y="{fmt(cy - 4)}" font-size="8" fill="#333333">'
            f"{escape(p['id'])}</text>"
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
