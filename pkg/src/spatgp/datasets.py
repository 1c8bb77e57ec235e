"""Dataset container and the CSV file formats used by the CLI and experiments.

Dataset CSV layout: header ``x1,...,xd,cov_1,...,cov_p,y``: coordinates first, then
any regressors beyond the automatic intercept, outcome last. UTF-8, LF line endings,
floats written with full round-trip precision (``repr``). Point CSVs (knots, targets)
carry only the coordinate columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covariance import as_points


@dataclass
class Dataset:
    """Observed spatial regression data: locations (n, d), regressors X (n, p), y (n,).

    X always includes the leading intercept column of ones; the CSV format stores only
    the columns beyond it.
    """

    locations: np.ndarray
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.locations = as_points(self.locations)
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        n = self.locations.shape[0]
        if self.X.shape[0] != n or self.y.shape[0] != n:
            raise ValueError(
                f"row mismatch: {n} locations, X {self.X.shape}, y {self.y.shape}"
            )
        if self.X.shape[1] > n:
            raise ValueError("need p <= n regressors")
        if np.linalg.matrix_rank(self.X) < self.X.shape[1]:
            raise ValueError("X does not have full column rank")

    @property
    def n(self) -> int:
        return self.locations.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.locations[idx], self.X[idx], self.y[idx])


def _fmt(value: float) -> str:
    return repr(float(value))


def dataset_header(d: int, p_extra: int) -> list[str]:
    cols = [f"x{i + 1}" for i in range(d)]
    cols += [f"cov_{j + 1}" for j in range(p_extra)]
    return cols + ["y"]


def write_dataset_csv(path, data: Dataset) -> None:
    if not np.allclose(data.X[:, 0], 1.0):
        raise ValueError("dataset CSV format expects a leading intercept column in X")
    d = data.locations.shape[1]
    extra = data.X[:, 1:]
    lines = [",".join(dataset_header(d, extra.shape[1]))]
    for i in range(data.n):
        row = [_fmt(v) for v in data.locations[i]]
        row += [_fmt(v) for v in extra[i]]
        row.append(_fmt(data.y[i]))
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_dataset_csv(path) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    d = sum(1 for c in header if c.startswith("x"))
    p_extra = sum(1 for c in header if c.startswith("cov_"))
    if header != dataset_header(d, p_extra):
        raise ValueError(f"unexpected dataset header {header!r}")
    vals = np.array([[float(v) for v in row] for row in rows])
    locations = vals[:, :d]
    X = np.hstack([np.ones((vals.shape[0], 1)), vals[:, d : d + p_extra]])
    return Dataset(locations, X, vals[:, -1])


def write_points_csv(path, points) -> None:
    pts = as_points(points)
    lines = [",".join(f"x{i + 1}" for i in range(pts.shape[1]))]
    lines += [",".join(_fmt(v) for v in row) for row in pts]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_points_csv(path) -> np.ndarray:
    """Read a coordinate CSV; regressor columns (cov_*) are accepted and returned too.

    Returns (points, X_extra) where X_extra is None when the file holds only
    coordinates.
    """
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    d = sum(1 for c in header if c.startswith("x"))
    p_extra = sum(1 for c in header if c.startswith("cov_"))
    if d < 1 or len(header) < d + p_extra:
        raise ValueError(f"unexpected point-file header {header!r}")
    vals = np.array([[float(v) for v in row[: d + p_extra]] for row in rows])
    pts = vals[:, :d]
    extra = vals[:, d : d + p_extra] if p_extra else None
    return pts, extra
