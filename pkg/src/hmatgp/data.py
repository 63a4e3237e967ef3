"""Dataset ingestion and synthetic fixtures for the command-line tools."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .kernels import NodeSet


@dataclass
class Dataset:
    features: np.ndarray          # d x n
    targets: np.ndarray           # length n
    normalization: np.ndarray     # per-column max used for scaling (d + 1 values)
    n_dropped_nan: int = 0
    n_dropped_negative: int = 0

    @property
    def nodes(self) -> NodeSet:
        return NodeSet(self.features)

    @property
    def n(self) -> int:
        return self.targets.size


def ingest_csv(path: str, feature_columns, target_column: str, clean: bool = True) -> Dataset:
    """Load a header CSV into a normalized Dataset.

    Rows with non-numeric entries are always dropped; with clean=True rows
    with negative feature or target values are dropped too.  Every retained
    column is divided by its max value, so nonnegative data lands in [0, 1].
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    cols = list(feature_columns) + [target_column]
    try:
        pos = [header.index(c) for c in cols]
    except ValueError as exc:
        raise KeyError(f"column not found in {path}: {exc}") from exc
    raw = np.full((len(rows), len(pos)), np.nan)
    for i, row in enumerate(rows):
        for j, p in enumerate(pos):
            try:
                raw[i, j] = float(row[p])
            except (ValueError, IndexError):
                pass
    finite = np.all(np.isfinite(raw), axis=1)
    n_nan = int((~finite).sum())
    raw = raw[finite]
    n_neg = 0
    if clean:
        nonneg = np.all(raw >= 0, axis=1)
        n_neg = int((~nonneg).sum())
        raw = raw[nonneg]
    if raw.shape[0] == 0:
        raise ValueError(f"no rows left after cleaning {path}")
    scale = np.abs(raw).max(axis=0)
    scale[scale == 0] = 1.0
    raw = raw / scale
    return Dataset(raw[:, :-1].T.copy(), raw[:, -1].copy(), scale, n_nan, n_neg)


def synthetic_nodes(n: int, dim: int, seed: int) -> NodeSet:
    rng = np.random.default_rng(seed)
    return NodeSet(rng.random((dim, n)))


def smooth_target(nodes: NodeSet, noise: float = 0.0, seed: int = 0) -> np.ndarray:
    """Smooth benchmark response sin(2 pi x1) * cos(2 pi x2) (+ noise)."""
    x = nodes.coords
    y = np.sin(2.0 * np.pi * x[0])
    if nodes.dim > 1:
        y = y * np.cos(2.0 * np.pi * x[1])
    if noise > 0:
        y = y + noise * np.random.default_rng(seed).standard_normal(nodes.n)
    return y


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_metrics(path, metrics: dict):
    with open(path, "w") as fh:
        for k, v in metrics.items():
            fh.write(f"{k}={v}\n")
