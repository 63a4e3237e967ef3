"""Kernel functions, hyperparameter derivatives, and lazy block evaluation.

The kernel matrix is never materialized globally: every consumer asks for a
block A[rows, cols] on demand.  All distances are computed with the metric
f(x_i, x_j) = (x_i - x_j)^T M (x_i - x_j) where M = diag(ell)^-2 (a single
lengthscale broadcasts over all dimensions).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FAMILIES = ("squared_exponential", "exponential", "ard_squared_exponential", "l1_distance")

# families using one shared lengthscale (ARD uses one per dimension)
_ISOTROPIC = ("squared_exponential", "exponential", "l1_distance")


@dataclass(frozen=True)
class NodeSet:
    """Sampling sites stored as a d x n array (d features, n points)."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.coords, dtype=float))
        if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 1:
            raise ValueError("coords must be a d x n matrix with d,n >= 1")
        if not np.all(np.isfinite(c)):
            raise ValueError("coords must be finite")
        object.__setattr__(self, "coords", c)

    @property
    def dim(self) -> int:
        return self.coords.shape[0]

    @property
    def n(self) -> int:
        return self.coords.shape[1]

    def subset(self, idx) -> "NodeSet":
        return NodeSet(self.coords[:, np.asarray(idx, dtype=int)])


@dataclass(frozen=True)
class Hyperparameters:
    """Positive lengthscales plus a fixed (non-optimized) noise variance."""

    lengthscales: np.ndarray
    noise_variance: float = 0.0

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if np.any(ls <= 0) or not np.all(np.isfinite(ls)):
            raise ValueError("lengthscales must be positive and finite")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be nonnegative")
        object.__setattr__(self, "lengthscales", ls)


@dataclass(frozen=True)
class KernelSpec:
    family: str
    hyper: Hyperparameters

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        nl = self.hyper.lengthscales.size
        if self.family in _ISOTROPIC and nl != 1:
            raise ValueError(f"{self.family} takes a single lengthscale, got {nl}")

    @property
    def n_hyper(self) -> int:
        return self.hyper.lengthscales.size

    def with_lengthscales(self, ls) -> "KernelSpec":
        return KernelSpec(self.family, Hyperparameters(ls, self.hyper.noise_variance))


def _check_indices(idx, n):
    idx = np.asarray(idx, dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError("kernel block index out of range")
    return idx


def eval_block(nodes: NodeSet, rows, cols, spec: KernelSpec) -> np.ndarray:
    """Evaluate the kernel block K[rows, cols] (no noise term added)."""
    rows = _check_indices(rows, nodes.n)
    cols = _check_indices(cols, nodes.n)
    xr = nodes.coords[:, rows]  # d x nr
    xc = nodes.coords[:, cols]  # d x nc
    ls = spec.hyper.lengthscales
    if spec.family == "squared_exponential":
        f = _sq_metric(xr, xc, ls[0] * np.ones(nodes.dim))
        return np.exp(-0.5 * f)
    if spec.family == "ard_squared_exponential":
        if ls.size != nodes.dim:
            raise ValueError("ARD kernel needs one lengthscale per dimension")
        f = _sq_metric(xr, xc, ls)
        return np.exp(-0.5 * f)
    if spec.family == "exponential":
        f = _sq_metric(xr, xc, ls[0] * np.ones(nodes.dim))
        return np.exp(-np.sqrt(np.maximum(f, 0.0)))
    # l1_distance
    d1 = np.abs(xr[:, :, None] - xc[:, None, :]).sum(axis=0)
    return np.exp(-d1 / ls[0])


def _sq_metric(xr, xc, ls):
    # (x_i - x_j)^T diag(ls)^-2 (x_i - x_j), vectorized over all pairs
    a = xr / ls[:, None]
    b = xc / ls[:, None]
    f = (a * a).sum(axis=0)[:, None] + (b * b).sum(axis=0)[None, :] - 2.0 * a.T @ b
    return np.maximum(f, 0.0)


def eval_block_derivative(nodes: NodeSet, rows, cols, spec: KernelSpec) -> list[np.ndarray]:
    """Entrywise derivative of eval_block w.r.t. each lengthscale.

    The exponential kernel's 1/(2 sqrt(f)) factor is singular at coincident
    points; the derivative is defined as 0 there (diagonal entries are
    constant 1).
    """
    rows = _check_indices(rows, nodes.n)
    cols = _check_indices(cols, nodes.n)
    xr = nodes.coords[:, rows]
    xc = nodes.coords[:, cols]
    ls = spec.hyper.lengthscales
    if spec.family == "squared_exponential":
        ell = ls[0]
        f = _sq_metric(xr, xc, ell * np.ones(nodes.dim))
        k = np.exp(-0.5 * f)
        # df/dl = -2 f / l  ->  dk/dl = k f / l
        return [k * f / ell]
    if spec.family == "ard_squared_exponential":
        f = _sq_metric(xr, xc, ls)
        k = np.exp(-0.5 * f)
        out = []
        for d in range(ls.size):
            rd2 = (xr[d][:, None] - xc[d][None, :]) ** 2
            # df/dl_d = -2 rd^2 / l_d^3
            out.append(k * rd2 / ls[d] ** 3)
        return out
    if spec.family == "exponential":
        ell = ls[0]
        f = _sq_metric(xr, xc, ell * np.ones(nodes.dim))
        sf = np.sqrt(f)
        k = np.exp(-sf)
        # dk/dl = -k/(2 sqrt(f)) df/dl = k sqrt(f) / l, with 0 at f=0
        return [k * sf / ell]
    # l1_distance: k = exp(-||r||_1 / l), dk/dl = k ||r||_1 / l^2
    ell = ls[0]
    d1 = np.abs(xr[:, :, None] - xc[:, None, :]).sum(axis=0)
    k = np.exp(-d1 / ell)
    return [k * d1 / ell**2]


def eval_dense(nodes: NodeSet, spec: KernelSpec) -> np.ndarray:
    """Full kernel matrix (verification / leaf use only)."""
    idx = np.arange(nodes.n)
    return eval_block(nodes, idx, idx, spec)
