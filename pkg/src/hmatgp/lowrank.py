"""Randomized SVD with interpolative decomposition for off-diagonal blocks,
column-subsampled range finding, SVD sensitivity, and Nystrom baselines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .kernels import KernelSpec, NodeSet, eval_block, eval_block_derivative


class RankDeficiencyError(np.linalg.LinAlgError):
    pass


class DegenerateSingularValuesError(np.linalg.LinAlgError):
    pass


@dataclass
class LowRankFactor:
    """SVD-form triple: block ~= left @ diag(sing) @ right.T with orthonormal
    left/right and nonnegative descending sing."""

    left: np.ndarray
    sing: np.ndarray
    right: np.ndarray

    @property
    def rank(self) -> int:
        return self.sing.size

    def clamped_sing(self) -> np.ndarray:
        # tiny trailing singular values are floored at eps * sigma_1 * k
        # before inversion; an all-zero middle still inverts to a huge
        # (harmless) diagonal because the coupling factors are zero too
        s1 = self.sing[0] if self.rank and self.sing[0] > 0 else np.finfo(float).tiny
        floor = np.finfo(float).eps * s1 * max(self.rank, 1)
        return np.maximum(self.sing, floor)

    def middle_inv(self) -> np.ndarray:
        return np.diag(1.0 / self.clamped_sing())

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.sing) @ self.right.T


@dataclass
class GenericFactor:
    """Non-orthonormal triple (Nystrom baselines): block ~= left @ middle @ right.T."""

    left: np.ndarray
    middle: np.ndarray
    right: np.ndarray

    @property
    def rank(self) -> int:
        return self.middle.shape[0]

    def middle_inv(self) -> np.ndarray:
        return np.linalg.inv(self.middle)

    def reconstruct(self) -> np.ndarray:
        return self.left @ self.middle @ self.right.T


def block_rng(seed: int, level: int, ordinal: int) -> np.random.Generator:
    """Deterministic per-block stream keyed by (seed, level, ordinal).

    Children of a block at ordinal j use ordinals 2j and 2j+1 one level
    down, so the stream is independent of traversal order.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(level, ordinal)))


def subsample_count(m: int, k: int, n_max: int) -> int:
    """Number of subsampled columns: n_max/m clamped into [2k, 10k]."""
    if m < 1 or k < 1 or n_max < 1:
        raise ValueError("m, k, n_max must be positive")
    return int(min(max(2 * k, n_max // m), 10 * k))


def range_finder(nodes: NodeSet, i1, i2, spec: KernelSpec, k: int, rng: np.random.Generator,
                 n_max: int = 5_000_000) -> np.ndarray:
    """Orthonormal Q (n1 x k) from a column-subsampled Gaussian sketch."""
    i1 = np.asarray(i1, dtype=int)
    i2 = np.asarray(i2, dtype=int)
    if k > min(i1.size, i2.size):
        raise ValueError("k exceeds block dimensions")
    cols = _sample_columns(i2, i1.size, k, n_max, rng)
    a_sub = eval_block(nodes, i1, cols, spec)
    omega = rng.standard_normal((cols.size, k))
    y = a_sub @ omega
    if not np.any(y):
        raise RankDeficiencyError("sketch matrix is identically zero")
    q, _ = np.linalg.qr(y)
    return q


def _sample_columns(i2, m, k, n_max, rng):
    n_inn = subsample_count(m, k, n_max)
    if n_inn >= i2.size:
        return i2
    return rng.choice(i2, size=n_inn, replace=False)


def interpolative_decomposition(q: np.ndarray):
    """Row ID of Q: returns (X, I_ID) with X[I_ID, :] = I_k and Q ~= X Q[I_ID, :].

    Built from a pivoted QR of Q.T; fails if the leading triangular factor is
    singular beyond tolerance.
    """
    m, k = q.shape
    _, r, piv = sla.qr(q.T, mode="economic", pivoting=True)
    r1 = r[:, :k]
    dr = np.abs(np.diag(r1))
    if dr.min() <= max(m, k) * np.finfo(float).eps * max(dr.max(), 1.0):
        raise RankDeficiencyError("Q is rank deficient; ID is not well posed")
    t = sla.solve_triangular(r1, r[:, k:])
    it = np.hstack([np.eye(k), t])  # k x m, in pivoted column order
    x = np.empty((m, k))
    x[piv, :] = it.T
    return x, piv[:k].copy()


def _dense_truncated_svd(a: np.ndarray, k: int) -> LowRankFactor:
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    return LowRankFactor(u[:, :k].copy(), s[:k].copy(), vt[:k].T.copy())


def rsvd_id(nodes: NodeSet, i1, i2, spec: KernelSpec, k: int, rng: np.random.Generator,
            n_max: int = 5_000_000, dense_budget: int = 1_500_000) -> LowRankFactor:
    """Rank-k SVD triple of the off-diagonal block K[i1, i2].

    Blocks with at most dense_budget entries are factorized with a
    deterministic dense SVD truncated to k; larger blocks go through the
    subsampled range finder + ID route.
    """
    i1 = np.asarray(i1, dtype=int)
    i2 = np.asarray(i2, dtype=int)
    k_eff = min(k, i1.size, i2.size)
    if i1.size * i2.size <= dense_budget:
        return _dense_truncated_svd(eval_block(nodes, i1, i2, spec), k_eff)
    q = range_finder(nodes, i1, i2, spec, k_eff, rng, n_max)
    x, i_id = interpolative_decomposition(q)
    skel = eval_block(nodes, i1[i_id], i2, spec)
    return _assemble_from_id(x, skel)


def _assemble_from_id(x, skel_rows) -> LowRankFactor:
    """Turn the ID coefficients X and row skeleton B into an SVD triple:
    X B = X (W R)^T = (X R^T) W^T, then SVD the small left part."""
    w, r = np.linalg.qr(skel_rows.T)
    gl, gm, gtr = np.linalg.svd(x @ r.T, full_matrices=False)
    return LowRankFactor(gl, gm, w @ gtr.T)


def rsvd_id_d(nodes: NodeSet, i1, i2, spec: KernelSpec, k: int, rng: np.random.Generator,
              n_max: int = 5_000_000, dense_budget: int = 1_500_000):
    """Factorize the block and each hyperparameter derivative block, sharing
    the same subsampled columns and the same Gaussian sketch matrix.

    Returns (value, deriv_values) with deriv_values one LowRankFactor per
    lengthscale.
    """
    i1 = np.asarray(i1, dtype=int)
    i2 = np.asarray(i2, dtype=int)
    k_eff = min(k, i1.size, i2.size)
    if i1.size * i2.size <= dense_budget:
        value = _dense_truncated_svd(eval_block(nodes, i1, i2, spec), k_eff)
        derivs = [_dense_truncated_svd(da, k_eff)
                  for da in eval_block_derivative(nodes, i1, i2, spec)]
        return value, derivs
    cols = _sample_columns(i2, i1.size, k_eff, n_max, rng)
    omega = rng.standard_normal((cols.size, k_eff))
    a_sub = eval_block(nodes, i1, cols, spec)
    da_subs = eval_block_derivative(nodes, i1, cols, spec)

    def run(sketch_src, full_rows):
        y = sketch_src @ omega
        if not np.any(y):
            raise RankDeficiencyError("sketch matrix is identically zero")
        q, _ = np.linalg.qr(y)
        x, i_id = interpolative_decomposition(q)
        return _assemble_from_id(x, full_rows(i_id))

    value = run(a_sub, lambda ids: eval_block(nodes, i1[ids], i2, spec))
    derivs = []
    for h, da_sub in enumerate(da_subs):
        if not np.any(da_sub):
            # flat derivative block: exact zero factorization
            derivs.append(LowRankFactor(np.zeros((i1.size, k_eff)), np.zeros(k_eff),
                                        np.zeros((i2.size, k_eff))))
            continue
        derivs.append(run(da_sub, lambda ids, h=h: eval_block_derivative(nodes, i1[ids], i2, spec)[h]))
    return value, derivs


def svd_derivative(factor: LowRankFactor, dfactor, gap_rtol: float = 1e-10):
    """Sensitivity (dU, dS, dV) of the SVD triple given the derivative block
    in factored form (a LowRankFactor or GenericFactor of dA).

    All products are formed factor by factor; the full dA block is never
    materialized.  Raises on near-degenerate singular-value gaps.
    """
    u, s, v = factor.left, factor.sing, factor.right
    k = s.size
    s1 = max(s[0], np.finfo(float).tiny) if k else 0.0
    negligible = s < np.finfo(float).eps * s1 * max(k, 1)
    if k > 1:
        gaps = np.abs(np.subtract.outer(s, s)) + np.eye(k) * s1
        scale = np.add.outer(s, s) + np.finfo(float).tiny
        close = gaps < gap_rtol * scale
        # roundoff-level pairs carry no usable direction information and are
        # dropped below; only a collision between meaningful values is fatal
        meaningful = ~(negligible[:, None] | negligible[None, :])
        if np.any(close & meaningful):
            raise DegenerateSingularValuesError("singular values nearly degenerate")
    ld, rd = dfactor.left, dfactor.right
    if isinstance(dfactor, LowRankFactor):
        md = np.diag(dfactor.sing)
    else:
        md = dfactor.middle
    # P = U^T dA V,  dA V = Ld Md (Rd^T V),  dA^T U = Rd Md^T (Ld^T U)
    dav = ld @ (md @ (rd.T @ v))
    datu = rd @ (md.T @ (ld.T @ u))
    p = u.T @ dav
    s2 = s**2
    denom = np.subtract.outer(s2, s2).T  # [i,j] = s_j^2 - s_i^2
    f = np.zeros((k, k))
    use = ~np.eye(k, dtype=bool) & ~(negligible[:, None] & negligible[None, :])
    f[use] = 1.0 / denom[use]
    # the out-of-subspace term is meaningless for roundoff-level directions
    sinv = np.where(negligible, 0.0, 1.0 / factor.clamped_sing())
    ds = np.diag(p).copy()
    du = u @ (f * (p * s[None, :] + s[:, None] * p.T)) + (dav - u @ p) * sinv[None, :]
    pv = v.T @ datu  # = V^T dA^T U
    dv = v @ (f * (s[:, None] * p + p.T * s[None, :])) + (datu - v @ pv) * sinv[None, :]
    return du, ds, dv


def nystrom_baseline(nodes: NodeSet, i1, i2, spec: KernelSpec, k: int, mode: str,
                     rng: np.random.Generator, n_max: int = 5_000_000) -> GenericFactor:
    """Nystrom factorization K(xl, xm) K(xm, xm)^-1 K(xm, xr) of the block.

    mode 'rand' draws xm uniformly in the node bounding box; mode 'qr' takes
    xm as the k pivot rows of a pivoted QR on the range finder's Q^T.
    """
    i1 = np.asarray(i1, dtype=int)
    i2 = np.asarray(i2, dtype=int)
    k_eff = min(k, i1.size, i2.size)
    if mode == "rand":
        lo = nodes.coords.min(axis=1)
        hi = nodes.coords.max(axis=1)
        xm = lo[:, None] + (hi - lo)[:, None] * rng.random((nodes.dim, k_eff))
    elif mode == "qr":
        q = range_finder(nodes, i1, i2, spec, k_eff, rng, n_max)
        _, _, piv = sla.qr(q.T, mode="economic", pivoting=True)
        xm = nodes.coords[:, i1[piv[:k_eff]]]
    else:
        raise ValueError("mode must be 'rand' or 'qr'")
    combined = NodeSet(np.hstack([nodes.coords, xm]))
    im = np.arange(nodes.n, nodes.n + k_eff)
    kl = eval_block(combined, i1, im, spec)
    kr = eval_block(combined, i2, im, spec)
    kmm = eval_block(combined, im, im, spec) + 1e-10 * np.eye(k_eff)
    return GenericFactor(kl, np.linalg.inv(kmm), kr)
