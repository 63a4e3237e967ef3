"""Matrix-free hierarchical linear solves.

The kernel system (K + sigma2 I) x = y is solved by recursing on a dyadic
index tree: diagonal blocks are solved at the leaves with dense Cholesky,
off-diagonal blocks are replaced by rank-k triples and folded in with the
Sherman-Morrison-Woodbury identity.  Right-hand sides are concatenated with
the low-rank left factors so each tree node is visited exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla

from .kernels import KernelSpec, NodeSet, eval_block, eval_dense
from .lowrank import block_rng, nystrom_baseline, rsvd_id
from .partition import TreeNode, build_tree

FACTORIZATIONS = ("rsvd_id", "nystrom_rand", "nystrom_qr")


@dataclass(frozen=True)
class SolveConfig:
    """Knobs for the hierarchical solver.

    k: off-diagonal truncation rank.
    eta: leaf cutoff (index sets of size <= eta are solved densely).
    n_max: budget controlling how many columns the range finder samples.
    sigma2: noise variance added to the kernel diagonal.
    seed: base seed; every off-diagonal block derives its own stream.
    dense_budget: off-diagonal blocks with at most this many entries are
        factorized by a deterministic truncated dense SVD.
    factorization: low-rank scheme for off-diagonal blocks.
    permute: None permutes exactly when there is a single right-hand side;
        True/False force the choice.
    """

    k: int = 20
    eta: int = 100
    n_max: int = 5_000_000
    sigma2: float = 0.0
    seed: int = 0
    dense_budget: int = 1_500_000
    factorization: str = "rsvd_id"
    permute: bool | None = None

    def __post_init__(self):
        if self.k < 1 or self.eta < 1 or self.n_max < 1:
            raise ValueError("k, eta, n_max must be positive")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")
        if self.factorization not in FACTORIZATIONS:
            raise ValueError(f"factorization must be one of {FACTORIZATIONS}")

    def with_(self, **kw) -> "SolveConfig":
        return replace(self, **kw)


def dense_solve(nodes: NodeSet, y: np.ndarray, spec: KernelSpec, sigma2: float = 0.0,
                cap: int = 8000) -> np.ndarray:
    """Reference solve with the fully assembled kernel matrix (Cholesky)."""
    if nodes.n > cap:
        raise ValueError(f"dense solve capped at n={cap}")
    a = eval_dense(nodes, spec)
    a[np.diag_indices_from(a)] += sigma2
    return sla.cho_solve(sla.cho_factor(a, lower=True), np.asarray(y, dtype=float))


def leaf_solve(a: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Dense SPD solve with an LU fallback for indefinite perturbations."""
    try:
        return sla.cho_solve(sla.cho_factor(a, lower=True), y)
    except np.linalg.LinAlgError:
        return sla.lu_solve(sla.lu_factor(a), y)


def factorize_offdiag(nodes: NodeSet, i1, i2, spec: KernelSpec, config: SolveConfig,
                      rng: np.random.Generator):
    if config.factorization == "rsvd_id":
        return rsvd_id(nodes, i1, i2, spec, config.k, rng, config.n_max, config.dense_budget)
    mode = "rand" if config.factorization == "nystrom_rand" else "qr"
    return nystrom_baseline(nodes, i1, i2, spec, config.k, mode, rng, config.n_max)


def smw_combine(x_d1, x_d2, q_l1, q_l2, gl, gr, minv):
    """Fold the off-diagonal rank-k coupling into the block-diagonal solves.

    Solves the 2k x 2k capacitance system
        [[M^-1, Gr^T q_l2], [Gl^T q_l1, M^-T]] [s1; s2] = [Gr^T x_d2; Gl^T x_d1]
    and returns (x, s1, s2, lu) with x the corrected solution.
    """
    k = gl.shape[1]
    c = np.block([[minv, gr.T @ q_l2], [gl.T @ q_l1, minv.T]])
    lu = sla.lu_factor(c)
    rhs = np.vstack([gr.T @ x_d2, gl.T @ x_d1])
    s = sla.lu_solve(lu, rhs)
    s1, s2 = s[:k], s[k:]
    x = np.vstack([x_d1 - q_l1 @ s1, x_d2 - q_l2 @ s2])
    return x, s1, s2, lu


def _solve_rec(nodes, spec, config, node: TreeNode, y: np.ndarray, level: int, ordinal: int):
    idx = node.index_list
    if node.is_leaf:
        a = eval_block(nodes, idx, idx, spec)
        a[np.diag_indices_from(a)] += config.sigma2
        return leaf_solve(a, y)
    c1, c2 = node.children
    n1 = c1.size
    rng = block_rng(config.seed, level, ordinal)
    fac = factorize_offdiag(nodes, c1.index_list, c2.index_list, spec, config, rng)
    gl, gr = fac.left, fac.right
    z1 = _solve_rec(nodes, spec, config, c1, np.hstack([y[:n1], gl]), level + 1, 2 * ordinal)
    z2 = _solve_rec(nodes, spec, config, c2, np.hstack([y[n1:], gr]), level + 1, 2 * ordinal + 1)
    q = y.shape[1]
    x, _, _, _ = smw_combine(z1[:, :q], z2[:, :q], z1[:, q:], z2[:, q:],
                             gl, gr, fac.middle_inv())
    return x


def back_solve(nodes: NodeSet, y: np.ndarray, spec: KernelSpec, config: SolveConfig,
               tree: TreeNode | None = None) -> np.ndarray:
    """Approximate (K + sigma2 I)^-1 y via the hierarchical SMW recursion.

    y may be a vector or an n x q matrix of stacked right-hand sides.  The
    kernel-sorted permutation is computed internally and undone on output;
    pass a prebuilt tree to amortize it across repeated solves.
    """
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    yy = y.reshape(nodes.n, -1)
    if tree is None:
        do_perm = config.permute if config.permute is not None else single
        tree = build_tree(nodes, nodes.n, config.eta, spec, sort=do_perm)
    perm = tree.index_list
    xp = _solve_rec(nodes, spec, config, tree, yy[perm], 0, 0)
    out = np.empty_like(xp)
    out[perm] = xp
    return out[:, 0] if single else out
