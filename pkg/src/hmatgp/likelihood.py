"""Quadratic-form and log-determinant evaluation with analytic lengthscale
gradients, sharing the hierarchical SMW recursion with the solver.

For A = K + sigma2 I the recursion returns, in one pass,
    Pi  = y^T A^-1 y,        Lam = log det A,
their derivatives with respect to every lengthscale, and the products
(dA) A^-1 Y needed to propagate those derivatives upward.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .hsolve import SolveConfig, leaf_solve
from .kernels import KernelSpec, NodeSet, eval_block, eval_block_derivative
from .lowrank import (DegenerateSingularValuesError, LowRankFactor, block_rng,
                      rsvd_id, rsvd_id_d, svd_derivative)
from .partition import TreeNode, build_tree


@dataclass
class LikelihoodResult:
    solution: np.ndarray
    energy: float            # y^T A^-1 y
    logdet: float            # log det A
    d_energy: np.ndarray     # per lengthscale
    d_logdet: np.ndarray
    det_sign: int            # +1 if every capacitance determinant was positive
    nll: float
    d_nll: np.ndarray


def _align_signs(base: LowRankFactor, other: LowRankFactor) -> LowRankFactor:
    # SVD factors are unique up to per-column sign; align to the base triple
    flips = np.sign(np.sum(base.left * other.left, axis=0))
    flips[flips == 0] = 1.0
    return LowRankFactor(other.left * flips, other.sing, other.right * flips)


def _fd_factor_derivative(nodes, i1, i2, spec, h, value, config, level, ordinal):
    """Central finite differences of the factor triple when the analytic SVD
    sensitivity is ill conditioned (near-degenerate singular values)."""
    ls = spec.hyper.lengthscales
    delta = 1e-6 * ls[h]
    out = []
    for sgn in (+1.0, -1.0):
        pls = ls.copy()
        pls[h] += sgn * delta
        rng = block_rng(config.seed, level, ordinal)
        f = rsvd_id(nodes, i1, i2, spec.with_lengthscales(pls), config.k, rng,
                    config.n_max, config.dense_budget)
        out.append(_align_signs(value, f))
    fp, fm = out
    inv2d = 1.0 / (2.0 * delta)
    return ((fp.left - fm.left) * inv2d, (fp.sing - fm.sing) * inv2d,
            (fp.right - fm.right) * inv2d)


def _leaf(nodes, spec, config, idx, y):
    a = eval_block(nodes, idx, idx, spec)
    a[np.diag_indices_from(a)] += config.sigma2
    try:
        c, low = sla.cho_factor(a, lower=True)
        x = sla.cho_solve((c, low), y)
        lam = 2.0 * np.sum(np.log(np.diag(c)))
        sign = 1
        solve = lambda b: sla.cho_solve((c, low), b)
    except np.linalg.LinAlgError:
        lu = sla.lu_factor(a)
        x = sla.lu_solve(lu, y)
        sgn, lam = np.linalg.slogdet(a)
        sign = int(np.sign(sgn)) or 1
        solve = lambda b: sla.lu_solve(lu, b)
    pi = float(y[:, 0] @ x[:, 0])
    das = eval_block_derivative(nodes, idx, idx, spec)
    nh = len(das)
    dpi = np.empty(nh)
    dlam = np.empty(nh)
    adx = []
    for h, da in enumerate(das):
        dpi[h] = -float(x[:, 0] @ da @ x[:, 0])
        dlam[h] = float(np.trace(solve(da)))
        adx.append(da @ x)
    return x, pi, lam, dpi, dlam, adx, sign


def _lu_logdet_sign(lu, piv):
    d = np.diag(lu)
    logdet = float(np.sum(np.log(np.abs(d))))
    sign = int(np.prod(np.sign(d)))
    # each row swap flips the permutation sign
    sign *= -1 if (piv != np.arange(piv.size)).sum() % 2 else 1
    return logdet, sign


def _rec(nodes, spec, config, node: TreeNode, y, level, ordinal):
    if node.is_leaf:
        return _leaf(nodes, spec, config, node.index_list, y)
    c1, c2 = node.children
    i1, i2 = c1.index_list, c2.index_list
    n1 = i1.size
    rng = block_rng(config.seed, level, ordinal)
    value, derivs = rsvd_id_d(nodes, i1, i2, spec, config.k, rng,
                              config.n_max, config.dense_budget)
    gl, gr = value.left, value.right
    k = value.rank
    q = y.shape[1]

    x1, pi1, lam1, dpi1, dlam1, adx1, sg1 = _rec(
        nodes, spec, config, c1, np.hstack([y[:n1], gl]), level + 1, 2 * ordinal)
    x2, pi2, lam2, dpi2, dlam2, adx2, sg2 = _rec(
        nodes, spec, config, c2, np.hstack([y[n1:], gr]), level + 1, 2 * ordinal + 1)
    x_d1, q_l1 = x1[:, :q], x1[:, q:]
    x_d2, q_l2 = x2[:, :q], x2[:, q:]

    gmc = value.clamped_sing()
    minv = np.diag(1.0 / gmc)
    q_lr1 = gl.T @ q_l1
    q_lr2 = gr.T @ q_l2
    c_smw = np.block([[minv, q_lr2], [q_lr1, minv]])
    lu, piv = sla.lu_factor(c_smw)
    s = sla.lu_solve((lu, piv), np.vstack([gr.T @ x_d2, gl.T @ x_d1]))
    s1, s2 = s[:k], s[k:]
    x = np.vstack([x_d1 - q_l1 @ s1, x_d2 - q_l2 @ s2])

    y01, y02 = y[:n1, 0], y[n1:, 0]
    t21 = np.concatenate([y01 @ q_l1, y02 @ q_l2])            # 1 x 2k
    t23 = np.concatenate([q_l2.T @ y02, q_l1.T @ y01])        # 2k x 1
    t22 = sla.lu_solve((lu, piv), np.eye(2 * k))
    pi = pi1 + pi2 - float(t21 @ t22 @ t23)
    logdet_c, sgc = _lu_logdet_sign(lu, piv)
    lam = lam1 + lam2 + 2.0 * float(np.sum(np.log(gmc))) + logdet_c
    sign = sg1 * sg2 * sgc

    nh = spec.n_hyper
    dpi = np.empty(nh)
    dlam = np.empty(nh)
    adx = []
    t22t23 = t22 @ t23
    t21t22 = t21 @ t22
    for h in range(nh):
        df = derivs[h]
        ld, md_diag, rd = df.left, df.sing, df.right
        try:
            dgl, dsig, dgr = svd_derivative(value, df)
        except DegenerateSingularValuesError:
            warnings.warn("near-degenerate singular values; factor derivative "
                          "taken by finite differences", RuntimeWarning)
            dgl, dsig, dgr = _fd_factor_derivative(nodes, i1, i2, spec, h, value,
                                                   config, level, ordinal)
        ad1, adql1 = adx1[h][:, :q], adx1[h][:, q:]
        ad2, adql2 = adx2[h][:, :q], adx2[h][:, q:]

        dq_lr1 = dgl.T @ q_l1 + q_l1.T @ dgl - q_l1.T @ adql1
        dq_lr2 = dgr.T @ q_l2 + q_l2.T @ dgr - q_l2.T @ adql2
        dminv = np.diag(-dsig / gmc**2)
        dc = np.block([[dminv, dq_lr2], [dq_lr1, dminv]])
        dt22 = -t22 @ dc @ t22

        dt21 = np.concatenate([x_d1[:, 0] @ dgl - ad1[:, 0] @ q_l1,
                               x_d2[:, 0] @ dgr - ad2[:, 0] @ q_l2])
        dt23 = np.concatenate([x_d2[:, 0] @ dgr - ad2[:, 0] @ q_l2,
                               x_d1[:, 0] @ dgl - ad1[:, 0] @ q_l1])
        dpi[h] = dpi1[h] + dpi2[h] - (float(dt21 @ t22t23)
                                      + float(t21 @ dt22 @ t23)
                                      + float(t21t22 @ dt23))
        dlam[h] = dlam1[h] + dlam2[h] + 2.0 * float(np.sum(dsig / gmc)) \
            + float(np.trace(t22 @ dc))

        # (dA) x for the whole block, with dA12 in its own rank-k triple
        ldm = ld * md_diag
        row1 = ad1 - adql1 @ s1 + ldm @ (rd.T @ x_d2) - ldm @ (rd.T @ q_l2) @ s2
        rdm = rd * md_diag
        row2 = ad2 - adql2 @ s2 + rdm @ (ld.T @ x_d1) - rdm @ (ld.T @ q_l1) @ s1
        adx.append(np.vstack([row1, row2]))
    return x, pi, lam, dpi, dlam, adx, sign


def lkl_eval(nodes: NodeSet, y: np.ndarray, spec: KernelSpec, config: SolveConfig,
             tree: TreeNode | None = None) -> LikelihoodResult:
    """Evaluate y^T A^-1 y, log det A, and their lengthscale gradients."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != nodes.n:
        raise ValueError("y length must match the number of nodes")
    if tree is None:
        tree = build_tree(nodes, nodes.n, config.eta, spec)
    perm = tree.index_list
    x, pi, lam, dpi, dlam, _, sign = _rec(nodes, spec, config, tree,
                                          y[perm][:, None], 0, 0)
    if sign <= 0:
        warnings.warn("capacitance determinant changed sign; the low-rank "
                      "approximation is not positive definite here", RuntimeWarning)
    sol = np.empty(nodes.n)
    sol[perm] = x[:, 0]
    n = nodes.n
    nll = 0.5 * pi + 0.5 * lam + 0.5 * n * np.log(2.0 * np.pi)
    return LikelihoodResult(sol, pi, lam, dpi, dlam, sign, nll, 0.5 * (dpi + dlam))


def neg_log_likelihood(nodes: NodeSet, y: np.ndarray, spec: KernelSpec,
                       config: SolveConfig, tree: TreeNode | None = None):
    """Gaussian negative log likelihood and its lengthscale gradient."""
    res = lkl_eval(nodes, y, spec, config, tree)
    return res.nll, res.d_nll
