"""Gaussian-process training and regression on top of the hierarchical solver.

Lengthscales are optimized in log space with a bounded quasi-Newton method
driven by the analytic likelihood gradient; predictions use hierarchical
solves against the training covariance, with an optional reduced mode that
compresses the cross-covariance to rank k.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .hsolve import SolveConfig, back_solve
from .kernels import KernelSpec, NodeSet, eval_block
from .likelihood import lkl_eval
from .lowrank import rsvd_id
from .partition import TreeNode, build_tree

LOG_ELL_BOUNDS = (np.log(1e-3), np.log(1e3))


@dataclass
class GPModel:
    nodes: NodeSet
    y: np.ndarray
    spec: KernelSpec
    config: SolveConfig
    y_mean: float = 0.0
    tree: TreeNode | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        if self.y.size != self.nodes.n:
            raise ValueError("y length must match the number of nodes")
        self.y_mean = float(self.y.mean())
        if self.tree is None:
            self.tree = build_tree(self.nodes, self.nodes.n, self.config.eta, self.spec)


@dataclass
class TrainReport:
    lengthscales: np.ndarray
    nll: float
    grad_inf_norm: float
    n_iterations: int
    converged: bool
    history: list = field(default_factory=list)  # (lengthscales, nll) per evaluation


def train(nodes: NodeSet, y: np.ndarray, spec0: KernelSpec, config: SolveConfig,
          maxiter: int = 50) -> tuple[GPModel, TrainReport]:
    """Fit lengthscales by minimizing the negative log likelihood.

    The optimizer works on z = log(ell) with box bounds; each objective
    evaluation rebuilds the tree for the candidate kernel and reuses the
    configured seed so the randomized factorizations stay deterministic.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    yc = y - y.mean()
    history = []
    best = {"f": np.inf, "ls": spec0.hyper.lengthscales.copy(), "g": None}

    n = nodes.n
    energy_cap = float(yc @ yc) / max(config.sigma2, 1e-300) * (1.0 + 1e-6)
    logdet_floor = n * np.log(max(config.sigma2, 1e-300)) - 1.0

    def objective(z):
        ls = np.exp(z)
        spec = spec0.with_lengthscales(ls)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                res = lkl_eval(nodes, yc, spec, config)
            f, g = res.nll, res.d_nll * ls  # chain rule through z = log(ell)
            # for SPD K + sigma2 I the energy and log-determinant obey hard
            # bounds; excursions mean the truncated rank broke definiteness
            if (res.det_sign <= 0 or res.energy < 0
                    or res.energy > energy_cap or res.logdet < logdet_floor):
                f = np.nan
        except (np.linalg.LinAlgError, ValueError):
            # overflow inside the recursion surfaces as non-finite inputs to
            # the dense factorizations; treat it like any diverged evaluation
            f, g = np.inf, np.zeros_like(z)
        if not np.isfinite(f):
            # diverged evaluation: steer back toward the last good iterate
            return 1e12, np.zeros_like(z)
        history.append((ls.copy(), f))
        if f < best["f"]:
            best.update(f=f, ls=ls.copy(), g=np.asarray(g) / ls)
        return f, np.asarray(g)

    z0 = np.log(spec0.hyper.lengthscales)
    # a start where the truncated rank cannot represent the kernel gives a
    # flat penalty; longer lengthscales lower the rank, so walk up until the
    # objective is usable
    for _ in range(12):
        if objective(z0)[0] < 1e12 or np.any(z0 >= LOG_ELL_BOUNDS[1]):
            break
        z0 = z0 + np.log(2.0)
    res = minimize(objective, z0, jac=True, method="L-BFGS-B",
                   bounds=[LOG_ELL_BOUNDS] * z0.size,
                   options={"maxiter": maxiter})
    ls_star = best["ls"] if best["f"] < np.inf else np.exp(res.x)
    spec_star = spec0.with_lengthscales(ls_star)
    grad_norm = float(np.max(np.abs(best["g"]))) if best["g"] is not None else np.nan
    model = GPModel(nodes, y, spec_star, config)
    report = TrainReport(ls_star, float(best["f"]), grad_norm,
                         int(res.nit), bool(res.success), history)
    return model, report


def _combined(model: GPModel, test_nodes: NodeSet):
    """NodeSet holding test then training coordinates, with index ranges."""
    if test_nodes.dim != model.nodes.dim:
        raise ValueError("test nodes must share the training dimension")
    coords = np.hstack([test_nodes.coords, model.nodes.coords])
    it = np.arange(test_nodes.n)
    io = np.arange(test_nodes.n, test_nodes.n + model.nodes.n)
    return NodeSet(coords), it, io


def predict(model: GPModel, test_nodes: NodeSet, mode: str = "full",
            batch: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at the test nodes.

    full mode evaluates exact cross-covariance rows in batches; reduced mode
    first compresses the test-by-train cross block to rank k.  Variances are
    floored at 0.
    """
    comb, it, io = _combined(model, test_nodes)
    cfg = model.config
    yc = model.y - model.y_mean
    alpha = back_solve(model.nodes, yc, model.spec, cfg, tree=model.tree)
    n_t = test_nodes.n
    prior_var = 1.0 + cfg.sigma2  # stationary kernels here have unit variance
    mean = np.empty(n_t)
    var = np.empty(n_t)
    if mode == "full":
        for lo in range(0, n_t, batch):
            hi = min(lo + batch, n_t)
            kb = eval_block(comb, it[lo:hi], io, model.spec)  # b x n
            mean[lo:hi] = model.y_mean + kb @ alpha
            beta = back_solve(model.nodes, kb.T, model.spec, cfg, tree=model.tree)
            var[lo:hi] = prior_var - np.sum(kb * beta.T, axis=1)
    elif mode == "reduced":
        rng = np.random.default_rng(cfg.seed)
        fac = rsvd_id(comb, it, io, model.spec, cfg.k, rng, cfg.n_max, cfg.dense_budget)
        lm = fac.left * fac.sing  # n_t x k
        mean[:] = model.y_mean + lm @ (fac.right.T @ alpha)
        w = back_solve(model.nodes, fac.right, model.spec, cfg, tree=model.tree)
        core = fac.right.T @ w  # k x k Gram of the solved right factor
        var[:] = prior_var - np.sum((lm @ core) * lm, axis=1)
    else:
        raise ValueError("mode must be 'full' or 'reduced'")
    return mean, np.maximum(var, 0.0)


def model_select(nodes: NodeSet, y: np.ndarray, candidates, config: SolveConfig,
                 n_folds: int = 3, maxiter: int = 15, seed: int = 0):
    """Pick the kernel with the smallest held-out prediction error.

    The data is split into disjoint folds; each candidate is trained on the
    complement of every fold and scored by the normalized mean prediction
    error on the fold.  Returns (best_spec, per-candidate scores).
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    rng = np.random.default_rng(seed)
    order = rng.permutation(nodes.n)
    folds = np.array_split(order, n_folds)
    scores = []
    for spec0 in candidates:
        errs = []
        for fold in folds:
            mask = np.ones(nodes.n, dtype=bool)
            mask[fold] = False
            tr = np.flatnonzero(mask)
            model, _ = train(nodes.subset(tr), y[tr], spec0, config, maxiter=maxiter)
            mean, _ = predict(model, nodes.subset(fold))
            denom = max(float(np.linalg.norm(y[fold])), 1e-12)
            errs.append(float(np.linalg.norm(mean - y[fold])) / denom)
        scores.append(float(np.mean(errs)))
    best = int(np.argmin(scores))
    return candidates[best], scores
