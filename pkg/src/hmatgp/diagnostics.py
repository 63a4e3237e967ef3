"""Analytic error and cost estimators for the hierarchical solver.

Pure-arithmetic bounds: expected range-finder error, tail threshold with
failure probability, SVD-factorization error, the level-by-level inversion
error recursion, and operation-count bounds.  A small harness compares
sampled analytic inversion errors against empirical ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .partition import split_size


def expected_range_error(m: int, n: int, k: int, p: int, sigma_next: float) -> float:
    """Mean Frobenius error of the rank-k Gaussian range finder with
    oversampling p, in terms of the (k+1)-th singular value."""
    if k < 2 or p < 2 or k + p > min(m, n):
        raise ValueError("need k >= 2, p >= 2, k+p <= min(m, n)")
    return math.sqrt(1.0 + k / (p - 1.0)) * math.sqrt(min(m, n) - k) * sigma_next


def range_error_threshold(m: int, n: int, k: int, p: int, t: float, u: float,
                          sigma_next: float) -> tuple[float, float]:
    """Tail bound: threshold exceeded with probability at most
    2 t^-p + exp(-u^2/2).  With t=e, u=sqrt(2p) that probability is 3 e^-p."""
    if p < 4 or t < 1 or u < 1:
        raise ValueError("need p >= 4, t >= 1, u >= 1")
    thr = ((1.0 + t * math.sqrt(3.0 * k / (p + 1.0))) * math.sqrt(min(m, n) - k)
           + u * t * math.e * math.sqrt(k + p) / (p + 1.0)) * sigma_next
    fail = 2.0 * t ** (-p) + math.exp(-u * u / 2.0)
    return thr, fail


def svd_error_bound(k: int, n: int, eps: float) -> float:
    """Frobenius error of the SVD triple built from a range finder with
    error eps: [1 + sqrt(k + 4k(n-k))] * eps."""
    if k > n:
        raise ValueError("k must not exceed n")
    return (1.0 + math.sqrt(k + 4.0 * k * (n - k))) * eps


def alpha_leaf_estimate(n_min: int, sigma_n: float) -> float:
    """Frobenius-norm estimate of the inverse of the deepest diagonal block."""
    if n_min < 1 or sigma_n <= 0:
        raise ValueError("need n_min >= 1 and sigma_n > 0")
    return math.sqrt(n_min) / sigma_n


@dataclass
class LevelRecord:
    beta: float
    eps_od: float
    alpha: float   # Frobenius norm estimate of the level's diagonal inverse
    a: float       # contraction factor  kappa * alpha^2 * beta^4
    b: float       # additive term  2 * kappa * alpha^3 * beta^3 * eps_od


@dataclass
class ErrorBudget:
    kappa: float
    alpha_leaf: float
    eps_seed: float
    levels: list[LevelRecord] = field(default_factory=list)  # deepest first
    eps_d0: float = 0.0


def hierarchical_error_estimate(levels, alpha_leaf: float, kappa: float,
                                eps_seed: float = 0.0) -> ErrorBudget:
    """Run the inversion-error recursion eps_{i-1} = a_i eps_i + b_i.

    levels is a deepest-first list of (beta_i, eps_od_i) pairs; alpha_leaf is
    the inverse-norm estimate of the deepest diagonal block; eps_seed is the
    inversion error already accumulated below the deepest level (0 for a
    fresh chain, or a previous budget's eps_d0 when chaining decades).
    """
    if alpha_leaf <= 0:
        raise ValueError("alpha_leaf must be positive")
    budget = ErrorBudget(kappa, alpha_leaf, eps_seed)
    alpha = float(alpha_leaf)
    eps = float(eps_seed)

    def sat(compute):
        # the alpha chain squares per level and can exceed float range for
        # small-noise leaves; saturate instead of raising
        try:
            return float(compute())
        except OverflowError:
            return math.inf

    for beta, eps_od in levels:
        beta, eps_od = float(beta), float(eps_od)
        a = sat(lambda: kappa * alpha * alpha * beta**4)
        b = 0.0 if eps_od == 0 else sat(
            lambda: 2.0 * kappa * alpha**3 * beta**3 * eps_od)
        budget.levels.append(LevelRecord(beta, eps_od, alpha, a, b))
        # a can saturate to inf while eps is still exactly 0; keep 0 * inf = 0
        eps = sat(lambda: (a * eps if eps > 0 else 0.0) + b)
        alpha = sat(lambda: kappa * beta * beta * alpha * alpha)
    budget.eps_d0 = eps
    return budget


def dyadic_chain(n: int, eta: int) -> tuple[list[tuple[int, int]], int]:
    """Off-diagonal block shapes along the dyadic recursion, deepest first.

    Each step splits the current set of size m into (nu, m - nu) and
    continues on the larger part.  Returns (shapes, n_min) with n_min the
    final undivided block size.
    """
    shapes = []
    m = n
    while m > eta:
        nu = split_size(m)
        shapes.append((nu, m - nu))
        m = m - nu
    shapes.reverse()
    return shapes, m


def tree_depth(n: int, eta: int) -> int:
    """Depth of the full dyadic index tree (leaves at size <= eta)."""
    memo = {}

    def rec(m):
        if m <= eta:
            return 0
        if m not in memo:
            nu = split_size(m)
            memo[m] = 1 + max(rec(nu), rec(m - nu))
        return memo[m]

    return rec(n)


@dataclass
class CostReport:
    n: int
    k: int
    n_min: int
    c_sp: int
    c1: int
    depth: int
    storage_bound: float
    matvec_low: float
    matvec_high: float
    truncation_bound: float
    solve_bound: float


def cost_model(n: int, k: int, n_min: int, c_sp: int = 2) -> CostReport:
    """Operation-count bounds; log(n) is the natural logarithm, and the
    actual tree depth is reported alongside for wall-time comparisons."""
    if n < 1 or k < 1 or n_min < 1:
        raise ValueError("n, k, n_min must be positive")
    c1 = 2 * c_sp * n_min
    logn = math.log(n)
    storage = c1 * n * logn
    return CostReport(n, k, n_min, c_sp, c1, tree_depth(n, n_min), storage,
                      storage, 2.0 * storage, k * storage,
                      3.0 * c1 * k * n * logn)


def fit_lognormal(mean: float, threshold: float, fail_prob: float) -> tuple[float, float]:
    """Log-normal parameters (mu, sigma) matching a given mean and a given
    upper quantile: E[X] = mean and P(X > threshold) = fail_prob."""
    if mean <= 0 or threshold <= 0 or not (0 < fail_prob < 1):
        raise ValueError("mean, threshold positive; fail_prob in (0, 1)")
    z = norm.isf(fail_prob)
    c = math.log(threshold) - math.log(mean)
    disc = z * z - 2.0 * c
    if disc >= 0:
        sigma = z - math.sqrt(disc)
        if sigma <= 0:
            sigma = c / z if z > 0 else 0.1
    else:
        sigma = c / z if z > 0 else 0.1
    mu = math.log(mean) - 0.5 * sigma * sigma
    return mu, sigma


def sample_od_errors(rng: np.random.Generator, mu: float, sigma: float,
                     size: int) -> np.ndarray:
    return rng.lognormal(mu, sigma, size)


@dataclass
class ComparisonReport:
    mean_log_analytic: float
    mean_log_empirical: float
    margin: float
    analytic_quantiles: np.ndarray
    empirical_quantiles: np.ndarray
    dominated: bool


def empirical_error_vs_bound(analytic_samples, empirical_samples) -> ComparisonReport:
    """Compare sampled analytic inversion-error estimates against empirical
    errors: means of natural logs, quartiles, and a dominance verdict."""
    a = np.asarray(analytic_samples, dtype=float)
    e = np.asarray(empirical_samples, dtype=float)
    if a.size == 0 or e.size == 0:
        raise ValueError("both sample sets must be nonempty")
    qs = (0.25, 0.5, 0.75)
    mla = float(np.mean(np.log(a)))
    mle = float(np.mean(np.log(e)))
    # nearest-sample quantiles: interpolation between saturated (inf)
    # estimates would produce NaNs
    return ComparisonReport(mla, mle, mla - mle,
                            np.quantile(a, qs, method="nearest"),
                            np.quantile(e, qs, method="nearest"), mla >= mle)
