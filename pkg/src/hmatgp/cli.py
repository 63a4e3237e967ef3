"""Command-line surface: solve/likelihood/train/predict plus benchmark and
study harnesses.  Tables go to CSV, scalar results to key=value metrics
files, and every artifact echoes the resolved run configuration."""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from .data import (Dataset, ingest_csv, smooth_target, synthetic_nodes,
                   write_csv, write_metrics)
from .gp import GPModel, predict, train
from .hsolve import SolveConfig, back_solve, dense_solve, factorize_offdiag, smw_combine
from .kernels import Hyperparameters, KernelSpec, NodeSet, eval_block, eval_dense
from .likelihood import lkl_eval
from .partition import build_tree, mis_aggregate, permute, rank_probe, split_size

KERNEL_ALIASES = {
    "se": "squared_exponential",
    "squared_exponential": "squared_exponential",
    "exp": "exponential",
    "exponential": "exponential",
    "ard": "ard_squared_exponential",
    "ard_squared_exponential": "ard_squared_exponential",
    "l1": "l1_distance",
    "l1_distance": "l1_distance",
}

COMMANDS = ("solve", "loglik", "train", "predict", "bench-scaling",
            "bench-aggregation", "bench-lowrank", "rank-probe", "err-study")


@dataclass
class RunConfig:
    command: str = "solve"
    seed: int = 0
    k: int = 20
    eta: int = 100
    nmax: int = 5_000_000
    sigma2: float = 1e-3
    kernel: str = "squared_exponential"
    ell: list = field(default_factory=lambda: [1.0])
    dense_check: bool = False
    mode: str = "full"
    out: str = "."
    data: str | None = None
    features: str | None = None
    target: str | None = None
    clean: bool = True
    n: int = 2000
    dim: int = 2
    n_test: int = 200
    sizes: list = field(default_factory=lambda: [10_000, 20_000, 50_000, 100_000])
    ks: list = field(default_factory=lambda: [5, 10, 20, 40])
    thetas: list = field(default_factory=lambda: [0.3, 0.6, 0.9])
    repeats: int = 1
    seeds: int = 20
    p: int = 5
    maxiter: int = 50

    def solve_config(self) -> SolveConfig:
        return SolveConfig(k=self.k, eta=self.eta, n_max=self.nmax,
                           sigma2=self.sigma2, seed=self.seed)

    def kernel_spec(self) -> KernelSpec:
        family = KERNEL_ALIASES[self.kernel]
        return KernelSpec(family, Hyperparameters(np.asarray(self.ell, dtype=float)))

    def echo(self) -> dict:
        return {f"cfg_{k}": v for k, v in asdict(self).items()}


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=str, default=None, help="JSON config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--eta", type=int, default=None)
    p.add_argument("--nmax", type=int, default=None)
    p.add_argument("--sigma2", type=float, default=None)
    p.add_argument("--kernel", type=str, default=None, choices=sorted(KERNEL_ALIASES))
    p.add_argument("--ell", type=float, nargs="+", default=None)
    p.add_argument("--dense-check", action="store_true", default=None)
    p.add_argument("--mode", type=str, default=None, choices=["full", "reduced"])
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--data", type=str, default=None)
    p.add_argument("--features", type=str, default=None,
                   help="comma-separated feature column names")
    p.add_argument("--target", type=str, default=None)
    p.add_argument("--no-clean", dest="clean", action="store_false", default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--n-test", type=int, default=None)
    p.add_argument("--sizes", type=int, nargs="+", default=None)
    p.add_argument("--ks", type=int, nargs="+", default=None)
    p.add_argument("--thetas", type=float, nargs="+", default=None)
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--seeds", type=int, default=None)
    p.add_argument("--p", type=int, default=None)
    p.add_argument("--maxiter", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hmatgp",
                                     description="hierarchical kernel solver and GP toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        _add_common(sub.add_parser(name))
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Layer CLI flags over an optional JSON config over the defaults."""
    rc = RunConfig(command=args.command)
    if args.config:
        with open(args.config) as fh:
            for key, val in json.load(fh).items():
                if not hasattr(rc, key):
                    raise KeyError(f"unknown config key {key!r}")
                setattr(rc, key, val)
    for key, val in vars(args).items():
        if key in ("config", "command") or val is None:
            continue
        attr = key
        setattr(rc, attr, val)
    if KERNEL_ALIASES[rc.kernel] == "ard_squared_exponential" and len(rc.ell) == 1:
        rc.ell = list(rc.ell) * rc.dim
    return rc


def _load_problem(rc: RunConfig):
    """Return (nodes, y) from CSV columns or a seeded synthetic fixture."""
    if rc.data:
        feats = rc.features.split(",") if rc.features else None
        if not feats or not rc.target:
            raise ValueError("--data requires --features and --target")
        ds = ingest_csv(rc.data, feats, rc.target, rc.clean)
        return ds.nodes, ds.targets, ds
    nodes = synthetic_nodes(rc.n, rc.dim, rc.seed)
    y = smooth_target(nodes, noise=np.sqrt(rc.sigma2), seed=rc.seed + 1)
    return nodes, y, None


def _outdir(rc: RunConfig) -> Path:
    out = Path(rc.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(rc: RunConfig) -> int:
    nodes, y, ds = _load_problem(rc)
    spec = rc.kernel_spec()
    cfg = rc.solve_config()
    t0 = time.perf_counter()
    x = back_solve(nodes, y, spec, cfg)
    wall = time.perf_counter() - t0
    out = _outdir(rc)
    write_csv(out / "solution.csv", ["x"], [[v] for v in x])
    metrics = {"n": nodes.n, "wall_time_s": wall, **rc.echo()}
    if ds is not None:
        metrics["rows_dropped_nan"] = ds.n_dropped_nan
        metrics["rows_dropped_negative"] = ds.n_dropped_negative
    if rc.dense_check:
        xd = dense_solve(nodes, y, spec, cfg.sigma2)
        metrics["normalized_error_vs_dense"] = float(
            np.linalg.norm(x - xd) / np.linalg.norm(xd))
    write_metrics(out / "metrics.txt", metrics)
    return 0


def cmd_loglik(rc: RunConfig) -> int:
    nodes, y, _ = _load_problem(rc)
    spec = rc.kernel_spec()
    cfg = rc.solve_config()
    t0 = time.perf_counter()
    res = lkl_eval(nodes, y, spec, cfg)
    wall = time.perf_counter() - t0
    metrics = {
        "n": nodes.n, "wall_time_s": wall,
        "energy": res.energy, "logdet": res.logdet, "nll": res.nll,
        "det_sign": res.det_sign, **rc.echo(),
    }
    for h, (de, dl, dn) in enumerate(zip(res.d_energy, res.d_logdet, res.d_nll)):
        metrics[f"d_energy_{h}"] = de
        metrics[f"d_logdet_{h}"] = dl
        metrics[f"d_nll_{h}"] = dn
    if rc.dense_check:
        a = eval_dense(nodes, spec)
        a[np.diag_indices_from(a)] += cfg.sigma2
        xd = np.linalg.solve(a, y)
        pi_d = float(y @ xd)
        lam_d = float(np.linalg.slogdet(a)[1])
        metrics["energy_rel_error_vs_dense"] = abs(res.energy - pi_d) / abs(pi_d)
        metrics["logdet_rel_error_vs_dense"] = abs(res.logdet - lam_d) / abs(lam_d)
    write_metrics(_outdir(rc) / "metrics.txt", metrics)
    return 0


def cmd_train(rc: RunConfig) -> int:
    nodes, y, _ = _load_problem(rc)
    cfg = rc.solve_config()
    t0 = time.perf_counter()
    model, report = train(nodes, y, rc.kernel_spec(), cfg, maxiter=rc.maxiter)
    wall = time.perf_counter() - t0
    out = _outdir(rc)
    write_csv(out / "history.csv", ["evaluation", "nll"] +
              [f"ell_{h}" for h in range(len(report.lengthscales))],
              [[i, f] + list(ls) for i, (ls, f) in enumerate(report.history)])
    metrics = {
        "n": nodes.n, "wall_time_s": wall, "nll": report.nll,
        "n_iterations": report.n_iterations, "n_evaluations": len(report.history),
        "grad_inf_norm": report.grad_inf_norm, "converged": report.converged,
        **{f"ell_opt_{h}": v for h, v in enumerate(report.lengthscales)},
        **rc.echo(),
    }
    write_metrics(out / "metrics.txt", metrics)
    return 0


def cmd_predict(rc: RunConfig) -> int:
    nodes, y, _ = _load_problem(rc)
    rng = np.random.default_rng(rc.seed)
    order = rng.permutation(nodes.n)
    n_test = min(rc.n_test, nodes.n // 5)
    test_idx, train_idx = order[:n_test], order[n_test:]
    cfg = rc.solve_config()
    model = GPModel(nodes.subset(train_idx), y[train_idx], rc.kernel_spec(), cfg)
    t0 = time.perf_counter()
    mean, var = predict(model, nodes.subset(test_idx), mode=rc.mode)
    wall = time.perf_counter() - t0
    out = _outdir(rc)
    write_csv(out / "predictions.csv", ["mean", "variance", "truth"],
              list(zip(mean, var, y[test_idx])))
    err = float(np.linalg.norm(mean - y[test_idx]) /
                max(np.linalg.norm(y[test_idx]), 1e-12))
    write_metrics(out / "metrics.txt", {
        "n_train": train_idx.size, "n_test": n_test, "wall_time_s": wall,
        "normalized_prediction_error": err, **rc.echo(),
    })
    return 0


def _fit_slope(xs, ys):
    return float(np.polyfit(np.log(np.asarray(xs, dtype=float)),
                            np.log(np.asarray(ys, dtype=float)), 1)[0])


def cmd_bench_scaling(rc: RunConfig) -> int:
    spec = rc.kernel_spec()
    rows = []
    for n in rc.sizes:
        for k in rc.ks:
            for rep in range(rc.repeats):
                nodes = synthetic_nodes(n, rc.dim, rc.seed + rep)
                y = np.random.default_rng(rc.seed + rep).standard_normal(n)
                cfg = rc.solve_config().with_(k=k, seed=rc.seed + rep)
                t0 = time.perf_counter()
                back_solve(nodes, y, spec, cfg)
                rows.append([n, k, rep, time.perf_counter() - t0])
    out = _outdir(rc)
    write_csv(out / "scaling.csv", ["n", "k", "repeat", "seconds"], rows)
    arr = np.asarray(rows, dtype=float)
    metrics = dict(rc.echo())
    k0 = rc.ks[0]
    sel = arr[arr[:, 1] == k0]
    if len({r[0] for r in sel}) > 1:
        ns, ts = sel[:, 0], sel[:, 3]
        metrics["n_slope"] = float(np.polyfit(np.log(ns * np.log(ns)), np.log(ts), 1)[0])
        metrics["n_slope_k"] = k0
    n0 = max(rc.sizes)
    sel = arr[arr[:, 0] == n0]
    if len({r[1] for r in sel}) > 1:
        metrics["k_slope"] = _fit_slope(sel[:, 1], sel[:, 3])
        metrics["k_slope_n"] = n0
    write_metrics(out / "metrics.txt", metrics)
    return 0


def one_level_solve_error(nodes, y, spec, cfg, i1, i2):
    """Accuracy of a single SMW level built from a given two-way split."""
    from scipy.linalg import cho_factor, cho_solve
    rng = np.random.default_rng(cfg.seed)
    fac = factorize_offdiag(nodes, i1, i2, spec, cfg, rng)
    order = np.concatenate([i1, i2])

    def block_solve(idx, rhs):
        a = eval_block(nodes, idx, idx, spec)
        a[np.diag_indices_from(a)] += cfg.sigma2
        return cho_solve(cho_factor(a, lower=True), rhs)

    yy = y[order].reshape(-1, 1)
    z1 = block_solve(i1, np.hstack([yy[: i1.size], fac.left]))
    z2 = block_solve(i2, np.hstack([yy[i1.size:], fac.right]))
    x, _, _, _ = smw_combine(z1[:, :1], z2[:, :1], z1[:, 1:], z2[:, 1:],
                             fac.left, fac.right, fac.middle_inv())
    xh = np.empty(nodes.n)
    xh[order] = x[:, 0]
    xd = dense_solve(nodes, y, spec, cfg.sigma2)
    return float(np.linalg.norm(xh - xd) / np.linalg.norm(xd))


def cmd_bench_aggregation(rc: RunConfig) -> int:
    nodes, y, _ = _load_problem(rc)
    spec = rc.kernel_spec()
    cfg = rc.solve_config()
    idx = np.arange(nodes.n)
    nu = split_size(nodes.n)
    rows = []
    for theta in rc.thetas:
        t0 = time.perf_counter()
        p1, p2 = permute(nodes, idx, nu, spec)
        t_perm = time.perf_counter() - t0
        splits = {"permute": ((p1, p2), t_perm)}
        for dist in (1, 2):
            t0 = time.perf_counter()
            agg = mis_aggregate(nodes, idx, theta, dist, spec)
            splits[f"mis{dist}"] = (agg.split, time.perf_counter() - t0)
        for method, ((i1, i2), secs) in splits.items():
            err = np.nan
            if nodes.n <= 8000:
                err = one_level_solve_error(nodes, y, spec, cfg, i1, i2)
            rows.append([method, theta, i1.size, i2.size, secs, err,
                         int(np.sum(i1) + np.sum(i2))])
    out = _outdir(rc)
    write_csv(out / "aggregation.csv",
              ["method", "theta", "n1", "n2", "aggregation_seconds",
               "solve_error", "index_checksum"], rows)
    write_metrics(out / "metrics.txt", dict(rc.echo()))
    return 0


def cmd_bench_lowrank(rc: RunConfig) -> int:
    nodes, y, _ = _load_problem(rc)
    spec = rc.kernel_spec()
    xd = dense_solve(nodes, y, spec, rc.sigma2) if nodes.n <= 8000 else None
    rows = []
    for k in rc.ks:
        for method in ("rsvd_id", "nystrom_rand", "nystrom_qr"):
            for s in range(rc.seeds):
                cfg = rc.solve_config().with_(k=k, seed=rc.seed + s,
                                              factorization=method,
                                              dense_budget=0)
                t0 = time.perf_counter()
                x = back_solve(nodes, y, spec, cfg)
                secs = time.perf_counter() - t0
                err = np.nan
                if xd is not None:
                    err = float(np.linalg.norm(x - xd) / np.linalg.norm(xd))
                rows.append([k, method, s, err, secs])
    out = _outdir(rc)
    write_csv(out / "lowrank.csv", ["k", "method", "seed", "error", "seconds"], rows)
    metrics = dict(rc.echo())
    arr = rows
    for k in rc.ks:
        for method in ("rsvd_id", "nystrom_rand", "nystrom_qr"):
            errs = [r[3] for r in arr if r[0] == k and r[1] == method]
            metrics[f"median_error_{method}_k{k}"] = float(np.median(errs))
    write_metrics(out / "metrics.txt", metrics)
    return 0


def cmd_rank_probe(rc: RunConfig) -> int:
    nodes, _, _ = _load_problem(rc)
    spec = rc.kernel_spec()
    idx = np.arange(nodes.n)
    nu = split_size(nodes.n)
    p1, p2 = permute(nodes, idx, nu, spec)
    thresholds = (1e-4, 1e-8, 1e-12)
    rows = []
    for label, (i1, i2) in (("unpermuted", (idx[:nu], idx[nu:])),
                            ("permuted", (p1, p2))):
        probe = rank_probe(nodes, i1, i2, spec, thresholds)
        rows.append([label, i1.size, i2.size, probe["exact_rank"],
                     probe["numerical_rank"]] +
                    [probe["threshold_counts"][t] for t in thresholds])
    out = _outdir(rc)
    write_csv(out / "rank_probe.csv",
              ["split", "n1", "n2", "exact_rank", "numerical_rank"] +
              [f"count_gt_{t}" for t in thresholds], rows)
    write_metrics(out / "metrics.txt", {
        "exact_rank_unpermuted": rows[0][3], "exact_rank_permuted": rows[1][3],
        **rc.echo(),
    })
    return 0


def analytic_error_samples(nodes, spec, tree, n_seeds, k, p, eta, sigma2, kappa,
                           beta, seed):
    """Sample analytic inversion-error estimates for the whole hierarchy.

    Per level of the dyadic chain, the off-diagonal factorization error is
    drawn log-normally with parameters fitted to the mean bound and the tail
    threshold, then pushed through the level recursion.
    """
    shapes, n_min = diag.dyadic_chain(nodes.n, eta)
    perm = tree.index_list
    # singular values of the actual chain blocks, deepest-first
    level_params = []
    lo, hi = 0, nodes.n
    per_level = []
    for n1, n2 in reversed(shapes):  # walk shallow-to-deep through the chain
        a = eval_block(nodes, perm[lo:lo + n1], perm[lo + n1:hi], spec)
        sv = np.linalg.svd(a, compute_uv=False)
        per_level.append((n1, n2, float(sv[min(k, sv.size - 1)])))
        lo += n1
    per_level.reverse()
    t, u = np.e, np.sqrt(2 * p)
    for n1, n2, sig_next in per_level:
        kk = min(k, n1 - p, n2 - p)
        mean = diag.expected_range_error(n1, n2, kk, p, sig_next)
        thr, fp = diag.range_error_threshold(n1, n2, kk, p, t, u, sig_next)
        if mean <= 0 or thr <= 0:
            level_params.append(None)
            continue
        level_params.append((kk, n2, diag.fit_lognormal(mean, thr, fp)))
    alpha_leaf = diag.alpha_leaf_estimate(n_min, np.sqrt(sigma2))
    rng = np.random.default_rng(seed)
    samples = np.empty(n_seeds)
    for s in range(n_seeds):
        levels = []
        for prm in level_params:
            if prm is None:
                levels.append((beta, 0.0))
                continue
            kk, n2, (mu, sg) = prm
            eps_range = float(rng.lognormal(mu, sg))
            eps = np.sqrt(2.0) * diag.svd_error_bound(kk, n2, eps_range)
            levels.append((beta, np.sqrt(2.0) * eps / beta**2))
        samples[s] = diag.hierarchical_error_estimate(levels, alpha_leaf,
                                                      kappa).eps_d0
    return samples


def cmd_err_study(rc: RunConfig) -> int:
    nodes, y, _ = _load_problem(rc)
    spec = rc.kernel_spec()
    cfg = rc.solve_config()
    tree = build_tree(nodes, nodes.n, cfg.eta, spec)
    xd = dense_solve(nodes, y, spec, cfg.sigma2)
    ynorm = float(np.linalg.norm(y))
    empirical = np.empty(rc.seeds)
    for s in range(rc.seeds):
        x = back_solve(nodes, y, spec, cfg.with_(seed=rc.seed + s, dense_budget=0),
                       tree=tree)
        empirical[s] = float(np.linalg.norm(x - xd)) / ynorm
    analytic = analytic_error_samples(nodes, spec, tree, rc.seeds, cfg.k, rc.p,
                                      cfg.eta, cfg.sigma2, kappa=1.02, beta=1.0,
                                      seed=rc.seed)
    report = diag.empirical_error_vs_bound(analytic, empirical)
    out = _outdir(rc)
    write_csv(out / "err_study.csv", ["seed", "analytic", "empirical"],
              [[rc.seed + s, analytic[s], empirical[s]] for s in range(rc.seeds)])
    write_metrics(out / "metrics.txt", {
        "mean_log_analytic": report.mean_log_analytic,
        "mean_log_empirical": report.mean_log_empirical,
        "dominance_margin": report.margin,
        "dominated": report.dominated, **rc.echo(),
    })
    return 0


DISPATCH = {
    "solve": cmd_solve,
    "loglik": cmd_loglik,
    "train": cmd_train,
    "predict": cmd_predict,
    "bench-scaling": cmd_bench_scaling,
    "bench-aggregation": cmd_bench_aggregation,
    "bench-lowrank": cmd_bench_lowrank,
    "rank-probe": cmd_rank_probe,
    "err-study": cmd_err_study,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    rc = resolve_config(args)
    try:
        return DISPATCH[rc.command](rc)
    except (ValueError, KeyError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
