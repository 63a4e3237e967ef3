"""Dyadic index-tree construction via the power-of-ten size rule and
magnitude-sorting aggregation, plus MIS baselines and rank probes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelSpec, NodeSet, eval_block


def split_size(m: int) -> int:
    """Largest power of 10 strictly smaller than m, i.e. 10^floor(log10(m - 0.5)).

    Uses integer powers with an explicit correction step so boundary sizes
    (m = 10, 100, 1000, ...) never misround through floating point.
    """
    if m < 2:
        raise ValueError("split_size requires m >= 2")
    t = m - 0.5
    e = int(np.floor(np.log10(t)))
    while 10 ** (e + 1) <= t:
        e += 1
    while 10**e > t:
        e -= 1
    return 10**e


def permute(nodes: NodeSet, idx, s: int, spec: KernelSpec):
    """Split idx into (first s, rest) after sorting one kernel row.

    The row k(x_{idx[0]}, x_idx) is sorted in non-increasing magnitude with a
    stable sort; ties keep original relative order.
    """
    idx = np.asarray(idx, dtype=int)
    if not (1 <= s < idx.size):
        raise ValueError("aggregation size s out of range")
    a = eval_block(nodes, idx[:1], idx, spec)[0]
    order = np.argsort(-np.abs(a), kind="stable")
    return idx[order[:s]], idx[order[s:]]


def perm_generator(nodes: NodeSet, idx, eta: int, spec: KernelSpec) -> np.ndarray:
    """Recursively permute idx with split_size + permute; sets of size <= eta
    are returned unchanged."""
    if eta < 1:
        raise ValueError("eta must be >= 1")
    idx = np.asarray(idx, dtype=int)
    if idx.size <= eta:
        return idx
    nu = split_size(idx.size)
    i1, i2 = permute(nodes, idx, nu, spec)
    return np.concatenate([perm_generator(nodes, i1, eta, spec), perm_generator(nodes, i2, eta, spec)])


@dataclass
class TreeNode:
    index_list: np.ndarray
    level: int
    is_leaf: bool
    children: list = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.index_list.size

    def leaves(self):
        if self.is_leaf:
            yield self
        else:
            for c in self.children:
                yield from c.leaves()


def build_tree(nodes: NodeSet, n: int, eta: int, spec: KernelSpec, sort: bool = True) -> TreeNode:
    """Index tree whose in-order leaf concatenation equals perm_generator output.

    sort=False keeps the incoming index order and only splits by size (used
    when the caller wants the raw ordering, e.g. permutation ablations).
    """

    def rec(idx, level):
        if idx.size <= eta:
            return TreeNode(idx, level, True)
        nu = split_size(idx.size)
        if sort:
            i1, i2 = permute(nodes, idx, nu, spec)
        else:
            i1, i2 = idx[:nu], idx[nu:]
        node = TreeNode(idx, level, False)
        node.children = [rec(i1, level + 1), rec(i2, level + 1)]
        node.index_list = np.concatenate([node.children[0].index_list, node.children[1].index_list])
        return node

    return rec(np.arange(n, dtype=int), 0)


@dataclass
class AggregationResult:
    roots: np.ndarray
    groups: list
    split: tuple  # two-way (I1, I2) conversion of the groups


def mis_aggregate(nodes: NodeSet, idx, theta: float, distance: int, spec: KernelSpec) -> AggregationResult:
    """Greedy maximal-independent-set aggregation with strength rule A_ij >= theta.

    distance=2 additionally absorbs the neighbors-of-neighbors ring.  Groups
    are converted to a two-way split: largest group vs. union of the rest; a
    single-group outcome is halved.
    """
    if not (0.0 < theta < 1.0):
        raise ValueError("theta must be in (0, 1)")
    if distance not in (1, 2):
        raise ValueError("distance must be 1 or 2")
    idx = np.asarray(idx, dtype=int)
    m = idx.size
    state = np.zeros(m, dtype=int)  # 0 unvisited, 1 root, -1 aggregated
    roots, groups = [], []
    for i in range(m):
        if state[i] != 0:
            continue
        state[i] = 1
        roots.append(idx[i])
        group = [i]
        row = eval_block(nodes, idx[i : i + 1], idx, spec)[0]
        nbrs = [j for j in np.nonzero(row >= theta)[0] if state[j] == 0]
        for j in nbrs:
            state[j] = -1
            group.append(j)
        if distance == 2:
            for j in nbrs:
                rj = eval_block(nodes, idx[j : j + 1], idx, spec)[0]
                for k in np.nonzero(rj >= theta)[0]:
                    if state[k] == 0:
                        state[k] = -1
                        group.append(k)
        groups.append(idx[np.array(sorted(group))])
    order = np.argsort([-g.size for g in groups], kind="stable")
    groups = [groups[o] for o in order]
    if len(groups) == 1:
        g = groups[0]
        half = g.size // 2
        i1, i2 = g[:half], g[half:]
    else:
        i1 = groups[0]
        i2 = np.concatenate(groups[1:])
    return AggregationResult(np.asarray(roots, dtype=int), groups, (i1, i2))


def rank_probe(nodes: NodeSet, i1, i2, spec: KernelSpec, thresholds, max_entries: int = 5_000_000) -> dict:
    """Dense SVD report for one off-diagonal block: exact rank, numerical
    (stable) rank ||A||_F^2 / ||A||_2^2, and singular-value counts per
    threshold."""
    i1 = np.asarray(i1, dtype=int)
    i2 = np.asarray(i2, dtype=int)
    if i1.size * i2.size > max_entries:
        raise ValueError("block too large for a dense rank probe")
    a = eval_block(nodes, i1, i2, spec)
    sv = np.linalg.svd(a, compute_uv=False)
    tol = max(a.shape) * np.finfo(float).eps * sv[0]
    fro2 = float((sv**2).sum())
    return {
        "exact_rank": int((sv > tol).sum()),
        "numerical_rank": fro2 / float(sv[0] ** 2),
        "threshold_counts": {float(t): int((sv > t).sum()) for t in thresholds},
        "singular_values": sv,
    }
