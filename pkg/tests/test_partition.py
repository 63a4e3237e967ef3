"""Tests for the dyadic split rule, kernel-sorted aggregation, tree
construction, MIS baselines, and the dense rank probe."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmatgp.kernels import Hyperparameters, KernelSpec, NodeSet, eval_block
from hmatgp.partition import (build_tree, mis_aggregate, perm_generator,
                              permute, rank_probe, split_size)

SE = KernelSpec("squared_exponential", Hyperparameters(np.array([1.0])))


def random_nodes(n, d=2, seed=0):
    return NodeSet(np.random.default_rng(seed).random((d, n)))


class TestSplitSize:
    @pytest.mark.parametrize("m,expected", [
        (2, 1), (9, 1), (10, 1), (11, 10), (100, 10), (101, 100),
        (999, 100), (1000, 100), (1001, 1000), (5000, 1000), (10**6, 10**5),
    ])
    def test_values(self, m, expected):
        assert split_size(m) == expected

    def test_rejects_tiny(self):
        with pytest.raises(ValueError):
            split_size(1)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(2, 10**7))
    def test_is_largest_power_of_ten_below_m(self, m):
        nu = split_size(m)
        assert nu < m <= 10 * nu
        # exact power of ten
        assert 10 ** int(round(np.log10(nu))) == nu


class TestPermute:
    def test_partition_is_bijection(self):
        nodes = random_nodes(50, 2, 1)
        idx = np.arange(50)
        i1, i2 = permute(nodes, idx, 10, SE)
        assert i1.size == 10 and i2.size == 40
        assert np.array_equal(np.sort(np.concatenate([i1, i2])), idx)

    def test_pivot_lands_in_first_group(self):
        # k(x0, x0) = 1 is the maximal kernel value, so idx[0] leads the sort
        nodes = random_nodes(30, 2, 2)
        i1, _ = permute(nodes, np.arange(30), 5, SE)
        assert i1[0] == 0

    def test_sorted_descending_by_kernel_row(self):
        nodes = random_nodes(40, 2, 3)
        idx = np.arange(40)
        i1, i2 = permute(nodes, idx, 15, SE)
        row = eval_block(nodes, idx[:1], np.concatenate([i1, i2]), SE)[0]
        assert np.all(np.diff(row) <= 1e-15)

    def test_invalid_split_sizes(self):
        nodes = random_nodes(10)
        with pytest.raises(ValueError):
            permute(nodes, np.arange(10), 0, SE)
        with pytest.raises(ValueError):
            permute(nodes, np.arange(10), 10, SE)


class TestPermGenerator:
    def test_output_is_permutation(self):
        nodes = random_nodes(137, 2, 4)
        out = perm_generator(nodes, np.arange(137), 10, SE)
        assert np.array_equal(np.sort(out), np.arange(137))

    def test_small_set_unchanged(self):
        nodes = random_nodes(8, 2, 5)
        idx = np.array([3, 1, 4, 5])
        assert np.array_equal(perm_generator(nodes, idx, 10, SE), idx)

    def test_matches_tree_leaf_order(self):
        nodes = random_nodes(230, 2, 6)
        tree = build_tree(nodes, 230, 20, SE)
        assert np.array_equal(tree.index_list,
                              perm_generator(nodes, np.arange(230), 20, SE))


class TestBuildTree:
    def test_leaf_sizes_respect_cutoff(self):
        nodes = random_nodes(530, 2, 7)
        tree = build_tree(nodes, 530, 60, SE)
        for leaf in tree.leaves():
            assert leaf.size <= 60

    def test_children_partition_parent(self):
        nodes = random_nodes(300, 2, 8)
        tree = build_tree(nodes, 300, 50, SE)

        def check(node):
            if node.is_leaf:
                return
            c1, c2 = node.children
            assert np.array_equal(node.index_list,
                                  np.concatenate([c1.index_list, c2.index_list]))
            check(c1)
            check(c2)

        check(tree)

    def test_unsorted_tree_keeps_order(self):
        nodes = random_nodes(300, 2, 9)
        tree = build_tree(nodes, 300, 50, SE, sort=False)
        assert np.array_equal(tree.index_list, np.arange(300))


class TestMisAggregate:
    def test_groups_partition_indices(self):
        nodes = random_nodes(120, 2, 10)
        for dist in (1, 2):
            agg = mis_aggregate(nodes, np.arange(120), 0.5, dist, SE)
            allidx = np.sort(np.concatenate(agg.groups))
            assert np.array_equal(allidx, np.arange(120))

    def test_split_partitions_indices(self):
        nodes = random_nodes(90, 2, 11)
        agg = mis_aggregate(nodes, np.arange(90), 0.6, 1, SE)
        i1, i2 = agg.split
        assert np.array_equal(np.sort(np.concatenate([i1, i2])), np.arange(90))

    def test_distance2_groups_not_smaller(self):
        nodes = random_nodes(150, 2, 12)
        g1 = mis_aggregate(nodes, np.arange(150), 0.5, 1, SE)
        g2 = mis_aggregate(nodes, np.arange(150), 0.5, 2, SE)
        assert len(g2.groups) <= len(g1.groups)

    def test_high_theta_gives_singletons(self):
        nodes = random_nodes(20, 2, 13)
        agg = mis_aggregate(nodes, np.arange(20), 0.999999, 1, SE)
        # every point only reaches itself at this threshold
        assert len(agg.groups) == 20

    def test_invalid_arguments(self):
        nodes = random_nodes(10)
        with pytest.raises(ValueError):
            mis_aggregate(nodes, np.arange(10), 1.5, 1, SE)
        with pytest.raises(ValueError):
            mis_aggregate(nodes, np.arange(10), 0.5, 3, SE)

    def test_deterministic(self):
        nodes = random_nodes(80, 2, 14)
        a = mis_aggregate(nodes, np.arange(80), 0.4, 2, SE)
        b = mis_aggregate(nodes, np.arange(80), 0.4, 2, SE)
        assert all(np.array_equal(x, y) for x, y in zip(a.groups, b.groups))


class TestRankProbe:
    def test_rank_one_block(self):
        # distance along a single axis makes an SE block of numerical rank ~1
        # when all rows coincide
        coords = np.vstack([np.zeros(10), np.arange(10) / 10.0])
        coords[:, :5] = 0.0  # first five rows identical
        nodes = NodeSet(coords + 1e-12)
        probe = rank_probe(nodes, np.arange(5), np.arange(5, 10), SE, [1e-8])
        assert probe["exact_rank"] == 1

    def test_exact_rank_upper_bound(self):
        nodes = random_nodes(60, 2, 15)
        probe = rank_probe(nodes, np.arange(20), np.arange(20, 60), SE, [1e-4])
        assert 1 <= probe["exact_rank"] <= 20
        assert probe["numerical_rank"] <= probe["exact_rank"] + 1e-9

    def test_threshold_counts_monotone(self):
        nodes = random_nodes(80, 2, 16)
        probe = rank_probe(nodes, np.arange(30), np.arange(30, 80), SE,
                           [1e-2, 1e-6, 1e-10])
        counts = probe["threshold_counts"]
        assert counts[1e-2] <= counts[1e-6] <= counts[1e-10]

    def test_size_guard(self):
        nodes = random_nodes(100, 2, 17)
        with pytest.raises(ValueError):
            rank_probe(nodes, np.arange(50), np.arange(50, 100), SE, [1e-4],
                       max_entries=100)
