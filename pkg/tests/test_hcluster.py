"""Agglomerative clustering, dendrogram structure and cuts."""

from __future__ import annotations

import math

import numpy as np
import pytest

from critproc.errors import KOutOfRange, NonFiniteInput
from critproc.hcluster import (Dendrogram, cut_height, cut_k,
                               pairwise_sq_euclidean, ward_linkage)
from critproc.synthgen import ClusterSpec, GenConfig, generate

from oracles import partition_as_sets, refines, ward_bruteforce, naive_sq_dists


# -- pairwise distances ----------------------------------------------------

def test_three_four_five_triangle():
    d2 = pairwise_sq_euclidean(np.array([[0.0, 0.0], [3.0, 4.0]]))
    assert d2[0, 1] == 25.0
    assert d2[1, 0] == 25.0
    assert d2[0, 0] == 0.0


def test_duplicated_row_has_zero_distance():
    X = np.array([[1.5, -2.0], [1.5, -2.0], [0.0, 0.0]])
    d2 = pairwise_sq_euclidean(X)
    assert d2[0, 1] == 0.0


def test_pairwise_matches_naive_loop():
    rng = np.random.default_rng(3)
    for _ in range(10):
        X = rng.normal(size=(5, rng.integers(1, 4)))
        got = pairwise_sq_euclidean(X)
        want = naive_sq_dists(X)
        assert np.max(np.abs(got - want)) < 1e-12


def test_pairwise_rejects_non_finite():
    with pytest.raises(NonFiniteInput):
        pairwise_sq_euclidean(np.array([[0.0], [float("nan")]]))


# -- linkage ----------------------------------------------------------------

def test_singleton_merge_height_is_euclidean():
    X = np.array([[0.0, 0.0], [0.0, 1.0], [5.0, 5.0]])
    d = ward_linkage(X)
    assert (d.merges[0].left, d.merges[0].right) == (0, 1)
    assert d.merges[0].height == 1.0
    # Second merge joins node 3 (the pair) with leaf 2; the height works
    # out to sqrt(181/3) ~ 7.7675.
    assert (d.merges[1].left, d.merges[1].right) == (2, 3)
    assert abs(d.merges[1].height - math.sqrt(181.0 / 3.0)) < 1e-12
    assert d.merges[1].size == 3


def test_merge_sequence_matches_bruteforce():
    rng = np.random.default_rng(17)
    for _ in range(25):
        n = int(rng.integers(2, 9))
        p = int(rng.integers(1, 4))
        X = rng.normal(size=(n, p))
        got = ward_linkage(X)
        want = ward_bruteforce(X)
        assert len(got.merges) == len(want)
        for m, (left, right, height, size) in zip(got.merges, want):
            assert (m.left, m.right) == (left, right)
            assert m.size == size
            assert abs(m.height - height) < 1e-9 * max(1.0, height)


def test_heights_non_decreasing():
    rng = np.random.default_rng(4)
    for _ in range(10):
        X = rng.normal(size=(30, 4))
        d = ward_linkage(X)
        heights = [m.height for m in d.merges]
        assert all(b >= a - 1e-12 for a, b in zip(heights, heights[1:]))


def test_merge_ids_and_sizes():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(12, 3))
    d = ward_linkage(X)
    seen = set(range(12))
    for j, m in enumerate(d.merges):
        assert m.left < m.right
        assert m.left in seen and m.right in seen
        seen.discard(m.left)
        seen.discard(m.right)
        seen.add(12 + j)
    assert d.merges[-1].size == 12


def test_permutation_equivariance():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(14, 3))
    d_base = ward_linkage(X)
    perm = rng.permutation(14)
    d_perm = ward_linkage(X[perm])
    for k in range(1, 15):
        base = partition_as_sets(cut_k(d_base, k).labels)
        permuted_labels = cut_k(d_perm, k).labels
        # Map permuted-row clusters back to original row ids.
        unscrambled = np.empty(14, dtype=np.intp)
        unscrambled[perm] = permuted_labels
        assert partition_as_sets(unscrambled) == base


def test_ward_rejects_bad_input():
    with pytest.raises(NonFiniteInput):
        ward_linkage(np.array([[0.0], [float("inf")]]))


# -- cuts -------------------------------------------------------------------

def test_cut_k_edges():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(9, 2))
    d = ward_linkage(X)
    assert np.all(cut_k(d, 1).labels == 0)
    singles = cut_k(d, 9)
    assert len(set(singles.labels.tolist())) == 9
    with pytest.raises(KOutOfRange):
        cut_k(d, 0)
    with pytest.raises(KOutOfRange):
        cut_k(d, 10)


def test_cut_k_produces_k_nonempty_clusters():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(25, 3))
    d = ward_linkage(X)
    for k in range(1, 26):
        labels = cut_k(d, k).labels
        found = set(labels.tolist())
        assert found == set(range(k))


def test_cut_chain_refines():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(40, 4))
    d = ward_linkage(X)
    prev = cut_k(d, 1).labels
    for k in range(2, 41):
        cur = cut_k(d, k).labels
        assert refines(cur, prev)
        prev = cur


def test_cut_height_limits():
    rng = np.random.default_rng(10)
    X = rng.normal(size=(15, 3))
    d = ward_linkage(X)
    first = d.merges[0].height
    last = d.merges[-1].height
    assert len(set(cut_height(d, first * 0.5).labels.tolist())) == 15
    assert np.all(cut_height(d, last).labels == 0)


def test_cut_height_between_merges_counts_clusters():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(20, 3))
    d = ward_linkage(X)
    heights = [m.height for m in d.merges]
    for m in range(1, 19):
        if heights[m] - heights[m - 1] <= 1e-9:
            continue
        h = 0.5 * (heights[m - 1] + heights[m])
        got = cut_height(d, h)
        assert got.k == 20 - m
        # Same partition as the equivalent count cut.
        assert partition_as_sets(got.labels) == \
            partition_as_sets(cut_k(d, 20 - m).labels)


def test_labels_ordered_by_decreasing_mean():
    # Three separated blobs; cluster 0 must be the highest-mean one.
    rng = np.random.default_rng(12)
    X = np.vstack([
        rng.normal(2.0, 0.1, size=(10, 5)),
        rng.normal(10.0, 0.1, size=(10, 5)),
        rng.normal(6.0, 0.1, size=(10, 5)),
    ])
    labels = cut_k(ward_linkage(X), 3).labels
    means = [X[labels == c].mean() for c in range(3)]
    assert means[0] > means[1] > means[2]
    assert np.all(labels[10:20] == 0)
    assert np.all(labels[20:30] == 1)
    assert np.all(labels[:10] == 2)


# -- nesting on generated data ----------------------------------------------

def test_lower_mean_pair_merges_first_on_skewed_mixture():
    """With a small lowest-mean cluster, the two lower-mean clusters of
    the 3-cut form one cluster of the 2-cut; statistically stable."""
    clusters = (
        ClusterSpec(0.62, 16.35, 1.354, ("V21",), 4892.0, 800.0),
        ClusterSpec(0.32, 15.53, 1.386, ("V20", "V19", "V18"), 4628.0, 800.0),
        ClusterSpec(0.06, 14.32, 1.588, ("V20", "V19", "V18"), 5526.0, 800.0),
    )
    nested = 0
    for seed in range(10):
        cfg = GenConfig(n_runs=603, seed=seed, clusters=clusters)
        table, _ = generate(cfg)
        d = ward_linkage(table.output_matrix())
        three = cut_k(d, 3).labels
        two = cut_k(d, 2).labels
        assert refines(three, two)
        lower_pair = set(np.flatnonzero(np.isin(three, (1, 2))).tolist())
        merged = set(np.flatnonzero(two == 1).tolist())
        if lower_pair == merged:
            nested += 1
    assert nested >= 7


# -- serialization ------------------------------------------------------------

def test_dendrogram_json_round_trip():
    rng = np.random.default_rng(13)
    X = rng.normal(size=(8, 2))
    d = ward_linkage(X)
    back = Dendrogram.from_json(d.to_json())
    assert back.n_leaves == d.n_leaves
    assert back.merges == d.merges
    assert np.allclose(back.leaf_scores, d.leaf_scores)


def test_dendrogram_dot_lists_all_edges():
    rng = np.random.default_rng(14)
    X = rng.normal(size=(5, 2))
    d = ward_linkage(X)
    dot = d.to_dot()
    assert dot.startswith("digraph")
    assert dot.count("->") == 2 * len(d.merges)
    for m in d.merges:
        assert f"n{m.left} ->" in dot


def test_leaf_order_is_left_right_traversal():
    X = np.array([[0.0, 0.0], [0.0, 1.0], [5.0, 5.0]])
    d = ward_linkage(X)
    # Root merges leaf 2 (left child) with node 3; node 3 is (0, 1).
    assert d.leaf_order() == [2, 0, 1]
    assert sorted(d.leaves_under(3)) == [0, 1]
