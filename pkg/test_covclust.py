#!/usr/bin/env python3
"""
Tests for clustering of covariates
"""
import numpy as np
import pytest

from covclust import (Partition, build_hierarchy, cluster_homogeneity, first_principal_component,
                      hierarchical_cluster, stability_select_k)
from dataset import standardize, standardize_array
from errors import DataError


def _two_blocks(n=50, sizes=(5, 5), noise=0.3, seed=1):
    rng = np.random.default_rng(seed)
    cols = []
    for size in sizes:
        f = rng.standard_normal((n, 1))
        cols.append(f + noise * rng.standard_normal((n, size)))
    values, _, _ = standardize_array(np.hstack(cols))
    return values


@pytest.mark.parametrize("seed", range(50))
def test_first_component_eigenvalue_matches_dense_solver(seed):
    rng = np.random.default_rng(seed)
    n, m = rng.integers(10, 30), rng.integers(2, 9)
    mixing = rng.standard_normal((m, m))
    x, _, _ = standardize_array(rng.standard_normal((n, m)) @ mixing)
    _, eigenvalue = first_principal_component(x)
    expected = np.linalg.eigvalsh(np.corrcoef(x, rowvar=False))[-1]
    assert eigenvalue == pytest.approx(expected, abs=1e-8)
    assert cluster_homogeneity(x) == pytest.approx(expected, abs=1e-8)


def test_first_component_sign_convention():
    x = _two_blocks(sizes=(4,))
    scores, _ = first_principal_component(x)
    scores_neg, _ = first_principal_component(-x)
    np.testing.assert_allclose(scores_neg, -scores, atol=1e-8)


def test_homogeneity_bounds():
    x = _two_blocks(sizes=(6,))
    h = cluster_homogeneity(x)
    assert 1.0 <= h <= 6.0 + 1e-9


def test_two_blocks_recovered():
    x = _two_blocks()
    partition = hierarchical_cluster(x, 2)
    assert partition.k == 2
    assert len(set(partition.labels[:5])) == 1
    assert len(set(partition.labels[5:])) == 1
    assert partition.labels[0] != partition.labels[5]


def test_largest_jump_finds_the_blocks():
    partition = hierarchical_cluster(_two_blocks(noise=0.2), None)
    assert partition.k == 2


def test_cut_at_one_and_p():
    x = _two_blocks(sizes=(3, 3))
    tree = build_hierarchy(x)
    assert tree.cut(1).k == 1
    assert sorted(tree.cut(6).labels.tolist()) == [1, 2, 3, 4, 5, 6]
    with pytest.raises(DataError):
        tree.cut(7)


def test_labels_numbered_by_first_appearance():
    partition = hierarchical_cluster(_two_blocks(sizes=(3, 3)), 2)
    assert partition.labels[0] == 1


def test_merge_heights_non_negative_and_total_homogeneity():
    x = _two_blocks(sizes=(4, 4))
    tree = build_hierarchy(x)
    assert np.all(tree.merge_heights >= 0)
    assert tree.total_homogeneity(8) == pytest.approx(8.0)
    two = tree.cut(2)
    expected = sum(cluster_homogeneity(x[:, cols]) for cols in two.clusters())
    assert tree.total_homogeneity(2) == pytest.approx(expected, rel=1e-6)


def test_hierarchy_needs_two_covariates():
    with pytest.raises(DataError):
        build_hierarchy(np.ones((5, 1)))


def test_invalid_k():
    with pytest.raises(DataError):
        hierarchical_cluster(_two_blocks(sizes=(2, 2)), 5)


def test_partition_frame_and_single():
    single = Partition.single(3, ("a", "b", "c"))
    frame = single.to_frame()
    assert list(frame.columns) == ["covariate_name", "cluster_label"]
    assert frame["cluster_label"].tolist() == [1, 1, 1]
    assert Partition.from_labels([7, 7, 3]).labels.tolist() == [1, 1, 2]


def test_dendrogram_json_has_every_merge():
    tree = build_hierarchy(_two_blocks(sizes=(3, 3)))
    data = tree.to_json()
    assert len(data["merges"]) == 5
    assert data["merges"][-1]["size"] == 6


def test_stability_selects_block_count(unshifted_block_data):
    curve = stability_select_k(standardize(unshifted_block_data), 10, 4, seed=7)
    assert curve.k_values.tolist() == [2, 3, 4]
    assert np.all((curve.mean_stability >= 0) & (curve.mean_stability <= 1))
    assert curve.chosen_k == 2


def test_stability_is_deterministic_across_jobs():
    x = _two_blocks(sizes=(4, 4))
    one = stability_select_k(x, 6, 3, seed=11, n_jobs=1)
    two = stability_select_k(x, 6, 3, seed=11, n_jobs=2)
    np.testing.assert_array_equal(one.replicate_scores, two.replicate_scores)


def test_stability_rejects_bad_arguments():
    x = _two_blocks(sizes=(2, 2))
    with pytest.raises(DataError):
        stability_select_k(x, 1, 2, seed=0)
    with pytest.raises(DataError):
        stability_select_k(x, 5, 4, seed=0)
