#!/usr/bin/env python3
"""
Tests for the univariate association tests
"""
from itertools import combinations

import numpy as np
import pytest
from scipy import stats

from association import (PValueVector, TestKind, pearson_cor_test, raw_pvalues, wilcoxon_columns,
                         wilcoxon_rank_sum)
from errors import DataError


def _enumerated_rank_sum_p(x, labels):
    """Two-sided exact p-value by enumerating every assignment of the group labels."""
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels)
    n, n1 = x.size, int(labels.sum())
    ranks = stats.rankdata(x)
    observed = ranks[labels == 1].sum()
    center = n1 * (n + 1) / 2.0
    sums = np.array([ranks[list(c)].sum() for c in combinations(range(n), n1)])
    return min(1.0, np.mean(np.abs(sums - center) >= abs(observed - center) - 1e-9))


@pytest.mark.parametrize("n, n1, seed", [(n, n1, s) for n in (4, 6, 8, 10) for n1 in range(1, n // 2 + 1)
                                         for s in range(3)])
def test_exact_wilcoxon_matches_enumeration(n, n1, seed):
    rng = np.random.default_rng(100 * n + 10 * n1 + seed)
    x = rng.permutation(n) + rng.uniform(0, 0.5, n)
    labels = np.zeros(n, dtype=int)
    labels[rng.choice(n, n1, replace=False)] = 1
    assert wilcoxon_rank_sum(x, labels) == pytest.approx(_enumerated_rank_sum_p(x, labels), abs=1e-12)


def test_wilcoxon_separated_groups():
    x = [1.0, 2.0, 3.0, 10.0, 11.0, 12.0]
    p = wilcoxon_rank_sum(x, [0, 0, 0, 1, 1, 1])
    assert p == pytest.approx(0.1, abs=1e-12)


def test_wilcoxon_is_symmetric_in_labels():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(30)
    labels = np.repeat([0, 1], 15)
    assert wilcoxon_rank_sum(x, labels) == pytest.approx(wilcoxon_rank_sum(x, 1 - labels))


def test_wilcoxon_ties_use_normal_approximation():
    x = np.array([1, 1, 2, 2, 3, 3, 4, 4], dtype=float)
    labels = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    expected = stats.mannwhitneyu(x[labels == 1], x[labels == 0], alternative="two-sided",
                                  use_continuity=True, method="asymptotic").pvalue
    assert wilcoxon_rank_sum(x, labels) == pytest.approx(expected)


def test_wilcoxon_needs_two_groups():
    with pytest.raises(DataError):
        wilcoxon_rank_sum([1.0, 2.0, 3.0], [1, 1, 1])
    with pytest.raises(DataError):
        wilcoxon_rank_sum([1.0, 2.0, 3.0], [0, 2, 1])


def test_columns_match_single_tests():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((24, 5))
    labels = np.repeat([0, 1], 12)
    columns = wilcoxon_columns(x, labels)
    singles = [wilcoxon_rank_sum(x[:, j], labels) for j in range(5)]
    np.testing.assert_allclose(columns, singles)


def test_pearson_matches_scipy():
    rng = np.random.default_rng(5)
    x = rng.standard_normal(25)
    y = 0.4 * x + rng.standard_normal(25)
    assert pearson_cor_test(x, y) == pytest.approx(stats.pearsonr(x, y)[1], rel=1e-8)


def test_pearson_perfect_correlation():
    x = np.arange(10.0)
    assert pearson_cor_test(x, 2 * x + 1) == pytest.approx(1e-300, abs=1e-299)


def test_pearson_rejects_small_or_constant_input():
    with pytest.raises(DataError, match="at least 4"):
        pearson_cor_test([1.0, 2.0, 3.0], [1.0, 0.0, 2.0])
    with pytest.raises(DataError, match="constant"):
        pearson_cor_test(np.ones(6), np.arange(6.0))


def test_raw_pvalues_dispatch(block_data, regression_data):
    binary = raw_pvalues(block_data)
    assert binary.test_kind is TestKind.WILCOXON
    assert len(binary) == block_data.p
    continuous = raw_pvalues(regression_data)
    assert continuous.test_kind is TestKind.PEARSON
    assert np.all((continuous.values > 0) & (continuous.values <= 1))
    assert continuous.values[:2].max() < 0.01


def test_pvalue_vector_frame():
    pv = PValueVector(np.array([0.5, 0.0]), TestKind.PEARSON, ("a", "b"))
    frame = pv.to_frame()
    assert frame["p"].tolist() == [0.5, 1e-300]
