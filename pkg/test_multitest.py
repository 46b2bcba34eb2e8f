#!/usr/bin/env python3
"""
Tests for the multiple-testing procedures
"""
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from errors import DataError
from multitest import (AdjustMethod, adjust, benjamini_hochberg, bonferroni, estimate_pi0, factor_adjusted_selection,
                       local_fdr, storey_qvalue)

SIX = np.array([0.001, 0.008, 0.039, 0.041, 0.042, 0.6])


def _naive_step_up(p, alpha):
    """Reject the k smallest p-values, k the largest i with p_(i) <= i alpha / m."""
    m = len(p)
    order = np.argsort(p)
    passing = [i for i in range(1, m + 1) if p[order[i - 1]] <= i * alpha / m]
    k = max(passing) if passing else 0
    rejected = np.zeros(m, dtype=bool)
    rejected[order[:k]] = True
    return rejected


@pytest.mark.parametrize("alpha", [0.01, 0.05, 0.1])
def test_bh_matches_naive_step_up_on_all_permutations(alpha):
    for perm in permutations(range(6)):
        p = SIX[list(perm)]
        selected = benjamini_hochberg(p).values <= alpha
        np.testing.assert_array_equal(selected, _naive_step_up(p, alpha))


def test_bh_known_values():
    adjusted = benjamini_hochberg([0.01, 0.04, 0.03, 0.02]).values
    np.testing.assert_allclose(adjusted, [0.04, 0.04, 0.04, 0.04])


def test_bonferroni():
    np.testing.assert_allclose(bonferroni([0.01, 0.2, 0.5]).values, [0.03, 0.6, 1.0])


def test_selected_indices_at_alpha():
    adjusted = bonferroni([0.01, 0.2, 0.5])
    assert adjusted.selected().tolist() == [0]
    assert adjusted.selected(0.7).tolist() == [0, 1]
    assert adjusted.selected(0.01).size == 0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=40))
def test_adjusted_values_dominate_raw_and_keep_order(p):
    p = np.array(p)
    for method in (bonferroni, benjamini_hochberg, storey_qvalue):
        adjusted = method(p).values
        assert np.all(adjusted <= 1.0)
        if method is not storey_qvalue:
            assert np.all(adjusted >= p - 1e-12)
        order = np.argsort(p, kind="mergesort")
        assert np.all(np.diff(adjusted[order]) >= -1e-12)


def test_empty_input():
    assert benjamini_hochberg([]).values.size == 0
    assert storey_qvalue([]).values.size == 0


def test_invalid_pvalues_rejected():
    with pytest.raises(DataError):
        benjamini_hochberg([0.2, 1.5])
    with pytest.raises(DataError):
        bonferroni([np.nan])


def test_qvalue_with_pi0_one_equals_bh():
    rng = np.random.default_rng(0)
    p = rng.uniform(size=200)
    np.testing.assert_allclose(storey_qvalue(p, pi0=1.0).values, benjamini_hochberg(p).values)


def test_pi0_estimate_on_uniform_and_mixture():
    rng = np.random.default_rng(1)
    uniform = rng.uniform(size=2000)
    assert estimate_pi0(uniform) > 0.85
    mixture = np.concatenate([rng.uniform(size=1600), rng.beta(0.1, 10, size=400)])
    assert 0.65 <= estimate_pi0(mixture) <= 0.95
    assert estimate_pi0(uniform[:10]) == 1.0


def test_qvalue_records_pi0():
    result = storey_qvalue(np.linspace(0.001, 1, 100))
    assert result.method is AdjustMethod.QVALUE
    assert 0.0 < result.pi0_hat <= 1.0


def test_local_fdr_small_m_reports_one():
    result = local_fdr(np.full(50, 0.01))
    assert result.fallback
    np.testing.assert_array_equal(result.values, np.ones(50))


def test_local_fdr_null_and_signal():
    rng = np.random.default_rng(3)
    z = np.concatenate([rng.standard_normal(1800), rng.normal(4.0, 1.0, 200)])
    p = stats.norm.sf(z)
    result = local_fdr(p)
    assert np.all((result.values >= 0) & (result.values <= 1))
    assert np.median(result.values[:1800]) > 0.8
    assert np.mean(result.values[1800:] < 0.2) > 0.5
    if not result.fallback:
        assert abs(result.null_mean) < 0.3
        assert 0.7 < result.null_sd < 1.3


def test_local_fdr_monotone_in_upper_tail():
    rng = np.random.default_rng(4)
    z = np.concatenate([rng.standard_normal(900), rng.normal(3.5, 1.0, 100)])
    result = local_fdr(stats.norm.sf(z))
    upper = np.flatnonzero(z >= result.null_mean)
    order = upper[np.argsort(z[upper])]
    assert np.all(np.diff(result.values[order]) <= 1e-12)


def test_adjust_dispatch():
    p = np.array([0.01, 0.02, 0.5])
    assert adjust("bh", p).method is AdjustMethod.BH
    np.testing.assert_allclose(adjust(AdjustMethod.BONFERRONI, p).values, bonferroni(p).values)
    with pytest.raises(DataError):
        adjust("factor_adjusted", p)


def test_factor_adjusted_selection_on_block(block_data):
    x = np.asarray(block_data.matrix)[:, :6]
    result = factor_adjusted_selection(x, block_data.response, 3, block_data.covariate_names[:6])
    assert result.method is AdjustMethod.FACTOR_ADJUSTED
    assert result.n_factors is not None and 0 <= result.n_factors <= 3
    assert result.values[:2].max() < result.values[2:].min()
