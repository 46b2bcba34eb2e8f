#!/usr/bin/env python3
"""
Tests for the per-cluster factor model and decorrelation
"""
import numpy as np
import pytest

from covclust import Partition
from dataset import ResponseVariable
from errors import DataError, StageError
from factor_model import (common_variance, decorrelate, fit_factor_model, pretreat, residual_correlation_energy,
                          response_regression, select_num_factors)
from rng import derive_rng
from simulation import simulate_cluster


def _factor_block(n=60, p=30, q=2, seed=0, comvar=0.8):
    rng = np.random.default_rng(seed)
    y = ResponseVariable("binary", np.repeat([0.0, 1.0], n // 2))
    x = simulate_cluster(p, q, comvar, n, seed)
    x[:, :3] += 1.0 * (y.values == 0)[:, None]
    return x, y, rng


@pytest.mark.parametrize("seed", range(20))
def test_em_loglik_is_monotone(seed):
    rng = derive_rng(seed, 99)
    n, p, q = int(rng.integers(20, 50)), int(rng.integers(4, 15)), int(rng.integers(1, 4))
    y = ResponseVariable("continuous", rng.standard_normal(n))
    x = simulate_cluster(p, q, 0.6, n, seed)
    model = fit_factor_model(x, y, q)
    history = np.array(model.loglik_history)
    assert np.all(np.diff(history) >= -1e-8 * np.abs(history[:-1]))


def test_zero_factor_model_is_identity():
    x, y, _ = _factor_block(p=5)
    model = fit_factor_model(x, y, 0)
    assert model.q == 0
    assert model.common_variance == 0.0
    np.testing.assert_array_equal(decorrelate(x, model), x)


def test_fit_rejects_too_many_factors():
    x, y, _ = _factor_block(n=10, p=5)
    with pytest.raises(DataError):
        fit_factor_model(x, y, 5)


def test_specific_variances_positive_and_common_variance_in_range():
    x, y, _ = _factor_block()
    model = fit_factor_model(x, y, 2)
    assert np.all(model.specific_variances > 0)
    assert 0.0 <= model.common_variance < 1.0
    assert model.common_variance == pytest.approx(common_variance(model))
    assert model.common_variance > 0.5


def test_decorrelation_keeps_the_response_effect():
    x, y, _ = _factor_block(seed=4)
    model = fit_factor_model(x, y, 2)
    x_star = decorrelate(x, model)
    coef, _ = response_regression(x, y)
    coef_star, _ = response_regression(x_star, y)
    # scores are orthogonal to (1, Y) so the fitted response effect is unchanged
    np.testing.assert_allclose(coef_star, coef, atol=1e-8)


def test_decorrelation_reduces_correlation_energy():
    x, y, _ = _factor_block(seed=5)
    model = fit_factor_model(x, y, 2)
    before = residual_correlation_energy(x, y)
    after = residual_correlation_energy(decorrelate(x, model), y)
    assert after < before


def test_decorrelate_checks_shape():
    x, y, _ = _factor_block(p=6)
    model = fit_factor_model(x, y, 1)
    with pytest.raises(DataError):
        decorrelate(x[:, :5], model)


def test_select_num_factors_bounds():
    x, y, _ = _factor_block(n=10, p=4)
    with pytest.raises(DataError):
        select_num_factors(x, y, 4)
    assert select_num_factors(x, y, 0) == 0


def test_select_num_factors_finds_structure():
    x, y, _ = _factor_block(p=40, q=3, seed=8)
    q = select_num_factors(x, y, 6)
    assert 2 <= q <= 4


@pytest.mark.slow
def test_select_num_factors_recovers_four_factors():
    hits = 0
    for seed in range(10):
        y = ResponseVariable("binary", np.repeat([0.0, 1.0], 30))
        x = simulate_cluster(400, 4, 0.8, 60, seed)
        hits += select_num_factors(x, y, 12) in (3, 4, 5)
    assert hits >= 8


def test_pretreat_singletons_and_order(block_data):
    labels = [1] * 6 + [2] * 5 + [3]
    partition = Partition.from_labels(labels, block_data.covariate_names)
    corrected = pretreat(block_data, partition, q_max=3)
    assert corrected.factor_counts[2] == 0
    np.testing.assert_array_equal(corrected.matrix[:, 11], block_data.matrix[:, 11])
    assert corrected.covariate_names == block_data.covariate_names
    assert corrected.as_dataset().p == block_data.p


def test_pretreat_is_independent_of_jobs(block_data):
    partition = Partition.from_labels([1] * 6 + [2] * 6, block_data.covariate_names)
    one = pretreat(block_data, partition, 3, n_jobs=1)
    two = pretreat(block_data, partition, 3, n_jobs=2)
    np.testing.assert_array_equal(one.matrix, two.matrix)


def test_pretreat_checks_partition_size(block_data):
    with pytest.raises(DataError):
        pretreat(block_data, Partition.single(5), 3)


def test_pretreat_reports_failing_cluster(block_data, monkeypatch):
    import factor_model

    def broken(*args, **kwargs):
        raise np.linalg.LinAlgError("singular")

    monkeypatch.setattr(factor_model, "select_num_factors", broken)
    partition = Partition.from_labels([1] * 6 + [2] * 6)
    with pytest.raises(StageError) as info:
        pretreat(block_data, partition, 3)
    assert info.value.stage == "pretreatment"
    assert info.value.cluster == 1
