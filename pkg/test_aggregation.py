#!/usr/bin/env python3
"""
Tests for the method bank, score aggregation and the full pipeline
"""
import numpy as np
import pytest

import aggregation
from aggregation import (MethodBank, MethodKind, MethodOutcome, MethodSpec, ScoreVector, armada_scores, rank,
                         run_pipeline, select)
from config import PipelineConfig
from errors import DataError, StageError

SMALL = dict(forest_trees=100, interpret_trees=100, interpret_forests=2, stability_replicates=4, k_max=3,
             q_max=3, seed=13)


def _scores(scores, pvalues):
    scores = np.asarray(scores)
    per_method = np.vstack([scores >= t for t in range(1, 4)])
    return ScoreVector(scores, per_method, ("a", "b", "c"), tuple(f"x{j}" for j in range(scores.size)),
                       np.asarray(pvalues, dtype=float))


def test_method_spec_names_and_validation():
    assert MethodSpec("bh").name == "bh"
    assert MethodSpec("bh", 0.1).name == "bh@0.1"
    assert MethodSpec("lasso").is_test is False
    with pytest.raises(DataError, match="unknown method"):
        MethodSpec("ridge")
    with pytest.raises(DataError):
        MethodSpec("bh", 1.5)


def test_method_spec_from_config():
    assert MethodSpec.from_config({"kind": "qvalue", "alpha": 0.2}) == MethodSpec(MethodKind.QVALUE, 0.2)
    assert MethodSpec.from_config("lasso").to_config() == "lasso"
    with pytest.raises(DataError):
        MethodSpec.from_config({"kind": "bh", "cut": 0.1})


def test_default_bank():
    bank = MethodBank.default()
    assert bank.size == 8
    assert bank.names[0] == "bonferroni"
    assert MethodBank.from_config(None) == bank
    assert MethodBank.from_config(bank.to_config()) == bank


def test_bank_rejects_empty_and_duplicates():
    with pytest.raises(DataError):
        MethodBank(())
    with pytest.raises(DataError, match="duplicated"):
        MethodBank.from_config(["bh", "lasso", "bh"])
    extended = MethodBank.from_config(["bh"]).with_method(MethodSpec("bh", 0.1))
    assert extended.names == ["bh", "bh@0.1"]


def test_select_threshold():
    s = _scores([3, 0, 1, 2], [0.1, 0.2, 0.3, 0.4])
    assert select(s, 1).tolist() == [0, 2, 3]
    assert select(s, 3).tolist() == [0]
    assert select(s, 0).tolist() == [0, 1, 2, 3]
    with pytest.raises(DataError):
        select(s, 4)


def test_rank_breaks_ties_by_pvalue_then_index():
    s = _scores([2, 2, 3, 2, 0], [0.04, 0.01, 0.5, 0.04, 0.001])
    assert rank(s).tolist() == [2, 1, 0, 3, 4]


def test_score_frame():
    s = _scores([2, 0], [0.01, 0.9])
    frame = s.to_frame()
    assert frame.columns.tolist()[:4] == ["name", "score", "rank", "tie_break_p"]
    assert frame["rank"].tolist() == [1, 2]
    assert frame["a"].tolist() == [1, 0]


def test_score_vector_from_outcomes():
    outcomes = [MethodOutcome("m1", np.array([True, False]), np.zeros(2), "adjusted_p"),
                MethodOutcome("m2", np.array([True, True]), np.zeros(2), "importance")]
    s = ScoreVector.from_outcomes(outcomes, ("u", "v"), np.array([0.1, 0.2]))
    assert s.scores.tolist() == [2, 1]
    assert s.size == 2


def test_pipeline_ranks_the_influential_covariates_first(block_data):
    run = run_pipeline(block_data, k=2, config=PipelineConfig(**SMALL))
    assert run.partition.k == 2
    assert run.stability is None
    assert run.scores.size == 8
    assert np.all((run.scores.scores >= 0) & (run.scores.scores <= 8))
    assert set(rank(run.scores)[:2].tolist()) == {0, 1}
    assert [o.name for o in run.outcomes] == MethodBank.default().names


def test_pipeline_is_reproducible(block_data):
    cfg = PipelineConfig(bank=["bh", "lasso"], **SMALL)
    first = armada_scores(block_data, k=2, config=cfg)
    second = armada_scores(block_data, k=2, config=cfg, n_jobs=2)
    np.testing.assert_array_equal(first.scores, second.scores)
    np.testing.assert_array_equal(first.per_method, second.per_method)


def test_pipeline_chooses_k_by_stability(block_data):
    run = run_pipeline(block_data, bank=MethodBank.from_config(["bh"]), config=PipelineConfig(**SMALL))
    assert run.stability is not None
    assert run.partition.k == run.stability.chosen_k
    assert 2 <= run.partition.k <= 3


def test_pipeline_on_continuous_response(regression_data):
    run = run_pipeline(regression_data, k=2, bank=MethodBank.from_config(["bh", "qvalue"]),
                       config=PipelineConfig(**SMALL))
    assert run.scores.scores[:2].min() >= 1


def test_method_failure_is_reported_as_stage_error(block_data, monkeypatch):
    def broken(*args, **kwargs):
        raise ValueError("solver exploded")

    monkeypatch.setattr(aggregation, "fit_lasso_path", broken)
    with pytest.raises(StageError) as info:
        run_pipeline(block_data, k=2, bank=MethodBank.from_config(["lasso"]), config=PipelineConfig(**SMALL))
    assert info.value.stage == "method:lasso"
    assert "solver exploded" in str(info.value)


def test_clustering_failure_is_reported_as_stage_error(block_data):
    with pytest.raises(StageError) as info:
        run_pipeline(block_data, k=20, bank=MethodBank.from_config(["bh"]), config=PipelineConfig(**SMALL))
    assert info.value.stage == "clustering"


def test_select_is_monotone_in_the_threshold():
    s = _scores([3, 1, 0, 2, 3, 1], [0.1] * 6)
    for t in range(3):
        assert set(select(s, t + 1).tolist()) <= set(select(s, t).tolist())
    assert select(s, 3).tolist() == [0, 4]


def test_permuting_covariates_permutes_the_scores(block_data):
    cfg = PipelineConfig(bank=["bonferroni", "bh", "qvalue"], **SMALL)
    perm = np.random.default_rng(21).permutation(block_data.p)
    original = armada_scores(block_data, k=2, config=cfg)
    permuted = armada_scores(block_data.subset(perm), k=2, config=cfg)
    np.testing.assert_array_equal(permuted.scores, original.scores[perm])
    assert permuted.covariate_names == tuple(original.covariate_names[j] for j in perm)
    np.testing.assert_allclose(permuted.tie_break_pvalues, original.tie_break_pvalues[perm], rtol=1e-8)
