#!/usr/bin/env python3
"""
Tests for settings and pipeline configuration resolution
"""
import json

import pytest

from config import PipelineConfig, resolve_config
from errors import DataError
from settings import Settings, settings


def test_settings_defaults_are_valid():
    assert Settings.validate()
    data = settings.as_dict()
    assert data["q_max"] == settings.Q_MAX
    assert set(data) >= {"seed", "alpha", "threshold", "forest_trees"}


def test_is_production(monkeypatch):
    monkeypatch.setattr(Settings, "ENVIRONMENT", "Production")
    assert Settings.is_production()
    monkeypatch.setattr(Settings, "ENVIRONMENT", "development")
    assert not Settings.is_production()


def test_default_config_follows_settings():
    cfg = PipelineConfig()
    assert cfg.seed == settings.SEED
    assert cfg.clusters is None
    assert cfg.bank is None
    assert cfg.to_dict()["clusters"] == "auto"


@pytest.mark.parametrize("value, expected", [("auto", None), ("AUTO", None), (None, None), (3, 3), ("4", 4)])
def test_clusters_parsing(value, expected):
    assert PipelineConfig(clusters=value).clusters == expected


@pytest.mark.parametrize("value", [0, -2, "many"])
def test_bad_clusters(value):
    with pytest.raises(DataError, match="clusters"):
        PipelineConfig(clusters=value)


def test_validation_collects_every_problem():
    with pytest.raises(DataError) as info:
        PipelineConfig(alpha=1.5, lasso_folds=2, linkage="ward")
    message = str(info.value)
    assert "alpha" in message and "lasso_folds" in message and "linkage" in message


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(DataError, match="unknown configuration keys: colour"):
        PipelineConfig.from_dict({"threshold": 2, "colour": "red"})


def test_merged_ignores_none_and_resets_clusters():
    cfg = PipelineConfig(clusters=3, threshold=2)
    merged = cfg.merged(threshold=None, seed=9)
    assert (merged.threshold, merged.seed, merged.clusters) == (2, 9, 3)
    assert cfg.merged(clusters="auto").clusters is None
    with pytest.raises(DataError):
        cfg.merged(speed=3)


def test_resolve_config_layers(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"threshold": 3, "clusters": 2, "bank": ["bh", "lasso"], "seed": 5}))
    cfg = resolve_config(str(path), seed=11)
    assert cfg.threshold == 3
    assert cfg.clusters == 2
    assert cfg.bank == ["bh", "lasso"]
    assert cfg.seed == 11


def test_resolve_config_file_errors(tmp_path):
    with pytest.raises(DataError, match="not found"):
        resolve_config(str(tmp_path / "missing.json"))
    broken = tmp_path / "broken.json"
    broken.write_text("{threshold: 1")
    with pytest.raises(DataError, match="not valid JSON"):
        resolve_config(str(broken))
    listed = tmp_path / "list.json"
    listed.write_text("[1, 2]")
    with pytest.raises(DataError, match="JSON object"):
        resolve_config(str(listed))
