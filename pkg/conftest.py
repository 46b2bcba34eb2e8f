"""
Shared pytest setup: ``src/`` on the import path, the ``slow`` marker and small
datasets used across the test modules.
"""
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent / "src"))

from dataset import Dataset, ResponseKind, ResponseVariable  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run Monte-Carlo tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte-Carlo test, only run with --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def make_block_data(n=40, blocks=(6, 6), shift=1.5, influential=2, seed=0, binary=True):
    """
    Two-class (or continuous) data with one shared factor per block and a response
    effect on the first ``influential`` covariates of the first block.
    """
    rng = np.random.default_rng(seed)
    if binary:
        y = np.repeat([0.0, 1.0], n // 2)
    else:
        y = rng.standard_normal(n)
    columns = []
    for size in blocks:
        factor = rng.standard_normal((n, 1))
        loadings = rng.uniform(0.7, 1.0, size=(1, size))
        columns.append(factor @ loadings + 0.5 * rng.standard_normal((n, size)))
    x = np.hstack(columns)
    effect = (y == 0) if binary else y
    x[:, :influential] += shift * np.asarray(effect, dtype=float)[:, None]
    names = tuple(f"g{j + 1}" for j in range(x.shape[1]))
    kind = ResponseKind.BINARY if binary else ResponseKind.CONTINUOUS
    return Dataset(x, names, ResponseVariable(kind, y, "y"))


@pytest.fixture
def block_data():
    return make_block_data()


@pytest.fixture
def regression_data():
    return make_block_data(binary=False, shift=1.0, seed=3)


@pytest.fixture
def unshifted_block_data():
    """Two clean blocks with no response effect."""
    return make_block_data(shift=0.0)
