"""
Univariate association tests between each covariate and the response:
Wilcoxon rank-sum for a binary response, Pearson correlation t-test for a continuous one.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from errors import DataError

logger = logging.getLogger(__name__)

P_MIN = 1e-300
EXACT_MAX_N = 20


class TestKind(str, Enum):
    WILCOXON = "wilcoxon"
    PEARSON = "pearson"

    __test__ = False


def _clamp(p):
    return np.clip(p, P_MIN, 1.0)


@dataclass(frozen=True)
class PValueVector:
    values: np.ndarray
    test_kind: TestKind
    covariate_names: Tuple[str, ...]

    def __post_init__(self):
        values = _clamp(np.asarray(self.values, dtype=float))
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"name": list(self.covariate_names), "p": self.values})


def _groups(labels) -> np.ndarray:
    labels = np.asarray(labels)
    groups = labels.astype(int)
    if not np.all(np.isin(groups, (0, 1))) or not np.array_equal(groups, labels.astype(float)):
        raise DataError("Wilcoxon test needs labels coded 0/1")
    if groups.sum() == 0 or groups.sum() == groups.size:
        raise DataError("Wilcoxon test needs two non-empty groups")
    return groups


def wilcoxon_columns(x: np.ndarray, labels) -> np.ndarray:
    """Two-sided rank-sum p-values for every column of ``x``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    groups = _groups(labels)
    first, second = x[groups == 1], x[groups == 0]
    n = x.shape[0]

    tied = np.any(np.diff(np.sort(x, axis=0), axis=0) == 0, axis=0)
    exact = ~tied if n <= EXACT_MAX_N else np.zeros(x.shape[1], dtype=bool)
    p = np.empty(x.shape[1])
    if exact.any():
        p[exact] = stats.mannwhitneyu(first[:, exact], second[:, exact], alternative="two-sided",
                                      method="exact", axis=0).pvalue
    if (~exact).any():
        p[~exact] = stats.mannwhitneyu(first[:, ~exact], second[:, ~exact], alternative="two-sided",
                                       use_continuity=True, method="asymptotic", axis=0).pvalue
    return _clamp(p)


def wilcoxon_rank_sum(x, labels) -> float:
    """
    Two-sided Wilcoxon rank-sum p-value.

    Exact null distribution when n <= 20 and there are no ties, normal approximation
    with tie and continuity corrections otherwise.
    """
    return float(wilcoxon_columns(np.asarray(x, dtype=float)[:, None], labels)[0])


def pearson_columns(x: np.ndarray, y, names=()) -> np.ndarray:
    """Two-sided Pearson correlation t-test p-values for every column of ``x``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if n < 4:
        raise DataError(f"correlation test needs at least 4 samples, got {n}")
    if np.ptp(y) == 0:
        raise DataError("correlation test on a constant response")
    constant = np.flatnonzero(np.ptp(x, axis=0) == 0)
    if constant.size:
        j = int(constant[0])
        label = names[j] if len(names) > j else f"column {j}"
        raise DataError(f"correlation test on constant covariate '{label}'")

    xc = x - x.mean(axis=0)
    yc = y - y.mean()
    r = (xc.T @ yc) / (np.linalg.norm(xc, axis=0) * np.linalg.norm(yc))
    r = np.clip(r, -1.0, 1.0)
    with np.errstate(divide="ignore"):
        t = r * np.sqrt((n - 2) / np.maximum(1.0 - r * r, 0.0))
    p = 2.0 * stats.t.sf(np.abs(t), df=n - 2)
    return _clamp(p)


def pearson_cor_test(x, y) -> float:
    """Two-sided p-value of t = r sqrt((n-2)/(1-r^2)) with n-2 degrees of freedom."""
    return float(pearson_columns(np.asarray(x, dtype=float)[:, None], y)[0])


def raw_pvalues(data, test: Optional[TestKind] = None) -> PValueVector:
    """
    Apply the response-matched test to every column.

    ``data`` is anything with ``matrix``, ``response`` and ``covariate_names``
    (a Dataset or a CorrectedDataset).
    """
    response = data.response
    kind = TestKind(test) if test is not None else (
        TestKind.WILCOXON if response.is_binary else TestKind.PEARSON)
    x = np.asarray(data.matrix, dtype=float)
    if kind is TestKind.WILCOXON:
        values = wilcoxon_columns(x, response.values)
    else:
        values = pearson_columns(x, response.values, data.covariate_names)
    return PValueVector(values, kind, tuple(data.covariate_names))
