"""
Random-forest selection: out-of-bag permutation importance, the importance
threshold step and the nested-model interpretation step.

Trees are grown one by one on bootstrap samples so every tree has its own RNG
stream derived from (seed, tree index) and its own out-of-bag sample.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from sklearn.tree import DecisionTreeClassifier, DecisionTreeRegressor

from dataset import ResponseVariable
from errors import DataError
from rng import derive_rng, derive_seed

logger = logging.getLogger(__name__)

MIN_TREES = 100
MAX_INTERPRET_MODELS = 100
# CART on the importance standard deviations
THRESHOLD_MIN_SPLIT = 20
THRESHOLD_MIN_LEAF = 7
THRESHOLD_CP = 0.01


@dataclass(frozen=True)
class ForestImportance:
    importances: np.ndarray
    importance_sds: np.ndarray
    n_trees: int
    mtry: int
    oob_error: float

    def order(self) -> np.ndarray:
        """Covariate indices by decreasing mean importance (stable)."""
        return np.argsort(-self.importances, kind="mergesort")

    def to_frame(self, names: Sequence[str] = ()) -> pd.DataFrame:
        names = list(names) or [f"X{j + 1}" for j in range(self.importances.shape[0])]
        return pd.DataFrame({"name": names, "importance": self.importances, "sd": self.importance_sds})


def default_mtry(p: int, binary: bool) -> int:
    return max(1, int(np.floor(np.sqrt(p))) if binary else int(np.floor(p / 3)))


def _predict(tree, x: np.ndarray, binary: bool) -> np.ndarray:
    if not binary:
        return tree.predict(x)
    classes = list(tree.classes_)
    if 1 not in classes:
        return np.zeros(x.shape[0])
    return tree.predict_proba(x)[:, classes.index(1)]


def _loss(pred: np.ndarray, y: np.ndarray, binary: bool) -> float:
    if binary:
        return float(np.mean((pred > 0.5) != (y > 0.5)))
    return float(np.mean((pred - y) ** 2))


def _grow_tree(x, y, binary, mtry, leaf, seed, index, with_importance):
    rng = derive_rng(seed, index)
    n, p = x.shape
    rows = rng.integers(0, n, size=n)
    in_bag = np.zeros(n, dtype=bool)
    in_bag[rows] = True
    oob = np.flatnonzero(~in_bag)

    cls = DecisionTreeClassifier if binary else DecisionTreeRegressor
    tree = cls(max_features=mtry, min_samples_leaf=leaf, random_state=derive_seed(seed, index, 1))
    tree.fit(x[rows], y[rows].astype(int) if binary else y[rows])

    importance = np.zeros(p)
    if oob.size == 0:
        return importance, oob, np.zeros(0)
    x_oob = x[oob].copy()
    pred = _predict(tree, x_oob, binary)
    if with_importance:
        base = _loss(pred, y[oob], binary)
        features = tree.tree_.feature
        # unused covariates cannot change the tree's predictions
        for j in np.unique(features[features >= 0]):
            saved = x_oob[:, j].copy()
            x_oob[:, j] = saved[rng.permutation(oob.size)]
            importance[j] = _loss(_predict(tree, x_oob, binary), y[oob], binary) - base
            x_oob[:, j] = saved
    return importance, oob, pred


def grow_forest(x: np.ndarray, y: ResponseVariable, n_trees: int = 500, mtry: Optional[int] = None,
                seed: int = 0, n_jobs: int = 1, with_importance: bool = True) -> ForestImportance:
    """
    Grow a forest of CART trees and compute out-of-bag permutation importances.

    Gini splits with leaf size 1 for a binary response, variance splits with leaf
    size 5 for a continuous one. ``importance_sds`` is the standard error of the
    mean importance over trees.
    """
    if n_trees < MIN_TREES:
        raise DataError(f"a forest needs at least {MIN_TREES} trees, got {n_trees}")
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, p = x.shape
    binary = y.is_binary
    values = np.asarray(y.values, dtype=float)
    mtry = default_mtry(p, binary) if mtry is None else int(mtry)
    if not 1 <= mtry <= p:
        raise DataError(f"mtry must be in [1, {p}], got {mtry}")
    leaf = 1 if binary else 5

    trees = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_grow_tree)(x, values, binary, mtry, leaf, seed, t, with_importance) for t in range(n_trees)
    )

    per_tree = np.vstack([imp for imp, _, _ in trees])
    totals = np.zeros(n)
    counts = np.zeros(n)
    for _, oob, pred in trees:
        totals[oob] += pred
        counts[oob] += 1
    seen = counts > 0
    oob_error = _loss(totals[seen] / counts[seen], values[seen], binary) if seen.any() else float("nan")

    importances = per_tree.mean(axis=0)
    sds = per_tree.std(axis=0, ddof=1) / np.sqrt(n_trees)
    return ForestImportance(importances, sds, n_trees, mtry, oob_error)


def forest_threshold_step(imp: ForestImportance) -> np.ndarray:
    """
    Covariates whose mean importance reaches the threshold, in decreasing importance order.

    The threshold is the smallest prediction of a regression tree fitted to the
    importance standard deviations against importance rank.
    """
    order = imp.order()
    ranks = np.arange(1, order.size + 1, dtype=float)[:, None]
    sds = imp.importance_sds[order]
    cart = DecisionTreeRegressor(min_samples_split=THRESHOLD_MIN_SPLIT, min_samples_leaf=THRESHOLD_MIN_LEAF,
                                 min_impurity_decrease=THRESHOLD_CP * float(np.var(sds)), random_state=0)
    cart.fit(ranks, sds)
    threshold = float(cart.predict(ranks).min())
    retained = order[imp.importances[order] >= threshold]
    logger.debug(f"forest threshold {threshold:.4g}: {retained.size} covariates retained")
    return retained


def forest_interpret_step(x: np.ndarray, y: ResponseVariable, retained: Sequence[int], seed: int = 0,
                          n_trees: int = 100, n_forests: int = 3, n_jobs: int = 1,
                          max_models: int = MAX_INTERPRET_MODELS) -> np.ndarray:
    """
    Nested forests on the top-j retained covariates (j = 1..min(|retained|, max_models));
    keeps the smallest j whose mean OOB error is within one sd of the best model's.
    """
    retained = np.asarray(retained, dtype=int)
    if retained.size == 0:
        return retained
    if n_forests < 2:
        raise DataError(f"the interpretation step needs at least 2 forests per model, got {n_forests}")
    x = np.asarray(x, dtype=float)
    n_models = min(retained.size, max_models)

    def model_errors(j: int) -> np.ndarray:
        sub = x[:, retained[:j]]
        return np.array([
            grow_forest(sub, y, n_trees, seed=derive_seed(seed, j, r), with_importance=False).oob_error
            for r in range(n_forests)
        ])

    errors = Parallel(n_jobs=n_jobs, prefer="threads")(delayed(model_errors)(j) for j in range(1, n_models + 1))
    errors = np.vstack(errors)
    mean = errors.mean(axis=1)
    sd = errors.std(axis=1, ddof=1)
    best = int(np.argmin(mean))
    chosen = int(np.flatnonzero(mean <= mean[best] + sd[best])[0]) + 1
    logger.debug(f"forest interpretation: best model {best + 1}, chosen {chosen} of {n_models}")
    return retained[:chosen]


def forest_selection(x: np.ndarray, y: ResponseVariable, n_trees: int, seed: int,
                     n_jobs: int = 1) -> Tuple[ForestImportance, np.ndarray]:
    """Grow a forest and apply the threshold step."""
    imp = grow_forest(x, y, n_trees, seed=seed, n_jobs=n_jobs)
    return imp, forest_threshold_step(imp)
