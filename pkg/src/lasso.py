"""
Cross-validated Lasso selection: least squares for a continuous response,
logistic loss for a binary one, both over the same log-spaced lambda path.
"""
import logging
import warnings
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from joblib import Parallel, delayed
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import LogisticRegression, lasso_path
from sklearn.model_selection import KFold, StratifiedKFold

from dataset import ResponseVariable
from errors import DataError
from rng import STREAM_LASSO, derive_seed

logger = logging.getLogger(__name__)

N_LAMBDAS = 100
LAMBDA_RATIO = 1e-3
CD_TOL = 1e-10
CD_MAX_ITER = 100_000
SAGA_TOL = 1e-6
SAGA_MAX_ITER = 5_000
ZERO_TOL = 1e-10
RULES = ("min", "1se")


@dataclass(frozen=True)
class LassoFit:
    """Lasso path on the standardized covariates with its cross-validation curve."""

    lambda_path: np.ndarray
    coefficients: np.ndarray       # n_lambdas x p, standardized scale
    intercepts: np.ndarray
    cv_mean: np.ndarray
    cv_se: np.ndarray
    chosen_index: int
    rule: str
    converged: np.ndarray

    @property
    def chosen_lambda(self) -> float:
        return float(self.lambda_path[self.chosen_index])

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))

    @property
    def selected(self) -> np.ndarray:
        return np.flatnonzero(self.coefficients[self.chosen_index] != 0.0)

    def to_json(self) -> dict:
        return {
            "lambda_path": self.lambda_path.tolist(),
            "cv_mean": self.cv_mean.tolist(),
            "cv_se": self.cv_se.tolist(),
            "chosen_lambda": self.chosen_lambda,
            "rule": self.rule,
            "selected": self.selected.tolist(),
            "converged": self.all_converged,
        }


def _standardize_columns(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Standardized copy of x; constant columns are zeroed and reported in the mask."""
    sd = x.std(axis=0, ddof=1)
    usable = sd > 0
    z = np.zeros_like(x)
    z[:, usable] = (x[:, usable] - x[:, usable].mean(axis=0)) / sd[usable]
    return z, usable


def lambda_grid(x: np.ndarray, y: np.ndarray, n_lambdas: int = N_LAMBDAS,
                ratio: float = LAMBDA_RATIO) -> np.ndarray:
    """Log-spaced path from the smallest lambda zeroing every coefficient down to ratio * lambda_max."""
    n = x.shape[0]
    lambda_max = float(np.max(np.abs(x.T @ (y - y.mean()))) / n)
    if lambda_max <= 0:
        raise DataError("response is orthogonal to every covariate; the lasso path is empty")
    return np.logspace(np.log10(lambda_max), np.log10(ratio * lambda_max), n_lambdas)


def _gaussian_path(x, y, lambdas):
    y_mean = y.mean()
    x_mean = x.mean(axis=0)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        _, coefs, _ = lasso_path(x - x_mean, y - y_mean, alphas=lambdas, tol=CD_TOL, max_iter=CD_MAX_ITER)
    ok = not any(issubclass(w.category, ConvergenceWarning) for w in caught)
    coefs = coefs.T
    intercepts = y_mean - coefs @ x_mean
    return coefs, intercepts, np.full(lambdas.shape[0], ok)


def _logistic_path(x, y, lambdas, seed):
    n, p = x.shape
    coefs = np.zeros((lambdas.shape[0], p))
    intercepts = np.zeros(lambdas.shape[0])
    converged = np.ones(lambdas.shape[0], dtype=bool)
    model = LogisticRegression(penalty="l1", solver="saga", tol=SAGA_TOL, max_iter=SAGA_MAX_ITER,
                               warm_start=True, random_state=seed)
    for i, lam in enumerate(lambdas):
        model.set_params(C=1.0 / (n * lam))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ConvergenceWarning)
            model.fit(x, y.astype(int))
        converged[i] = not any(issubclass(w.category, ConvergenceWarning) for w in caught)
        coefs[i] = model.coef_.ravel()
        intercepts[i] = model.intercept_[0]
    return coefs, intercepts, converged


def _clean_path(coefs: np.ndarray) -> np.ndarray:
    """Exact zeros at lambda_max and for solver residue below ZERO_TOL times the largest coefficient."""
    coefs = coefs.copy()
    coefs[0] = 0.0
    scale = float(np.max(np.abs(coefs)))
    coefs[np.abs(coefs) <= ZERO_TOL * scale] = 0.0
    return coefs


def _path(x, y, binary, lambdas, seed):
    if binary:
        return _logistic_path(x, y, lambdas, seed)
    return _gaussian_path(x, y, lambdas)


def _fold_errors(x, y, binary, lambdas, train, test, seed):
    coefs, intercepts, _ = _path(x[train], y[train], binary, lambdas, seed)
    eta = x[test] @ coefs.T + intercepts
    if binary:
        y_test = y[test][:, None]
        # mean binomial deviance
        return np.mean(2.0 * (np.logaddexp(0.0, eta) - y_test * eta), axis=0)
    return np.mean((y[test][:, None] - eta) ** 2, axis=0)


def _splitter(y, binary, folds, seed):
    if binary:
        smallest = int(np.bincount(y.astype(int), minlength=2).min())
        if smallest >= folds:
            return StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
        logger.warning(f"⚠️  smallest class has {smallest} samples for {folds} folds; using unstratified folds")
    return KFold(n_splits=folds, shuffle=True, random_state=seed)


def fit_lasso_path(x: np.ndarray, y: ResponseVariable, folds: int = 5, seed: int = 0,
                   rule: str = "min", n_jobs: int = 1) -> LassoFit:
    """
    Fit the lasso path on re-standardized columns and choose lambda by K-fold CV.

    ``rule="min"`` keeps the CV-error minimiser, ``rule="1se"`` the largest lambda
    within one standard error of it. Lambdas whose fit did not converge are not
    eligible.
    """
    if rule not in RULES:
        raise DataError(f"unknown lambda rule '{rule}' (expected one of {', '.join(RULES)})")
    x = np.asarray(x, dtype=float)
    n, p = x.shape
    if folds < 3 or n < folds:
        raise DataError(f"cross-validation needs 3 <= folds <= n, got folds={folds}, n={n}")
    values = np.asarray(y.values, dtype=float)
    binary = y.is_binary

    z, usable = _standardize_columns(x)
    lambdas = lambda_grid(z, values)
    fold_seed = derive_seed(seed, STREAM_LASSO)
    coefs, intercepts, converged = _path(z, values, binary, lambdas, fold_seed)

    splits = list(_splitter(values, binary, folds, fold_seed).split(z, values.astype(int) if binary else None))
    errors = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_fold_errors)(z, values, binary, lambdas, train, test, derive_seed(seed, STREAM_LASSO, k))
        for k, (train, test) in enumerate(splits)
    )
    errors = np.vstack(errors)
    cv_mean = errors.mean(axis=0)
    cv_se = errors.std(axis=0, ddof=1) / np.sqrt(len(splits))

    eligible = np.where(converged, cv_mean, np.inf)
    if not converged.any():
        logger.warning("⚠️  no lasso fit converged; choosing among unconverged fits")
        eligible = cv_mean.copy()
    elif not converged.all():
        logger.warning(f"⚠️  {int((~converged).sum())} lasso fits did not converge and are skipped")
    best = int(np.argmin(eligible))
    if rule == "1se":
        within = np.flatnonzero(eligible <= cv_mean[best] + cv_se[best])
        best = int(within[0])

    coefs = _clean_path(coefs)
    coefs[:, ~usable] = 0.0
    return LassoFit(lambdas, coefs, intercepts, cv_mean, cv_se, best, rule, converged)


def lasso_select(x: np.ndarray, y: ResponseVariable, folds: int = 5, seed: int = 0,
                 rule: str = "min", n_jobs: int = 1) -> np.ndarray:
    """Indices of the covariates with a nonzero coefficient at the chosen lambda."""
    fit = fit_lasso_path(x, y, folds, seed, rule, n_jobs)
    logger.debug(f"lasso: lambda={fit.chosen_lambda:.4g}, {fit.selected.size} selected")
    return fit.selected
