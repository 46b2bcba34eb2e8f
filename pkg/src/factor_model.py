"""
Per-cluster latent factor model and data decorrelation.

Within a cluster, each covariate is modelled conditionally on the response as

    X_i = delta_i(Y) + b_i Z + e_i,   Z ~ N(0, I_q),   e ~ N(0, Psi)

delta_i(Y) is fitted by least squares on (1, Y); B and Psi are fitted by EM on the
residuals; Z is the posterior mean of the factors. The corrected covariates are
X* = X - Z B', which keeps the response effect.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from dataset import Dataset, ResponseVariable
from errors import ArmadaError, DataError, StageError

logger = logging.getLogger(__name__)

EM_MAX_ITER = 200
EM_REL_TOL = 1e-6
PSI_FLOOR = 1e-6
Q_WITHIN = 0.05

ResponseLike = Union[ResponseVariable, np.ndarray, Sequence[float]]


def _response_values(y: ResponseLike) -> np.ndarray:
    return np.asarray(y.values if isinstance(y, ResponseVariable) else y, dtype=float)


def _design(y: ResponseLike) -> np.ndarray:
    values = _response_values(y)
    return np.column_stack([np.ones(values.shape[0]), values])


def response_regression(x: np.ndarray, y: ResponseLike) -> Tuple[np.ndarray, np.ndarray]:
    """Least-squares fit of every column on (1, Y). Returns (coefficients 2 x p, residuals)."""
    design = _design(y)
    coef, *_ = np.linalg.lstsq(design, x, rcond=None)
    return coef, x - design @ coef


@dataclass(frozen=True)
class FactorModel:
    """Fitted factor model of one cluster."""

    q: int
    loadings: np.ndarray
    specific_variances: np.ndarray
    factor_scores: np.ndarray
    response_coefficients: np.ndarray
    binary_response: bool
    common_variance: float
    loglik_history: Tuple[float, ...] = ()
    converged: bool = True
    n_iter: int = 0

    @property
    def response_effects(self) -> np.ndarray:
        """Group means (Y=0, Y=1) for a binary response, (intercept, slope) otherwise."""
        intercept, slope = self.response_coefficients
        if self.binary_response:
            return np.vstack([intercept, intercept + slope])
        return np.vstack([intercept, slope])

    @property
    def loglik(self) -> float:
        return self.loglik_history[-1] if self.loglik_history else float("nan")

    def to_json(self) -> dict:
        return {
            "q": self.q,
            "loadings": self.loadings.tolist(),
            "specific_variances": self.specific_variances.tolist(),
            "common_variance": self.common_variance,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "loglik": self.loglik,
        }


def _loglik(n: int, diag_s: np.ndarray, psi: np.ndarray, m_inv: np.ndarray, logdet_m: float,
            f: np.ndarray, g: np.ndarray) -> float:
    # Woodbury forms of log|BB' + Psi| and tr((BB' + Psi)^-1 S)
    p = psi.shape[0]
    logdet = float(np.sum(np.log(psi)) + logdet_m)
    trace = float(np.sum(diag_s / psi) - np.trace(m_inv @ (f.T @ g)))
    return -0.5 * n * (logdet + trace + p * np.log(2.0 * np.pi))


def _posterior(b: np.ndarray, psi: np.ndarray):
    f = b / psi[:, None]
    m = np.eye(b.shape[1]) + b.T @ f
    m_inv = np.linalg.inv(m)
    _, logdet_m = np.linalg.slogdet(m)
    return f, m_inv, float(logdet_m)


def common_variance(model_or_loadings, specific_variances: Optional[np.ndarray] = None) -> float:
    """trace(BB') / trace(BB' + Psi)."""
    if isinstance(model_or_loadings, FactorModel):
        b, psi = model_or_loadings.loadings, model_or_loadings.specific_variances
    else:
        b, psi = np.asarray(model_or_loadings, dtype=float), np.asarray(specific_variances, dtype=float)
    shared = float(np.sum(b * b))
    total = shared + float(np.sum(psi))
    return shared / total if total > 0 else 0.0


def fit_factor_model(cluster: np.ndarray, y: ResponseLike, q: int,
                     max_iter: int = EM_MAX_ITER, tol: float = EM_REL_TOL) -> FactorModel:
    """
    Fit the q-factor model of a cluster conditionally on the response.

    Args:
        cluster: n x p_k covariate block
        y: response (ResponseVariable or values)
        q: number of factors, 0 <= q <= min(n - 2, p_k - 1)

    Returns:
        FactorModel; ``converged`` is False when the iteration cap was reached
    """
    x = np.asarray(cluster, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, p = x.shape
    if not 0 <= q <= min(n - 2, max(p - 1, 0)):
        raise DataError(f"number of factors must be in [0, {min(n - 2, max(p - 1, 0))}], got {q}")
    binary = isinstance(y, ResponseVariable) and y.is_binary

    coef, resid = response_regression(x, y)
    dof = n - 2
    diag_s = np.sum(resid * resid, axis=0) / dof
    floor = np.maximum(PSI_FLOOR * diag_s, 1e-12 * max(float(diag_s.mean()), 1e-300))

    if q == 0:
        psi = np.maximum(diag_s, floor)
        empty_b = np.zeros((p, 0))
        ll = _loglik(n, diag_s, psi, np.zeros((0, 0)), 0.0, empty_b, empty_b)
        return FactorModel(0, empty_b, psi, np.zeros((n, 0)), coef, binary, 0.0, (ll,), True, 0)

    def s_times(mat):
        return resid.T @ (resid @ mat) / dof

    # principal-factor start: top-q eigenpairs of S, remaining variance spread evenly
    _, sv, vt = np.linalg.svd(resid / np.sqrt(dof), full_matrices=False)
    eig = sv ** 2
    rest = max(float(diag_s.sum() - eig[:q].sum()), 0.0) / (p - q)
    b = vt[:q].T * np.sqrt(np.maximum(eig[:q] - rest, 0.0))
    psi = np.maximum(diag_s - np.sum(b * b, axis=1), floor)

    f, m_inv, logdet_m = _posterior(b, psi)
    history: List[float] = [_loglik(n, diag_s, psi, m_inv, logdet_m, f, s_times(f))]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        # E-step: moments of Z given the residuals
        g = s_times(f)
        h = g @ m_inv
        ezz = m_inv + m_inv @ f.T @ h
        # M-step
        b = np.linalg.solve(ezz.T, h.T).T
        psi = np.maximum(diag_s - np.sum(b * h, axis=1), floor)

        f, m_inv, logdet_m = _posterior(b, psi)
        history.append(_loglik(n, diag_s, psi, m_inv, logdet_m, f, s_times(f)))
        change = abs(history[-1] - history[-2]) / max(abs(history[-2]), 1e-300)
        logger.debug(f"EM q={q} iteration {it}: loglik={history[-1]:.6f}")
        if change < tol:
            converged = True
            break
    if not converged:
        logger.warning(f"⚠️  EM with q={q} did not converge in {max_iter} iterations; keeping the last iterate")

    scores = resid @ f @ m_inv
    return FactorModel(q, b, psi, scores, coef, binary, common_variance(b, psi), tuple(history), converged, it)


def decorrelate(cluster: np.ndarray, model: FactorModel) -> np.ndarray:
    """X* = X - Z B' for the cluster the model was fitted on."""
    x = np.asarray(cluster, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape != (model.factor_scores.shape[0], model.loadings.shape[0]):
        raise DataError(f"cluster of shape {x.shape} does not match a model fitted on "
                        f"{model.factor_scores.shape[0]} x {model.loadings.shape[0]}")
    if model.q == 0:
        return x.copy()
    return x - model.factor_scores @ model.loadings.T


def residual_correlation_energy(x_star: np.ndarray, y: ResponseLike) -> float:
    """
    Variance-inflation proxy: n times the mean squared off-diagonal correlation of the
    corrected covariates once the response effect is removed.
    """
    _, resid = response_regression(np.asarray(x_star, dtype=float), y)
    sd = resid.std(axis=0, ddof=1)
    keep = sd > 1e-12 * max(float(sd.max()), 1e-300)
    resid = resid[:, keep]
    n, p = resid.shape
    if p < 2:
        return 0.0
    z = (resid - resid.mean(axis=0)) / resid.std(axis=0, ddof=1)
    # squared Frobenius norm of the p x p correlation equals that of the n x n Gram matrix
    gram = z @ z.T / (n - 1)
    energy = float(np.sum(gram * gram))
    return n * (energy - p) / (p * (p - 1))


def select_num_factors(cluster: np.ndarray, y: ResponseLike, q_max: int) -> int:
    """Smallest q in 0..q_max whose residual correlation energy is within 5% of the minimum."""
    x = np.asarray(cluster, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, p = x.shape
    bound = min(n - 2, max(p - 1, 0))
    if q_max > bound:
        raise DataError(f"q_max must be at most {bound} for a {n} x {p} cluster, got {q_max}")
    if q_max <= 0:
        return 0
    criteria = np.array([
        residual_correlation_energy(decorrelate(x, fit_factor_model(x, y, q)), y)
        for q in range(q_max + 1)
    ])
    best = criteria.min()
    chosen = int(np.flatnonzero(criteria <= best + Q_WITHIN * abs(best))[0])
    logger.debug(f"factor-number criterion {np.round(criteria, 4).tolist()} -> q={chosen}")
    return chosen


@dataclass(frozen=True)
class CorrectedDataset:
    """Decorrelated covariates X* with the models that produced them."""

    matrix: np.ndarray
    partition: object
    models: Tuple[FactorModel, ...]
    response: ResponseVariable
    covariate_names: Tuple[str, ...]
    sample_ids: Tuple[str, ...] = field(default=())

    @property
    def factor_counts(self) -> List[int]:
        return [m.q for m in self.models]

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.matrix, columns=list(self.covariate_names))
        frame.insert(0, "sample_id", list(self.sample_ids))
        return frame

    def as_dataset(self) -> Dataset:
        return Dataset(self.matrix, self.covariate_names, self.response, self.sample_ids)


def _pretreat_cluster(x: np.ndarray, y: ResponseVariable, q_max: int, label: int) -> FactorModel:
    n, size = x.shape
    try:
        if size == 1:
            return fit_factor_model(x, y, 0)
        bound = min(q_max, n - 2, size - 1)
        q = select_num_factors(x, y, bound)
        model = fit_factor_model(x, y, q)
        logger.info(f"🧮 cluster {label}: p_k={size}, q={q}, ComVar={model.common_variance:.3f}")
        return model
    except (ArmadaError, np.linalg.LinAlgError, ValueError) as e:
        raise StageError("pretreatment", str(e), cluster=label) from e


def pretreat(d: Dataset, partition, q_max: int, n_jobs: int = 1) -> CorrectedDataset:
    """
    Per cluster: choose q, fit the factor model and decorrelate; clusters are
    reassembled in the original column order.
    """
    if partition.p != d.p:
        raise DataError(f"partition covers {partition.p} covariates, dataset has {d.p}")
    x = np.asarray(d.matrix)
    clusters = partition.clusters()
    models = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_pretreat_cluster)(x[:, cols], d.response, q_max, label)
        for label, cols in enumerate(clusters, start=1)
    )
    corrected = np.empty_like(x)
    for cols, model in zip(clusters, models):
        corrected[:, cols] = decorrelate(x[:, cols], model)
    return CorrectedDataset(corrected, partition, tuple(models), d.response, d.covariate_names, d.sample_ids)
