"""
Multiple-testing procedures: Bonferroni, Benjamini-Hochberg, Storey q-values,
local false discovery rates and the factor-adjusted BH procedure.
"""
import logging
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import statsmodels.api as sm
from scipy import stats
from statsmodels.stats.multitest import multipletests
from statsmodels.tools.sm_exceptions import PerfectSeparationError

from association import pearson_columns, wilcoxon_columns
from errors import DataError
from factor_model import decorrelate, fit_factor_model, select_num_factors

logger = logging.getLogger(__name__)

DEFAULT_LAMBDAS = np.round(np.arange(0.05, 0.951, 0.05), 2)
QVALUE_MIN_M = 20
LFDR_MIN_M = 100
LFDR_BINS = 120
LFDR_DEGREE = 7
Z_CLIP = 10.0


class AdjustMethod(str, Enum):
    BONFERRONI = "bonferroni"
    BH = "bh"
    QVALUE = "qvalue"
    LOCAL_FDR = "local_fdr"
    FACTOR_ADJUSTED = "factor_adjusted"


@dataclass(frozen=True)
class AdjustedPValues:
    """
    Adjusted values of one procedure, in input order.

    For the local fdr procedure ``values`` are local fdr estimates, ``null_mean`` and
    ``null_sd`` the fitted empirical null and ``fallback`` is set when the
    theoretical N(0, 1) null had to be used.
    """

    method: AdjustMethod
    values: np.ndarray
    pi0_hat: Optional[float] = None
    fallback: bool = False
    null_mean: Optional[float] = None
    null_sd: Optional[float] = None
    n_factors: Optional[int] = None
    covariate_names: Tuple[str, ...] = ()

    def __post_init__(self):
        values = np.clip(np.asarray(self.values, dtype=float), 0.0, 1.0)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def selected(self, alpha: float = 0.05) -> np.ndarray:
        """Indices with adjusted value <= alpha."""
        return np.flatnonzero(self.values <= alpha)

    def to_frame(self) -> pd.DataFrame:
        names = self.covariate_names or tuple(f"X{j + 1}" for j in range(self.values.shape[0]))
        return pd.DataFrame({"name": list(names), "method": self.method.value, "value": self.values})


def _unpack(p) -> Tuple[np.ndarray, Tuple[str, ...]]:
    values = np.asarray(getattr(p, "values", p), dtype=float).ravel()
    names = tuple(getattr(p, "covariate_names", ()) or ())
    if np.any(~np.isfinite(values)) or np.any(values < 0) or np.any(values > 1):
        raise DataError("p-values must lie in [0, 1]")
    return values, names


def bonferroni(p) -> AdjustedPValues:
    """min(1, m p_i)."""
    values, names = _unpack(p)
    if values.size == 0:
        return AdjustedPValues(AdjustMethod.BONFERRONI, values, covariate_names=names)
    adjusted = multipletests(values, method="bonferroni")[1]
    return AdjustedPValues(AdjustMethod.BONFERRONI, adjusted, covariate_names=names)


def benjamini_hochberg(p) -> AdjustedPValues:
    """Step-up adjusted values min_{j >= i} min(1, m p_(j) / j), in input order."""
    values, names = _unpack(p)
    if values.size == 0:
        return AdjustedPValues(AdjustMethod.BH, values, covariate_names=names)
    adjusted = multipletests(values, method="fdr_bh")[1]
    return AdjustedPValues(AdjustMethod.BH, adjusted, covariate_names=names)


def estimate_pi0(values: np.ndarray, lambda_grid: Sequence[float] = DEFAULT_LAMBDAS) -> float:
    """
    Proportion of true nulls: pi0(lambda) = #{p > lambda} / (m (1 - lambda)) over the
    grid, smoothed by a cubic least-squares fit and read at the largest lambda.
    """
    m = values.shape[0]
    if m < QVALUE_MIN_M:
        return 1.0
    lambdas = np.asarray(lambda_grid, dtype=float)
    raw = np.array([np.mean(values > lam) / (1.0 - lam) for lam in lambdas])
    if lambdas.size > 3:
        smooth = np.polynomial.Polynomial.fit(lambdas, raw, deg=3)
        pi0 = float(smooth(lambdas[-1]))
    else:
        pi0 = float(raw[-1])
    return float(np.clip(pi0, 1.0 / m, 1.0))


def storey_qvalue(p, lambda_grid: Sequence[float] = DEFAULT_LAMBDAS,
                  pi0: Optional[float] = None) -> AdjustedPValues:
    """q_i = min_{j >= i} min(1, pi0 m p_(j) / j); pi0 is estimated unless given."""
    values, names = _unpack(p)
    m = values.shape[0]
    if m == 0:
        return AdjustedPValues(AdjustMethod.QVALUE, values, 1.0, covariate_names=names)
    pi0_hat = estimate_pi0(values, lambda_grid) if pi0 is None else float(pi0)
    order = np.argsort(values, kind="mergesort")
    ranked = pi0_hat * m * values[order] / np.arange(1, m + 1)
    ranked = np.minimum.accumulate(ranked[::-1])[::-1]
    q = np.empty(m)
    q[order] = np.minimum(ranked, 1.0)
    return AdjustedPValues(AdjustMethod.QVALUE, q, pi0_hat, covariate_names=names)


def _polynomial_basis(z: np.ndarray, center: float, scale: float, degree: int) -> np.ndarray:
    return np.polynomial.legendre.legvander((z - center) / scale, degree)


def local_fdr(p, bins: int = LFDR_BINS, degree: int = LFDR_DEGREE) -> AdjustedPValues:
    """
    Local false discovery rates with an empirical null.

    z_i = Phi^-1(1 - p_i); the mixture density f is fitted by Poisson regression of
    histogram counts on a polynomial in z, the null N(mu, sigma^2) and pi0 by a
    quadratic fit of log f over the central half of the z values, and
    lfdr_i = min(1, pi0 f0(z_i) / f(z_i)).
    """
    values, names = _unpack(p)
    m = values.shape[0]
    if m < LFDR_MIN_M:
        logger.warning(f"⚠️  local fdr needs at least {LFDR_MIN_M} p-values, got {m}; reporting 1")
        return AdjustedPValues(AdjustMethod.LOCAL_FDR, np.ones(m), 1.0, True, 0.0, 1.0, covariate_names=names)

    z = np.clip(stats.norm.isf(np.clip(values, 1e-300, 1.0)), -Z_CLIP, Z_CLIP)
    counts, edges = np.histogram(z, bins=bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    width = edges[1] - edges[0]
    center = 0.5 * (edges[0] + edges[-1])
    scale = 0.5 * (edges[-1] - edges[0]) or 1.0

    fallback = False
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            glm = sm.GLM(counts, _polynomial_basis(centers, center, scale, degree),
                         family=sm.families.Poisson()).fit()
        beta = np.asarray(glm.params)
        if not np.all(np.isfinite(beta)):
            raise np.linalg.LinAlgError("non-finite density coefficients")
        log_f = _polynomial_basis(z, center, scale, degree) @ beta - np.log(m * width)

        lo, hi = np.quantile(z, [0.25, 0.75])
        central = (centers >= lo) & (centers <= hi)
        if central.sum() < 3:
            raise np.linalg.LinAlgError("too few central bins")
        log_f_central = _polynomial_basis(centers[central], center, scale, degree) @ beta - np.log(m * width)
        c2, c1, c0 = np.polyfit(centers[central], log_f_central, 2)
        if not c2 < 0:
            raise np.linalg.LinAlgError("central log-density is not concave")
        sigma2 = -1.0 / (2.0 * c2)
        mu = c1 * sigma2
        pi0 = float(min(1.0, np.exp(c0 + mu * mu / (2.0 * sigma2) + 0.5 * np.log(2.0 * np.pi * sigma2))))
        sigma = float(np.sqrt(sigma2))
    except (np.linalg.LinAlgError, ValueError, PerfectSeparationError) as e:
        logger.warning(f"⚠️  local fdr density fit failed ({e}); using the theoretical null")
        fallback = True
        mu, sigma, pi0 = 0.0, 1.0, 1.0
        kde = stats.gaussian_kde(z)
        log_f = np.log(np.maximum(kde(z), 1e-300))

    log_f0 = stats.norm.logpdf(z, loc=mu, scale=sigma)
    lfdr = np.minimum(1.0, pi0 * np.exp(log_f0 - log_f))

    # non-increasing along the upper tail
    upper = np.flatnonzero(z >= mu)
    order = upper[np.argsort(z[upper], kind="mergesort")]
    lfdr[order] = np.minimum.accumulate(lfdr[order])
    return AdjustedPValues(AdjustMethod.LOCAL_FDR, lfdr, pi0, fallback, float(mu), sigma, covariate_names=names)


def factor_adjusted_selection(matrix: np.ndarray, response, q_max: int,
                              names: Sequence[str] = ()) -> AdjustedPValues:
    """
    Factor-adjusted procedure on one block of covariates: choose q, fit the factor
    model, decorrelate, test each covariate against the response, then BH.
    """
    x = np.asarray(matrix, dtype=float)
    n, p = x.shape
    q = select_num_factors(x, response, min(q_max, n - 2, max(p - 1, 0)))
    model = fit_factor_model(x, response, q)
    adjusted = decorrelate(x, model)
    if response.is_binary:
        raw = wilcoxon_columns(adjusted, response.values)
    else:
        raw = pearson_columns(adjusted, response.values, names)
    bh = benjamini_hochberg(raw)
    return AdjustedPValues(AdjustMethod.FACTOR_ADJUSTED, bh.values, n_factors=q, covariate_names=tuple(names))


def adjust(method, p) -> AdjustedPValues:
    """Dispatch a p-value-only procedure by name."""
    method = AdjustMethod(method)
    procedures = {
        AdjustMethod.BONFERRONI: bonferroni,
        AdjustMethod.BH: benjamini_hochberg,
        AdjustMethod.QVALUE: storey_qvalue,
        AdjustMethod.LOCAL_FDR: local_fdr,
    }
    if method not in procedures:
        raise DataError(f"{method.value} needs the covariate data, not only p-values")
    return procedures[method](p)
