"""
The full selection pipeline: cluster the covariates, decorrelate each cluster,
run every method of the bank on the corrected data and count, per covariate,
how many methods selected it.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from association import PValueVector, raw_pvalues
from config import PipelineConfig
from covclust import Partition, StabilityCurve, hierarchical_cluster, stability_select_k
from dataset import Dataset, standardize
from errors import ArmadaError, DataError, StageError
from factor_model import CorrectedDataset, pretreat
from forest import forest_interpret_step, forest_threshold_step, grow_forest
from lasso import fit_lasso_path
from multitest import adjust, factor_adjusted_selection
from rng import STREAM_FOREST_INTERPRET, STREAM_FOREST_THRESHOLD, STREAM_LASSO, derive_seed

logger = logging.getLogger(__name__)


class MethodKind(str, Enum):
    BONFERRONI = "bonferroni"
    BH = "bh"
    QVALUE = "qvalue"
    LOCAL_FDR = "local_fdr"
    FACTOR_ADJUSTED = "factor_adjusted"
    LASSO = "lasso"
    FOREST_THRESHOLD = "forest_threshold"
    FOREST_INTERPRET = "forest_interpret"


TEST_METHODS = (MethodKind.BONFERRONI, MethodKind.BH, MethodKind.QVALUE,
                MethodKind.LOCAL_FDR, MethodKind.FACTOR_ADJUSTED)
DEFAULT_KINDS = TEST_METHODS + (MethodKind.LASSO, MethodKind.FOREST_THRESHOLD, MethodKind.FOREST_INTERPRET)


@dataclass(frozen=True)
class MethodSpec:
    """One method of the bank; ``alpha`` overrides the configured cut for test methods."""

    kind: MethodKind
    alpha: Optional[float] = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", MethodKind(self.kind))
        except ValueError:
            known = ", ".join(k.value for k in MethodKind)
            raise DataError(f"unknown method '{self.kind}' (known: {known})")
        if self.alpha is not None and not 0.0 < self.alpha < 1.0:
            raise DataError(f"method alpha must be in (0, 1), got {self.alpha}")

    @property
    def name(self) -> str:
        return self.kind.value if self.alpha is None else f"{self.kind.value}@{self.alpha:g}"

    @property
    def is_test(self) -> bool:
        return self.kind in TEST_METHODS

    @classmethod
    def from_config(cls, entry: Union[str, Dict[str, Any]]) -> "MethodSpec":
        if isinstance(entry, str):
            return cls(entry)
        if isinstance(entry, dict) and "kind" in entry and set(entry) <= {"kind", "alpha"}:
            return cls(entry["kind"], entry.get("alpha"))
        raise DataError(f"bank entries are method names or {{'kind': ..., 'alpha': ...}}, got {entry!r}")

    def to_config(self) -> Union[str, Dict[str, Any]]:
        return self.kind.value if self.alpha is None else {"kind": self.kind.value, "alpha": self.alpha}


@dataclass(frozen=True)
class MethodBank:
    methods: Tuple[MethodSpec, ...]

    def __post_init__(self):
        methods = tuple(self.methods)
        if not methods:
            raise DataError("the method bank needs at least one method")
        names = [m.name for m in methods]
        if len(set(names)) != len(names):
            raise DataError(f"duplicated methods in the bank: {names}")
        object.__setattr__(self, "methods", methods)

    @property
    def size(self) -> int:
        return len(self.methods)

    @property
    def names(self) -> List[str]:
        return [m.name for m in self.methods]

    @classmethod
    def default(cls) -> "MethodBank":
        """The eight methods: five test-based procedures, lasso and both forest steps."""
        return cls(tuple(MethodSpec(k) for k in DEFAULT_KINDS))

    @classmethod
    def from_config(cls, entries: Optional[Sequence[Union[str, Dict[str, Any]]]]) -> "MethodBank":
        if entries is None:
            return cls.default()
        return cls(tuple(MethodSpec.from_config(e) for e in entries))

    def to_config(self) -> List[Union[str, Dict[str, Any]]]:
        return [m.to_config() for m in self.methods]

    def with_method(self, spec: MethodSpec) -> "MethodBank":
        return MethodBank(self.methods + (spec,))


@dataclass(frozen=True)
class MethodOutcome:
    """Selection of one method plus the statistic it was based on."""

    name: str
    selected: np.ndarray
    statistic: np.ndarray
    statistic_kind: str


@dataclass(frozen=True)
class ScoreVector:
    scores: np.ndarray
    per_method: np.ndarray
    method_names: Tuple[str, ...]
    covariate_names: Tuple[str, ...]
    tie_break_pvalues: np.ndarray

    @property
    def size(self) -> int:
        """Number of methods L."""
        return len(self.method_names)

    @classmethod
    def from_outcomes(cls, outcomes: Sequence[MethodOutcome], names: Sequence[str],
                      tie_break: np.ndarray) -> "ScoreVector":
        per_method = np.vstack([o.selected for o in outcomes]).astype(bool)
        return cls(per_method.sum(axis=0).astype(int), per_method,
                   tuple(o.name for o in outcomes), tuple(names), np.asarray(tie_break, dtype=float))

    def to_frame(self) -> pd.DataFrame:
        order = rank(self)
        ranks = np.empty(order.size, dtype=int)
        ranks[order] = np.arange(1, order.size + 1)
        frame = pd.DataFrame({
            "name": list(self.covariate_names),
            "score": self.scores,
            "rank": ranks,
            "tie_break_p": self.tie_break_pvalues,
        })
        for name, flags in zip(self.method_names, self.per_method):
            frame[name] = flags.astype(int)
        return frame


def select(s: ScoreVector, threshold: int = 1) -> np.ndarray:
    """Indices with score >= threshold."""
    if not 0 <= threshold <= s.size:
        raise DataError(f"threshold must be in [0, {s.size}], got {threshold}")
    return np.flatnonzero(s.scores >= threshold)


def rank(s: ScoreVector) -> np.ndarray:
    """Covariate indices by decreasing score, then increasing raw p-value, then column index."""
    index = np.arange(s.scores.shape[0])
    return np.lexsort((index, s.tie_break_pvalues, -s.scores))


@dataclass(frozen=True)
class ArmadaRun:
    partition: Partition
    stability: Optional[StabilityCurve]
    corrected: CorrectedDataset
    raw: PValueVector
    outcomes: Tuple[MethodOutcome, ...]
    scores: ScoreVector
    config: PipelineConfig


def _run_method(spec: MethodSpec, corrected: CorrectedDataset, raw: PValueVector,
                cfg: PipelineConfig, seed: int) -> MethodOutcome:
    x = np.asarray(corrected.matrix)
    y = corrected.response
    alpha = spec.alpha if spec.alpha is not None else cfg.alpha
    kind = spec.kind

    if kind is MethodKind.FACTOR_ADJUSTED:
        values = np.ones(x.shape[1])
        for cols in corrected.partition.clusters():
            names = [corrected.covariate_names[c] for c in cols]
            values[cols] = factor_adjusted_selection(x[:, cols], y, cfg.q_max, names).values
        return MethodOutcome(spec.name, values <= alpha, values, "adjusted_p")
    selected = np.zeros(x.shape[1], dtype=bool)
    if spec.is_test:
        adjusted = adjust(kind.value, raw)
        selected[adjusted.selected(alpha)] = True
        return MethodOutcome(spec.name, selected, adjusted.values,
                             "lfdr" if kind is MethodKind.LOCAL_FDR else "adjusted_p")

    if kind is MethodKind.LASSO:
        fit = fit_lasso_path(x, y, cfg.lasso_folds, derive_seed(seed, STREAM_LASSO), cfg.lasso_rule)
        selected[fit.selected] = True
        return MethodOutcome(spec.name, selected, fit.coefficients[fit.chosen_index], "coefficient")
    if kind is MethodKind.FOREST_THRESHOLD:
        imp = grow_forest(x, y, cfg.forest_trees, seed=derive_seed(seed, STREAM_FOREST_THRESHOLD))
        selected[forest_threshold_step(imp)] = True
        return MethodOutcome(spec.name, selected, imp.importances, "importance")
    # forest_interpret grows its own threshold forest
    imp = grow_forest(x, y, cfg.forest_trees, seed=derive_seed(seed, STREAM_FOREST_INTERPRET, 0))
    retained = forest_threshold_step(imp)
    chosen = forest_interpret_step(x, y, retained, seed=derive_seed(seed, STREAM_FOREST_INTERPRET, 1),
                                   n_trees=cfg.interpret_trees, n_forests=cfg.interpret_forests)
    selected[chosen] = True
    return MethodOutcome(spec.name, selected, imp.importances, "importance")


def _guarded(spec: MethodSpec, *args) -> MethodOutcome:
    logger.info(f"🔎 Running method {spec.name}")
    try:
        outcome = _run_method(spec, *args)
    except (ArmadaError, ValueError, np.linalg.LinAlgError) as e:
        if isinstance(e, StageError):
            raise
        raise StageError(f"method:{spec.name}", str(e)) from e
    logger.info(f"✅ {spec.name}: {int(outcome.selected.sum())} covariates selected")
    return outcome


def run_pipeline(d: Dataset, k: Optional[int] = None, bank: Optional[MethodBank] = None,
                 seed: Optional[int] = None, config: Optional[PipelineConfig] = None,
                 n_jobs: Optional[int] = None) -> ArmadaRun:
    """
    Clustering, per-cluster decorrelation, every method of the bank, scores.

    Arguments left as None come from ``config`` (itself defaulting to the settings).
    When no cluster count is known, K is chosen by bootstrap stability.
    """
    cfg = config or PipelineConfig()
    bank = bank or MethodBank.from_config(cfg.bank)
    seed = cfg.seed if seed is None else int(seed)
    k = cfg.clusters if k is None else int(k)
    jobs = cfg.jobs if n_jobs is None else n_jobs

    d.validate_for_analysis()
    logger.info(f"🚀 Selection run: n={d.n}, p={d.p}, L={bank.size}, seed={seed}")

    stability = None
    try:
        m = standardize(d)
        if k is None:
            k_max = min(cfg.k_max, d.p - 1)
            if k_max >= 2:
                stability = stability_select_k(m, cfg.stability_replicates, k_max, seed, jobs)
                k = stability.chosen_k
            else:
                k = 1
        partition = hierarchical_cluster(m, k)
    except ArmadaError as e:
        raise StageError("clustering", str(e)) from e
    logger.info(f"🌳 {partition.k} clusters of sizes {partition.sizes()}")

    corrected = pretreat(d, partition, cfg.q_max, jobs)
    raw = raw_pvalues(corrected)

    outcomes = Parallel(n_jobs=jobs, prefer="threads")(
        delayed(_guarded)(spec, corrected, raw, cfg, seed) for spec in bank.methods
    )
    scores = ScoreVector.from_outcomes(outcomes, d.covariate_names, raw.values)
    return ArmadaRun(partition, stability, corrected, raw, tuple(outcomes), scores, cfg)


def armada_scores(d: Dataset, k: Optional[int] = None, bank: Optional[MethodBank] = None,
                  seed: Optional[int] = None, config: Optional[PipelineConfig] = None,
                  n_jobs: Optional[int] = None) -> ScoreVector:
    """Scores only; see ``run_pipeline``."""
    return run_pipeline(d, k, bank, seed, config, n_jobs).scores
