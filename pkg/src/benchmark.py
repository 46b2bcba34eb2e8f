"""
Simulation benchmark and bootstrap score stability.

A benchmark draws ``n_runs`` datasets from a design and, on each, compares the
three pretreatments of the univariate test (raw, one global factor model,
cluster-then-correct) and the three selection methods (ARMADA scores, the raw
test at alpha, the factor-adjusted procedure). Runs are independent and keyed
by (seed, run index) so the report does not depend on the worker count.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from sklearn.metrics import roc_curve

from aggregation import MethodBank, ScoreVector, armada_scores, run_pipeline
from association import raw_pvalues
from config import PipelineConfig
from covclust import Partition, hierarchical_cluster
from dataset import Dataset, standardize
from errors import DataError
from factor_model import pretreat
from multitest import benjamini_hochberg
from rng import STREAM_BENCHMARK, STREAM_BOOTSTRAP, derive_rng, derive_seed
from simulation import SimDesign, simulate_design

logger = logging.getLogger(__name__)

PROCEDURES = ("raw", "global", "clustered")
METHODS = ("ARMADA", "RawTest", "FactorAdjusted")
MIN_RUNS = 10
MIN_REPLICATES = 10
MAX_REDRAWS = 10
FPR_GRID = np.round(np.linspace(0.0, 1.0, 101), 10)


@dataclass(frozen=True)
class PretreatmentComparison:
    """TP and FP counts per run for each pretreatment of the raw test."""

    tp: Dict[str, np.ndarray]
    fp: Dict[str, np.ndarray]
    alpha: float

    @property
    def n_runs(self) -> int:
        return len(next(iter(self.tp.values())))

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {"run": r, "procedure": name, "tp": int(self.tp[name][r]), "fp": int(self.fp[name][r])}
            for name in self.tp for r in range(self.n_runs)
        ]
        return pd.DataFrame(rows, columns=["run", "procedure", "tp", "fp"])

    def summary(self) -> pd.DataFrame:
        """Mean and sd of TP and FP per procedure."""
        return pd.DataFrame({
            "procedure": list(self.tp),
            "tp_mean": [float(np.mean(v)) for v in self.tp.values()],
            "tp_sd": [float(np.std(v, ddof=1)) for v in self.tp.values()],
            "fp_mean": [float(np.mean(v)) for v in self.fp.values()],
            "fp_sd": [float(np.std(v, ddof=1)) for v in self.fp.values()],
        })


@dataclass(frozen=True)
class BenchmarkReport:
    design: SimDesign
    n_runs: int
    seed: int
    threshold: int
    pretreatment: PretreatmentComparison
    rates: pd.DataFrame              # per group: mean and sd of the selection indicator per method
    roc: pd.DataFrame                # fpr grid and mean tpr per method
    tp_fp: pd.DataFrame              # run, method, tp, fp
    mean_scores: np.ndarray          # per covariate, over runs
    score_counts: pd.DataFrame       # per group: how often each score value occurred
    runtimes: Dict[str, float] = field(default_factory=dict)

    def mean_roc_at(self, fpr: float) -> Dict[str, float]:
        return {m: float(np.interp(fpr, self.roc["fpr"], self.roc[m])) for m in METHODS}


def _counts(selected: np.ndarray, truth: np.ndarray) -> Tuple[int, int]:
    return int(np.sum(selected & truth)), int(np.sum(selected & ~truth))


def _mean_curve(truth: np.ndarray, strength: np.ndarray) -> np.ndarray:
    """Sensitivity on FPR_GRID of the curve sweeping a threshold over ``strength``."""
    fpr, tpr, _ = roc_curve(truth.astype(int), strength, drop_intermediate=False)
    # vertical segments: keep the highest sensitivity reached at each fpr
    grid_x, inverse = np.unique(fpr, return_inverse=True)
    grid_y = np.zeros(grid_x.shape[0])
    np.maximum.at(grid_y, inverse, tpr)
    return np.interp(FPR_GRID, grid_x, np.maximum.accumulate(grid_y))


def _pretreatment_pvalues(data: Dataset, k: int, q_max: int, n_jobs: int = 1) -> Dict[str, np.ndarray]:
    names = data.covariate_names
    partition = hierarchical_cluster(standardize(data), k)
    return {
        "raw": raw_pvalues(data).values,
        "global": raw_pvalues(pretreat(data, Partition.single(data.p, names), q_max, n_jobs)).values,
        "clustered": raw_pvalues(pretreat(data, partition, q_max, n_jobs)).values,
    }


def _compare_run(design: SimDesign, seed: int, run: int, q_max: int, alpha: float):
    data, truth = simulate_design(design, derive_seed(seed, STREAM_BENCHMARK, run))
    pvalues = _pretreatment_pvalues(data, design.n_clusters, q_max)
    return {name: _counts(p <= alpha, truth) for name, p in pvalues.items()}


def _collect(runs: List[Dict[str, Tuple[int, int]]], alpha: float) -> PretreatmentComparison:
    tp = {name: np.array([r[name][0] for r in runs]) for name in PROCEDURES}
    fp = {name: np.array([r[name][1] for r in runs]) for name in PROCEDURES}
    return PretreatmentComparison(tp, fp, alpha)


def _check_runs(n_runs: int) -> None:
    if n_runs < 2:
        raise DataError(f"a benchmark needs at least 2 runs, got {n_runs}")
    if n_runs < MIN_RUNS:
        logger.warning(f"⚠️  {n_runs} runs is a smoke run; rates and sds are rough below {MIN_RUNS} runs")


def compare_pretreatments(design: SimDesign, n_runs: int, seed: int, q_max: Optional[int] = None,
                          alpha: float = 0.05, n_jobs: int = 1) -> PretreatmentComparison:
    """Raw test vs global correction vs cluster-then-correct, TP/FP at ``alpha`` per run."""
    _check_runs(n_runs)
    q_max = PipelineConfig().q_max if q_max is None else q_max
    logger.info(f"⚖️  Pretreatment comparison: design={design.kind.value}, runs={n_runs}, seed={seed}")
    runs = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_compare_run)(design, seed, r, q_max, alpha) for r in range(n_runs)
    )
    return _collect(runs, alpha)


@dataclass
class _RunResult:
    pretreatment: Dict[str, Tuple[int, int]]
    selections: Dict[str, np.ndarray]
    curves: Dict[str, np.ndarray]
    scores: np.ndarray
    seconds: float


def _benchmark_run(design: SimDesign, seed: int, run: int, cfg: PipelineConfig, threshold: int) -> _RunResult:
    started = time.perf_counter()
    data, truth = simulate_design(design, derive_seed(seed, STREAM_BENCHMARK, run))
    logger.info(f"🏁 Benchmark run {run + 1}")

    armada = run_pipeline(data, k=design.n_clusters, seed=derive_seed(seed, STREAM_BENCHMARK, run, 1),
                          config=cfg, n_jobs=1)
    raw = raw_pvalues(data).values
    global_p = raw_pvalues(pretreat(data, Partition.single(data.p, data.covariate_names), cfg.q_max)).values
    pvalues = {"raw": raw, "global": global_p, "clustered": armada.raw.values}
    factor_adjusted = benjamini_hochberg(global_p).values

    scores = armada.scores.scores
    selections = {
        "ARMADA": scores >= threshold,
        "RawTest": raw <= cfg.alpha,
        "FactorAdjusted": factor_adjusted <= cfg.alpha,
    }
    curves = {
        "ARMADA": _mean_curve(truth, scores.astype(float)),
        "RawTest": _mean_curve(truth, -raw),
        "FactorAdjusted": _mean_curve(truth, -factor_adjusted),
    }
    return _RunResult(
        pretreatment={name: _counts(p <= cfg.alpha, truth) for name, p in pvalues.items()},
        selections=selections,
        curves=curves,
        scores=scores,
        seconds=time.perf_counter() - started,
    )


def _rate_table(design: SimDesign, results: Sequence[_RunResult]) -> pd.DataFrame:
    groups = np.array(design.group_labels())
    rows = []
    for group in design.group_order():
        mask = groups == group
        row = {"group": group}
        for method in METHODS:
            picked = np.concatenate([r.selections[method][mask] for r in results]).astype(float)
            row[method] = float(picked.mean())
            row[f"{method}_sd"] = float(picked.std(ddof=1))
        rows.append(row)
    return pd.DataFrame(rows)


def _score_counts(design: SimDesign, scores: np.ndarray, n_methods: int) -> pd.DataFrame:
    groups = np.array(design.group_labels())
    rows = []
    for group in design.group_order():
        counts = np.bincount(scores[:, groups == group].ravel(), minlength=n_methods + 1)
        rows.append({"group": group, **{str(s): int(c) for s, c in enumerate(counts)}})
    return pd.DataFrame(rows)


def run_benchmark(design: SimDesign, n_runs: int, seed: int, config: Optional[PipelineConfig] = None,
                  threshold: Optional[int] = None, n_jobs: int = 1) -> BenchmarkReport:
    """
    ARMADA (score >= threshold) against the raw test and the factor-adjusted
    procedure, both at the configured alpha, with the number of clusters known.
    """
    _check_runs(n_runs)
    cfg = config or PipelineConfig()
    threshold = cfg.threshold if threshold is None else int(threshold)
    n_methods = MethodBank.from_config(cfg.bank).size
    logger.info(f"📊 Benchmark: design={design.kind.value}, runs={n_runs}, seed={seed}, jobs={n_jobs}")

    started = time.perf_counter()
    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_benchmark_run)(design, seed, r, cfg, threshold) for r in range(n_runs)
    )
    truth = design.truth()

    tp_fp = pd.DataFrame(
        [{"run": r, "method": m, **dict(zip(("tp", "fp"), _counts(res.selections[m], truth)))}
         for r, res in enumerate(results) for m in METHODS],
        columns=["run", "method", "tp", "fp"],
    )
    roc = pd.DataFrame({"fpr": FPR_GRID})
    for method in METHODS:
        roc[method] = np.mean([res.curves[method] for res in results], axis=0)
    scores = np.vstack([res.scores for res in results])

    report = BenchmarkReport(
        design=design,
        n_runs=n_runs,
        seed=seed,
        threshold=threshold,
        pretreatment=_collect([res.pretreatment for res in results], cfg.alpha),
        rates=_rate_table(design, results),
        roc=roc,
        tp_fp=tp_fp,
        mean_scores=scores.mean(axis=0),
        score_counts=_score_counts(design, scores, n_methods),
        runtimes={
            "total_seconds": time.perf_counter() - started,
            "mean_run_seconds": float(np.mean([res.seconds for res in results])),
        },
    )
    logger.info(f"✅ Benchmark done in {report.runtimes['total_seconds']:.1f}s")
    return report


@dataclass(frozen=True)
class BootstrapScores:
    original: ScoreVector
    replicates: np.ndarray           # b x p
    k: int
    redraws: int

    @property
    def mean(self) -> np.ndarray:
        return self.replicates.mean(axis=0)

    @property
    def median(self) -> np.ndarray:
        return np.median(self.replicates, axis=0)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "name": list(self.original.covariate_names),
            "score": self.original.scores,
            "bootstrap_mean": self.mean,
            "bootstrap_median": self.median,
        })


def _draw_rows(d: Dataset, rng: np.random.Generator) -> np.ndarray:
    """Rows of one bootstrap sample; class sizes are kept for a binary response."""
    if not d.response.is_binary:
        return rng.integers(0, d.n, size=d.n)
    labels = d.response.labels()
    parts = [rng.choice(np.flatnonzero(labels == c), size=int(np.sum(labels == c)), replace=True)
             for c in (0, 1)]
    return np.sort(np.concatenate(parts))


def _usable(d: Dataset) -> bool:
    try:
        d.validate_for_analysis()
    except DataError:
        return False
    return bool(np.all(np.ptp(d.matrix, axis=0) > 0))


def _replicate(d: Dataset, r: int, seed: int, k: int, bank, cfg) -> Tuple[np.ndarray, int]:
    for attempt in range(MAX_REDRAWS + 1):
        rows = _draw_rows(d, derive_rng(seed, STREAM_BOOTSTRAP, r, attempt))
        sample = d.take_rows(rows)
        if _usable(sample):
            break
        logger.warning(f"⚠️  bootstrap replicate {r} is degenerate, redrawing ({attempt + 1}/{MAX_REDRAWS})")
    else:
        raise DataError(f"bootstrap replicate {r} stayed degenerate after {MAX_REDRAWS} redraws")
    scores = armada_scores(sample, k=k, bank=bank, seed=derive_seed(seed, STREAM_BOOTSTRAP, r), config=cfg,
                           n_jobs=1)
    return scores.scores, attempt


def bootstrap_scores(d: Dataset, b: int, bank: Optional[MethodBank] = None, seed: Optional[int] = None,
                     config: Optional[PipelineConfig] = None, k: Optional[int] = None,
                     n_jobs: int = 1) -> BootstrapScores:
    """
    Recompute the scores on ``b`` bootstrap samples, with the number of clusters
    fixed to the one used on the full data.
    """
    if b < MIN_REPLICATES:
        raise DataError(f"at least {MIN_REPLICATES} bootstrap replicates are required, got {b}")
    cfg = config or PipelineConfig()
    seed = cfg.seed if seed is None else int(seed)
    bank = bank or MethodBank.from_config(cfg.bank)

    original = run_pipeline(d, k=k, bank=bank, seed=seed, config=cfg, n_jobs=n_jobs)
    k = original.partition.k
    logger.info(f"🔁 Bootstrap: b={b}, K={k}, seed={seed}")
    out = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_replicate)(d, r, seed, k, bank, cfg) for r in range(b)
    )
    replicates = np.vstack([scores for scores, _ in out])
    return BootstrapScores(original.scores, replicates, k, int(sum(a for _, a in out)))
