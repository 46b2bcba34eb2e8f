"""
Result files. Every writer returns the path it wrote so callers can list the
outputs in the run manifest. Float formatting is fixed so reruns with the same
seed produce identical bytes.
"""
import hashlib
import json
import logging
import os
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from plots import grouped_boxplot_svg, mean_scores_svg, roc_svg, score_counts_boxplot_svg

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.10g"
MANIFEST_NAME = "manifest.json"


def _prepare(path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    return path


def write_frame(frame: pd.DataFrame, path: str, sep: str = ",") -> str:
    frame.to_csv(_prepare(path), sep=sep, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def write_json(data: Any, path: str) -> str:
    with open(_prepare(path), "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def write_partition_csv(partition, path: str) -> str:
    return write_frame(partition.to_frame(), path)


def write_dendrogram_json(dendrogram, path: str) -> str:
    return write_json(dendrogram.to_json(), path)


def write_pvalues_csv(pvalues, path: str) -> str:
    return write_frame(pvalues.to_frame(), path)


def write_method_statistics_csv(outcomes: Sequence, names: Sequence[str], path: str) -> str:
    """One row per covariate: the statistic each method selected on (adjusted p, lfdr, coefficient, importance)."""
    frame = pd.DataFrame({"name": list(names)})
    for outcome in outcomes:
        frame[f"{outcome.name}:{outcome.statistic_kind}"] = np.asarray(outcome.statistic, dtype=float)
    return write_frame(frame, path)


def write_scores_tsv(scores, path: str) -> str:
    return write_frame(scores.to_frame(), path, sep="\t")


def write_factor_models_json(corrected, path: str) -> str:
    data = {
        "clusters": [
            {"label": label, "size": int(cols.size), **model.to_json()}
            for label, (cols, model) in enumerate(zip(corrected.partition.clusters(), corrected.models), start=1)
        ]
    }
    return write_json(data, path)


def write_run(run, out_dir: str, dendrogram=None) -> List[str]:
    """All files of one selection run."""
    names = run.scores.covariate_names
    paths = [
        write_partition_csv(run.partition, os.path.join(out_dir, "partition.csv")),
        write_pvalues_csv(run.raw, os.path.join(out_dir, "pvalues.csv")),
        write_method_statistics_csv(run.outcomes, names, os.path.join(out_dir, "method_statistics.csv")),
        write_scores_tsv(run.scores, os.path.join(out_dir, "scores.tsv")),
        write_factor_models_json(run.corrected, os.path.join(out_dir, "factor_models.json")),
    ]
    if run.stability is not None:
        paths.append(write_frame(run.stability.to_frame(), os.path.join(out_dir, "stability.csv")))
    if dendrogram is not None:
        paths.append(write_dendrogram_json(dendrogram, os.path.join(out_dir, "dendrogram.json")))
    return paths


def write_pretreatment(comparison, out_dir: str) -> List[str]:
    paths = [
        write_frame(comparison.to_frame(), os.path.join(out_dir, "pretreatment_tp_fp.tsv"), sep="\t"),
        write_frame(comparison.summary(), os.path.join(out_dir, "pretreatment_summary.tsv"), sep="\t"),
    ]
    for kind, counts in (("tp", comparison.tp), ("fp", comparison.fp)):
        paths.append(grouped_boxplot_svg(counts, os.path.join(out_dir, f"pretreatment_{kind}.svg"),
                                         f"{kind.upper()} per pretreatment", kind.upper()))
    return paths


def write_benchmark(report, out_dir: str) -> List[str]:
    """Rate table, ROC points, TP/FP per run, mean scores and the figures of a benchmark report."""
    paths = write_pretreatment(report.pretreatment, out_dir)
    mean_scores = pd.DataFrame({
        "name": list(report.design.covariate_names()),
        "group": report.design.group_labels(),
        "mean_score": report.mean_scores,
    })
    max_score = len(report.score_counts.columns) - 2
    paths += [
        write_frame(report.rates, os.path.join(out_dir, "rates.tsv"), sep="\t"),
        write_frame(report.roc, os.path.join(out_dir, "roc.csv")),
        write_frame(report.tp_fp, os.path.join(out_dir, "methods_tp_fp.tsv"), sep="\t"),
        write_frame(mean_scores, os.path.join(out_dir, "mean_scores.csv")),
        write_frame(report.score_counts, os.path.join(out_dir, "score_counts.tsv"), sep="\t"),
        roc_svg(report.roc, [c for c in report.roc.columns if c != "fpr"], os.path.join(out_dir, "roc.svg")),
        mean_scores_svg(report.mean_scores, os.path.join(out_dir, "mean_scores.svg"), max_score),
        score_counts_boxplot_svg(report.score_counts, os.path.join(out_dir, "score_boxplots.svg")),
    ]
    return paths


def write_bootstrap_csv(boot, path: str) -> str:
    return write_frame(boot.to_frame(), path)


def _digest(path: str) -> str:
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()


def write_manifest(out_dir: str, command: str, files: Sequence[str], config: Dict[str, Any],
                   extra: Optional[Dict[str, Any]] = None, runtimes: Optional[Dict[str, float]] = None) -> str:
    """
    ``manifest.json``: the command, the resolved config, every output file with
    its sha256, and runtimes when they are recorded.
    """
    entries = sorted(
        ({"path": os.path.relpath(p, out_dir), "sha256": _digest(p)} for p in files), key=lambda e: e["path"]
    )
    manifest = {"command": command, "config": config, "files": entries}
    if extra:
        manifest.update(extra)
    if runtimes is not None:
        manifest["runtimes"] = runtimes
    path = write_json(manifest, os.path.join(out_dir, MANIFEST_NAME))
    logger.info(f"📝 Wrote {len(entries)} files and {path}")
    return path
