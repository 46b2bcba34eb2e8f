#!/usr/bin/env python3
"""
Command-line front end.

    armada simulate  --design main --seed 1 --out sim/
    armada select    sim/dataset.csv --out run/ [--clusters auto] [--prefilter 0.05]
    armada bootstrap sim/dataset.csv --replicates 100 --out boot/
    armada heatmap   sim/dataset.csv --scores run/scores.tsv [--scores other/scores.tsv --combine both] --out heat/
    armada compare   --design main --runs 100 --out cmp/
    armada benchmark --design main --runs 100 --jobs 8 --out bench/

Exit codes: 0 on success, 1 on a usage error, 2 on a data or pipeline error.
Every command writes its files and a ``manifest.json`` under ``--out``.
"""
import argparse
import logging
import os
import sys
import time
from pathlib import Path
from typing import List, Optional

# Add the src directory to the Python path
sys.path.insert(0, str(Path(__file__).parent))

import numpy as np
import pandas as pd

from aggregation import MethodBank, run_pipeline
from association import raw_pvalues
from benchmark import bootstrap_scores, compare_pretreatments, run_benchmark
from config import LINKAGES, PipelineConfig, parse_clusters, resolve_config
from covclust import build_hierarchy
from dataset import Dataset, covariate_index, load_csv, standardize, write_csv
from errors import ArmadaError, DataError
from exporters import (write_benchmark, write_bootstrap_csv, write_frame, write_manifest, write_pretreatment,
                       write_run)
from heatmap import cocluster_heatmap
from settings import settings
from simulation import DesignKind, SimDesign, simulate_design

logger = logging.getLogger("armada")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
COMBINE = ("both", "either")


class ArmadaArgumentParser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; usage errors exit 1 here, 2 is kept for data errors."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _clusters_flag(value: str) -> str:
    try:
        parse_clusters(value)
    except DataError as e:
        raise argparse.ArgumentTypeError(str(e))
    return value


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (see README for the schema)")
    p.add_argument("--seed", type=int, help="master seed; every random stream is derived from it")
    p.add_argument("--clusters", type=_clusters_flag,
                   help="number of covariate clusters K, or 'auto' for stability selection")
    p.add_argument("--threshold", type=int, help="minimum score for a covariate to be selected")
    p.add_argument("--jobs", type=int, help="worker threads (results do not depend on it)")
    p.add_argument("--timings", action="store_true", help="record runtimes in the manifest")
    p.add_argument("--out", default="armada_out", help="output directory")


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("data", help="CSV/TSV file: sample id column, covariates, response column")
    p.add_argument("--response", default="y", help="name of the response column")
    p.add_argument("--response-kind", choices=["binary", "continuous"], default="binary")
    p.add_argument("--no-sample-ids", action="store_true", help="the first column is a covariate")


def _add_design_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--design", choices=[k.value for k in DesignKind], default=DesignKind.MAIN.value)
    p.add_argument("--n", type=int, help="number of samples")
    p.add_argument("--cluster-size", type=int, help="covariates per cluster")


def build_parser() -> argparse.ArgumentParser:
    parser = ArmadaArgumentParser(prog="armada", description="Covariate selection by aggregated method scores")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("simulate", help="draw one dataset of a simulation design")
    _add_design_flags(p)
    p.add_argument("--seed", type=int, default=settings.SEED)
    p.add_argument("--out", default="armada_out")

    p = sub.add_parser("select", help="score and select the covariates of a dataset")
    _add_data_flags(p)
    _add_pipeline_flags(p)
    p.add_argument("--prefilter", type=float, metavar="ALPHA",
                   help="drop covariates whose raw p-value exceeds ALPHA before the pipeline")
    p.add_argument("--dendrogram", action="store_true", help="also write the full covariate dendrogram")

    p = sub.add_parser("bootstrap", help="bootstrap mean and median scores of a dataset")
    _add_data_flags(p)
    _add_pipeline_flags(p)
    p.add_argument("--replicates", "-b", type=int, default=100)

    p = sub.add_parser("heatmap", help="co-clustered heatmap of the selected covariates")
    _add_data_flags(p)
    p.add_argument("--scores", required=True, action="append",
                   help="scores.tsv written by 'select'; repeat to combine several runs")
    p.add_argument("--combine", choices=COMBINE, default="both",
                   help="with several --scores: covariates over the threshold in every run (both) or in any run (either)")
    p.add_argument("--threshold", type=int, default=settings.SCORE_THRESHOLD)
    p.add_argument("--labels", help="column of the data file used as sample labels (default: the response)")
    p.add_argument("--linkage", choices=list(LINKAGES), default="complete")
    p.add_argument("--out", default="armada_out")

    for name, text in (("compare", "compare the three pretreatments of the raw test on a design"),
                       ("benchmark", "pretreatment and method comparison on a design")):
        p = sub.add_parser(name, help=text)
        _add_design_flags(p)
        _add_pipeline_flags(p)
        p.add_argument("--runs", type=int, default=100)
    return parser


def _config(args) -> PipelineConfig:
    return resolve_config(getattr(args, "config", None), seed=args.seed, clusters=getattr(args, "clusters", None),
                          threshold=getattr(args, "threshold", None), jobs=getattr(args, "jobs", None))


def _load(args) -> Dataset:
    return load_csv(args.data, args.response, args.response_kind, has_sample_ids=not args.no_sample_ids)


def _design(args) -> SimDesign:
    return SimDesign.from_name(args.design, n=args.n, cluster_size=args.cluster_size)


def _runtimes(args, runtimes: dict) -> Optional[dict]:
    return runtimes if (getattr(args, "timings", False) or settings.RECORD_RUNTIMES) else None


def cmd_simulate(args) -> int:
    design = _design(args)
    data, truth = simulate_design(design, args.seed)
    files = [write_csv(data, os.path.join(args.out, "dataset.csv"))]
    truth_frame = pd.DataFrame({
        "name": list(data.covariate_names),
        "group": design.group_labels(),
        "influential": truth.astype(int),
    })
    files.append(write_frame(truth_frame, os.path.join(args.out, "truth.csv")))
    write_manifest(args.out, "simulate", files, {}, extra={"design": design.to_dict(), "seed": args.seed})
    print(f"simulated {design.kind.value}: n={data.n}, p={data.p}, influential={int(truth.sum())} -> {args.out}")
    return EXIT_OK


def _prefilter(d: Dataset, alpha: float) -> Dataset:
    if not 0.0 < alpha <= 1.0:
        raise DataError(f"prefilter alpha must be in (0, 1], got {alpha}")
    keep = np.flatnonzero(raw_pvalues(d).values <= alpha)
    if keep.size < 2:
        raise DataError(f"prefilter at {alpha} keeps {keep.size} covariates; at least 2 are required")
    logger.info(f"🧹 Prefilter at {alpha}: {keep.size} of {d.p} covariates kept")
    return d.subset(keep)


def cmd_select(args) -> int:
    cfg = _config(args)
    data = _load(args)
    if args.prefilter is not None:
        data = _prefilter(data, args.prefilter)
    started = time.perf_counter()
    run = run_pipeline(data, config=cfg)
    elapsed = time.perf_counter() - started
    dendrogram = build_hierarchy(standardize(data)) if args.dendrogram else None
    files = write_run(run, args.out, dendrogram)
    selected = [data.covariate_names[j] for j in np.flatnonzero(run.scores.scores >= cfg.threshold)]
    write_manifest(args.out, "select", files, cfg.to_dict(),
                   extra={"input": args.data, "n": data.n, "p": data.p, "clusters": run.partition.k,
                          "selected": selected},
                   runtimes=_runtimes(args, {"pipeline_seconds": elapsed}))
    print(f"{len(selected)} of {data.p} covariates with score >= {cfg.threshold} -> {args.out}")
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    cfg = _config(args)
    data = _load(args)
    started = time.perf_counter()
    boot = bootstrap_scores(data, args.replicates, MethodBank.from_config(cfg.bank), config=cfg, k=cfg.clusters,
                            n_jobs=cfg.jobs)
    elapsed = time.perf_counter() - started
    files = [write_bootstrap_csv(boot, os.path.join(args.out, "bootstrap.csv"))]
    write_manifest(args.out, "bootstrap", files, cfg.to_dict(),
                   extra={"input": args.data, "replicates": args.replicates, "clusters": boot.k,
                          "redraws": boot.redraws},
                   runtimes=_runtimes(args, {"bootstrap_seconds": elapsed}))
    print(f"bootstrap of {args.replicates} replicates (K={boot.k}) -> {args.out}")
    return EXIT_OK


def _scored_names(scores_path: str, threshold: int) -> List[str]:
    """Names of the covariates of one scores.tsv with score >= threshold."""
    if not os.path.exists(scores_path):
        raise DataError(f"scores file not found: {scores_path}")
    scores = pd.read_csv(scores_path, sep="\t")
    if not {"name", "score"} <= set(scores.columns):
        raise DataError(f"{scores_path} needs 'name' and 'score' columns")
    return scores.loc[scores["score"] >= threshold, "name"].astype(str).tolist()


def combine_selections(selections: List[List[str]], combine: str) -> List[str]:
    """Intersect (``both``) or unite (``either``) several selections, keeping first-seen order."""
    if combine not in COMBINE:
        raise DataError(f"unknown combine mode '{combine}' (expected one of {', '.join(COMBINE)})")
    seen = list(dict.fromkeys(name for names in selections for name in names))
    if combine == "either":
        return seen
    return [name for name in seen if all(name in names for names in selections)]


def cmd_heatmap(args) -> int:
    data = _load(args)
    selections = [_scored_names(path, args.threshold) for path in args.scores]
    chosen = combine_selections(selections, args.combine)
    index = covariate_index(data.covariate_names)
    missing = [name for name in chosen if name not in index]
    if missing:
        raise DataError(f"scored covariates absent from the data: {', '.join(missing[:5])}")
    selected = sorted(index[name] for name in chosen)

    labels = None
    if args.labels:
        frame = pd.read_csv(args.data, sep=None, engine="python", dtype=str)
        if args.labels not in frame.columns:
            raise DataError(f"missing label column '{args.labels}'")
        labels = frame[args.labels].tolist()
    path = os.path.join(args.out, "heatmap.svg")
    spec = cocluster_heatmap(data, selected, labels, path, args.linkage)
    order = pd.DataFrame({"sample_order": [data.sample_ids[i] for i in spec.column_order]})
    files = [path, write_frame(order, os.path.join(args.out, "heatmap_sample_order.csv"))]
    write_manifest(args.out, "heatmap", files,
                   {"threshold": args.threshold, "linkage": args.linkage, "combine": args.combine},
                   extra={"input": args.data, "scores": list(args.scores), "selected": len(selected)})
    print(f"heatmap of {len(selected)} covariates -> {path}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _config(args)
    design = _design(args)
    started = time.perf_counter()
    comparison = compare_pretreatments(design, args.runs, cfg.seed, cfg.q_max, cfg.alpha, cfg.jobs)
    elapsed = time.perf_counter() - started
    files = write_pretreatment(comparison, args.out)
    write_manifest(args.out, "compare", files, cfg.to_dict(),
                   extra={"design": design.to_dict(), "runs": args.runs},
                   runtimes=_runtimes(args, {"total_seconds": elapsed}))
    print(comparison.summary().to_string(index=False))
    return EXIT_OK


def cmd_benchmark(args) -> int:
    cfg = _config(args)
    design = _design(args)
    report = run_benchmark(design, args.runs, cfg.seed, cfg, n_jobs=cfg.jobs)
    files = write_benchmark(report, args.out)
    write_manifest(args.out, "benchmark", files, cfg.to_dict(),
                   extra={"design": design.to_dict(), "runs": args.runs},
                   runtimes=_runtimes(args, report.runtimes))
    print(report.rates.to_string(index=False))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "select": cmd_select,
    "bootstrap": cmd_bootstrap,
    "heatmap": cmd_heatmap,
    "compare": cmd_compare,
    "benchmark": cmd_benchmark,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    logging.basicConfig(level=settings.LOG_LEVEL, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ArmadaError, OSError) as e:
        logger.error(f"❌ {args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
