#!/usr/bin/env python3
"""
ARMADA covariate selection MCP server
Built with FastMCP; every tool wraps the same library calls as the command line
"""
import os
import sys
import logging
from pathlib import Path
from typing import Optional

# Add the src directory to the Python path
current_dir = Path(__file__).parent
sys.path.insert(0, str(current_dir))

from settings import settings

# Set up logging
logging.basicConfig(level=settings.LOG_LEVEL)
logger = logging.getLogger(__name__)

from fastmcp import FastMCP

from benchmark import bootstrap_scores as run_bootstrap
from benchmark import run_benchmark
from config import resolve_config
from dataset import load_csv, write_csv
from errors import ArmadaError, StageError
from aggregation import MethodBank, rank, run_pipeline
from simulation import SimDesign, simulate_design

SERVER_NAME = "ARMADA Covariate Selection MCP Server"
SERVER_VERSION = "1.0.0"
TOP_N = 50

# Initialize FastMCP
mcp = FastMCP(SERVER_NAME)


def _resolve(path: str) -> str:
    """Relative paths are looked up under ARMADA_DATA_DIR when it is set."""
    if settings.DATA_DIR and not os.path.isabs(path):
        return os.path.join(settings.DATA_DIR, path)
    return path


def _failure(tool: str, e: Exception, message: str) -> dict:
    logger.error(f"❌ {tool} error: {e}")
    result = {"success": False, "error": str(e), "message": message}
    if isinstance(e, StageError):
        result["stage"] = e.stage
        result["cluster"] = e.cluster
    return result


@mcp.tool(description="Get server information and the default pipeline settings")
def get_server_info() -> dict:
    """Get server information and configuration status."""
    try:
        return {
            "success": True,
            "server": {"name": SERVER_NAME, "version": SERVER_VERSION, "status": "running"},
            "config": {
                "environment": settings.ENVIRONMENT,
                "settings_valid": settings.validate(),
                "defaults": settings.as_dict(),
                "methods": MethodBank.default().names,
            },
            "message": "Server is running and ready",
        }
    except Exception as e:
        return _failure("get_server_info", e, "Failed to get server info")


@mcp.tool(description="Simulate one dataset of the main, mixture or regression design and save it as CSV")
def simulate_dataset(design: str = "main", seed: int = settings.SEED, output_path: str = "simulated.csv",
                     n: Optional[int] = None, cluster_size: Optional[int] = None) -> dict:
    """Draw a dataset from a simulation design."""
    logger.info(f"🎲 simulate_dataset called with design={design}, seed={seed}")
    try:
        sim = SimDesign.from_name(design, n=n, cluster_size=cluster_size)
        data, truth = simulate_design(sim, seed)
        path = _resolve(output_path)
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        write_csv(data, path)
        return {
            "success": True,
            "path": path,
            "design": sim.to_dict(),
            "n": data.n,
            "p": data.p,
            "influential": [data.covariate_names[j] for j in truth.nonzero()[0]],
            "message": f"Simulated {sim.kind.value} dataset written to {path}",
        }
    except (ArmadaError, OSError) as e:
        return _failure("simulate_dataset", e, "Failed to simulate dataset")


@mcp.tool(description="Score every covariate of a CSV dataset by the number of selection methods choosing it")
def select_covariates(file_path: str, response: str = "y", response_kind: str = "binary",
                      clusters: str = "auto", threshold: Optional[int] = None, seed: Optional[int] = None,
                      config_path: Optional[str] = None) -> dict:
    """Run the full selection pipeline on a dataset."""
    logger.info(f"🔬 select_covariates called with file_path: {file_path}, clusters={clusters}")
    try:
        cfg = resolve_config(_resolve(config_path) if config_path else None, seed=seed, clusters=clusters,
                             threshold=threshold)
        data = load_csv(_resolve(file_path), response, response_kind)
        run = run_pipeline(data, config=cfg)
        order = rank(run.scores)
        selected = [int(j) for j in order if run.scores.scores[j] >= cfg.threshold]
        return {
            "success": True,
            "clusters": run.partition.k,
            "factors_per_cluster": run.corrected.factor_counts,
            "methods": list(run.scores.method_names),
            "selected_count": len(selected),
            "top": [
                {"name": data.covariate_names[j], "score": int(run.scores.scores[j]),
                 "raw_p": float(run.raw.values[j])}
                for j in selected[:TOP_N]
            ],
            "message": f"{len(selected)} of {data.p} covariates have score >= {cfg.threshold}",
        }
    except ArmadaError as e:
        return _failure("select_covariates", e, "Failed to select covariates")


@mcp.tool(description="Bootstrap mean and median scores of every covariate of a CSV dataset")
def bootstrap_scores(file_path: str, replicates: int = 100, response: str = "y", response_kind: str = "binary",
                     clusters: str = "auto", seed: Optional[int] = None) -> dict:
    """Score stability over bootstrap samples."""
    logger.info(f"🔁 bootstrap_scores called with file_path: {file_path}, replicates={replicates}")
    try:
        cfg = resolve_config(seed=seed, clusters=clusters)
        data = load_csv(_resolve(file_path), response, response_kind)
        boot = run_bootstrap(data, replicates, config=cfg, k=cfg.clusters)
        frame = boot.to_frame().sort_values(["score", "bootstrap_median"], ascending=False, kind="mergesort")
        return {
            "success": True,
            "clusters": boot.k,
            "redraws": boot.redraws,
            "top": frame.head(TOP_N).to_dict(orient="records"),
            "message": f"Bootstrap of {replicates} replicates completed",
        }
    except ArmadaError as e:
        return _failure("bootstrap_scores", e, "Failed to bootstrap scores")


@mcp.tool(description="Benchmark ARMADA against the raw test and the factor-adjusted procedure on a design")
def benchmark_design(design: str = "main", runs: int = 10, seed: int = settings.SEED,
                     jobs: int = settings.JOBS) -> dict:
    """Selection rates per effect group and pretreatment TP/FP summary."""
    logger.info(f"📊 benchmark_design called with design={design}, runs={runs}")
    try:
        cfg = resolve_config(seed=seed, jobs=jobs)
        report = run_benchmark(SimDesign.from_name(design), runs, seed, cfg, n_jobs=jobs)
        return {
            "success": True,
            "rates": report.rates.to_dict(orient="records"),
            "pretreatment": report.pretreatment.summary().to_dict(orient="records"),
            "roc_at": {str(f): report.mean_roc_at(f) for f in (0.05, 0.1, 0.2)},
            "message": f"Benchmark of {runs} runs completed",
        }
    except ArmadaError as e:
        return _failure("benchmark_design", e, "Failed to run benchmark")


if __name__ == "__main__":
    port = settings.PORT
    host = settings.HOST

    logger.info(f"🚀 Starting {SERVER_NAME} with FastMCP...")
    logger.info(f"🌍 Environment: {settings.ENVIRONMENT}")
    logger.info(f"🌐 Starting FastMCP server on {host}:{port}")
    logger.info(f"🔗 MCP endpoint: http://{host}:{port}/mcp")

    try:
        mcp.run(
            transport="http",
            host=host,
            port=port,
            stateless_http=True
        )
    except KeyboardInterrupt:
        logger.info("🛑 Server shutdown requested by user")
    finally:
        logger.info("🏁 Server shutdown complete")
