"""
Exception types shared by the ARMADA modules.
"""
from typing import Optional


class ArmadaError(Exception):
    """Base class for every error raised by the selection pipeline."""


class DataError(ArmadaError, ValueError):
    """Input data cannot be used: bad file, bad cell, bad response, degenerate column."""


class ConvergenceError(ArmadaError, RuntimeError):
    """An iterative solver did not reach its tolerance within its iteration cap."""


class StageError(ArmadaError):
    """
    A pipeline stage failed.

    The stage label ("clustering", "pretreatment", "method:lasso", ...) and, for
    the per-cluster pretreatment, the cluster index are kept so the CLI and the
    tool server can report where the failure happened.
    """

    def __init__(self, stage: str, message: str, cluster: Optional[int] = None):
        self.stage = stage
        self.cluster = cluster
        where = stage if cluster is None else f"{stage} (cluster {cluster})"
        super().__init__(f"{where}: {message}")
