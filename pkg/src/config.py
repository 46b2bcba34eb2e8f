"""
Pipeline configuration: the JSON config file schema and its resolution
(settings defaults < JSON file < command-line flags).
"""
import json
import logging
import os
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict, List, Optional, Union

from errors import DataError
from settings import settings

logger = logging.getLogger(__name__)

LINKAGES = ("complete", "average", "single")
LASSO_RULES = ("min", "1se")


def parse_clusters(value) -> Optional[int]:
    if value is None or (isinstance(value, str) and value.strip().lower() == "auto"):
        return None
    try:
        k = int(value)
    except (TypeError, ValueError):
        raise DataError(f"clusters must be a positive integer or 'auto', got {value!r}")
    if k < 1:
        raise DataError(f"clusters must be a positive integer or 'auto', got {value!r}")
    return k


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable of a selection run; ``bank=None`` means the default method bank."""

    bank: Optional[List[Union[str, Dict[str, Any]]]] = None
    threshold: int = settings.SCORE_THRESHOLD
    clusters: Optional[int] = None
    seed: int = settings.SEED
    jobs: int = settings.JOBS
    q_max: int = settings.Q_MAX
    alpha: float = settings.ALPHA
    lasso_folds: int = settings.LASSO_FOLDS
    lasso_rule: str = "min"
    forest_trees: int = settings.FOREST_TREES
    interpret_trees: int = settings.INTERPRET_TREES
    interpret_forests: int = settings.INTERPRET_FORESTS
    stability_replicates: int = settings.STABILITY_REPLICATES
    k_max: int = settings.K_MAX
    linkage: str = "complete"

    def __post_init__(self):
        object.__setattr__(self, "clusters", parse_clusters(self.clusters))
        self.validate()

    def validate(self) -> None:
        problems = []
        if self.threshold < 0:
            problems.append(f"threshold must be >= 0, got {self.threshold}")
        if not 0.0 < self.alpha < 1.0:
            problems.append(f"alpha must be in (0, 1), got {self.alpha}")
        if self.q_max < 0:
            problems.append(f"q_max must be >= 0, got {self.q_max}")
        if self.lasso_folds < 3:
            problems.append(f"lasso_folds must be >= 3, got {self.lasso_folds}")
        if self.lasso_rule not in LASSO_RULES:
            problems.append(f"lasso_rule must be one of {LASSO_RULES}, got {self.lasso_rule!r}")
        if self.forest_trees < 100 or self.interpret_trees < 100:
            problems.append("forests need at least 100 trees")
        if self.interpret_forests < 2:
            problems.append(f"interpret_forests must be >= 2, got {self.interpret_forests}")
        if self.stability_replicates < 2:
            problems.append(f"stability_replicates must be >= 2, got {self.stability_replicates}")
        if self.k_max < 2:
            problems.append(f"k_max must be >= 2, got {self.k_max}")
        if self.linkage not in LINKAGES:
            problems.append(f"linkage must be one of {LINKAGES}, got {self.linkage!r}")
        if self.jobs == 0:
            problems.append("jobs must be non-zero")
        if problems:
            raise DataError("invalid configuration: " + "; ".join(problems))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise DataError(f"unknown configuration keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str) -> "PipelineConfig":
        if not os.path.exists(path):
            raise DataError(f"config file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise DataError(f"config file {path} is not valid JSON: {e}")
        if not isinstance(data, dict):
            raise DataError(f"config file {path} must hold a JSON object")
        logger.info(f"⚙️  Loaded config from {path}")
        return cls.from_dict(data)

    def merged(self, **overrides) -> "PipelineConfig":
        """Copy with every non-None override applied (``clusters="auto"`` resets to None)."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        unknown = sorted(set(changes) - {f.name for f in fields(self)})
        if unknown:
            raise DataError(f"unknown configuration keys: {', '.join(unknown)}")
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["clusters"] = "auto" if self.clusters is None else self.clusters
        return data


def resolve_config(path: Optional[str] = None, **overrides) -> PipelineConfig:
    """Settings defaults, then the JSON file, then explicit overrides."""
    base = PipelineConfig.from_json(path) if path else PipelineConfig()
    return base.merged(**overrides)
