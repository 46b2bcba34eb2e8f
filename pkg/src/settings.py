#!/usr/bin/env python3
"""
Settings module for the ARMADA covariate selection tools.
Handles environment variable loading and validation.
"""
import os
from typing import Optional
from dotenv import load_dotenv

# Load environment variables from .env file if it exists
load_dotenv()


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"Environment variable {name} must be an integer, got {raw!r}")


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return float(raw)
    except ValueError:
        raise ValueError(f"Environment variable {name} must be a number, got {raw!r}")


class Settings:
    """Configuration settings loaded from environment variables."""

    # Reproducibility / parallelism
    SEED: int = _env_int("ARMADA_SEED", 20240601)
    JOBS: int = _env_int("ARMADA_JOBS", 1)
    LOG_LEVEL: str = os.getenv("ARMADA_LOG_LEVEL", "INFO")
    RECORD_RUNTIMES: bool = os.getenv("ARMADA_RECORD_RUNTIMES", "0").lower() in ("1", "true", "yes")

    # Selection defaults
    ALPHA: float = _env_float("ARMADA_ALPHA", 0.05)
    SCORE_THRESHOLD: int = _env_int("ARMADA_SCORE_THRESHOLD", 1)
    Q_MAX: int = _env_int("ARMADA_Q_MAX", 12)
    LASSO_FOLDS: int = _env_int("ARMADA_LASSO_FOLDS", 5)
    FOREST_TREES: int = _env_int("ARMADA_FOREST_TREES", 500)
    INTERPRET_TREES: int = _env_int("ARMADA_INTERPRET_TREES", 100)
    INTERPRET_FORESTS: int = _env_int("ARMADA_INTERPRET_FORESTS", 3)
    STABILITY_REPLICATES: int = _env_int("ARMADA_STABILITY_REPLICATES", 20)
    K_MAX: int = _env_int("ARMADA_K_MAX", 10)

    # Tool server configuration
    PORT: int = _env_int("PORT", 8000)
    HOST: str = os.getenv("HOST", "0.0.0.0")
    ENVIRONMENT: str = os.getenv("ENVIRONMENT", "development")
    DATA_DIR: Optional[str] = os.getenv("ARMADA_DATA_DIR")

    @classmethod
    def is_production(cls) -> bool:
        """Check if running in production environment."""
        return cls.ENVIRONMENT.lower() == "production"

    @classmethod
    def validate(cls) -> bool:
        """Validate that numeric settings are inside their usable ranges."""
        checks = [
            cls.JOBS != 0,
            0.0 < cls.ALPHA < 1.0,
            cls.Q_MAX >= 0,
            cls.LASSO_FOLDS >= 3,
            cls.FOREST_TREES >= 100,
            cls.INTERPRET_TREES >= 100,
            cls.INTERPRET_FORESTS >= 2,
            cls.STABILITY_REPLICATES >= 2,
            cls.K_MAX >= 2,
        ]
        return all(checks)

    @classmethod
    def as_dict(cls) -> dict:
        """Get the pipeline defaults as a dictionary."""
        return {
            "seed": cls.SEED,
            "jobs": cls.JOBS,
            "alpha": cls.ALPHA,
            "threshold": cls.SCORE_THRESHOLD,
            "q_max": cls.Q_MAX,
            "lasso_folds": cls.LASSO_FOLDS,
            "forest_trees": cls.FOREST_TREES,
            "interpret_trees": cls.INTERPRET_TREES,
            "interpret_forests": cls.INTERPRET_FORESTS,
            "stability_replicates": cls.STABILITY_REPLICATES,
            "k_max": cls.K_MAX,
        }

# Global settings instance
settings = Settings()
