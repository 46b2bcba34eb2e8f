"""
Simulation designs: block-correlated covariates from a factor model in each
cluster, with response effects injected into the first covariates of every cluster.
"""
import logging
from dataclasses import asdict, dataclass
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from dataset import Dataset, ResponseKind, ResponseVariable
from errors import DataError
from rng import STREAM_SIMULATION, derive_rng, derive_seed

logger = logging.getLogger(__name__)

NOISE_GROUP = "-"

# (shift, label) per group of 10 covariates
MAIN_EFFECTS = ((1.5, "1.5"), (1.0, "1"), (0.75, "0.75"), (0.5, "0.5"))
# (weight, mean multiplier, label): shift ~ w N(a y, 1) + (1 - w) N(0, 1)
MIXTURE_EFFECTS = (
    (0.7, 3.0, "(0.7-3)"), (0.7, 2.0, "(0.7-2)"), (0.7, 1.0, "(0.7-1)"),
    (0.3, 3.0, "(0.3-3)"), (0.3, 2.0, "(0.3-2)"), (0.3, 1.0, "(0.3-1)"),
)
# slope per covariate
REGRESSION_EFFECTS = ((1.0, "1"), (0.8, "0.8"), (0.6, "0.6"), (0.4, "0.4"), (0.2, "0.2"))


class DesignKind(str, Enum):
    MAIN = "main"
    MIXTURE = "mixture"
    REGRESSION = "regression"


@dataclass(frozen=True)
class SimDesign:
    """
    A simulation design. ``marginal_variance`` is the variance of every simulated
    covariate before the response effect; None picks the design default
    (2.0 for the classification designs, 1.0 for the regression design).
    """

    kind: DesignKind
    n: int = 60
    n_clusters: int = 4
    cluster_size: int = 400
    q_per_cluster: Tuple[int, ...] = (4, 6, 8, 10)
    comvar: float = 0.8
    marginal_variance: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", DesignKind(self.kind))
        object.__setattr__(self, "q_per_cluster", tuple(int(q) for q in self.q_per_cluster))
        if len(self.q_per_cluster) != self.n_clusters:
            raise DataError(f"{len(self.q_per_cluster)} factor counts for {self.n_clusters} clusters")
        if not 0.0 < self.comvar < 1.0:
            raise DataError(f"comvar must be in (0, 1), got {self.comvar}")
        if self.cluster_size < self.influential_per_cluster:
            raise DataError(f"clusters need at least {self.influential_per_cluster} covariates for this design")
        if self.kind is not DesignKind.REGRESSION and self.n % 2:
            raise DataError(f"classification designs need an even n, got {self.n}")
        if any(q < 1 or q >= self.cluster_size for q in self.q_per_cluster):
            raise DataError("factor counts must be in [1, cluster_size)")

    @classmethod
    def from_name(cls, name: str, **overrides) -> "SimDesign":
        try:
            kind = DesignKind(str(name).lower())
        except ValueError:
            raise DataError(f"unknown design '{name}' (expected main, mixture or regression)")
        return cls(kind, **{k: v for k, v in overrides.items() if v is not None})

    @property
    def p(self) -> int:
        return self.n_clusters * self.cluster_size

    @property
    def variance(self) -> float:
        if self.marginal_variance is not None:
            return float(self.marginal_variance)
        return 1.0 if self.kind is DesignKind.REGRESSION else 2.0

    @property
    def response_kind(self) -> ResponseKind:
        return ResponseKind.CONTINUOUS if self.kind is DesignKind.REGRESSION else ResponseKind.BINARY

    @property
    def _groups(self) -> List[Tuple[str, int]]:
        if self.kind is DesignKind.MAIN:
            return [(label, 10) for _, label in MAIN_EFFECTS]
        if self.kind is DesignKind.MIXTURE:
            return [(label, 10) for _, _, label in MIXTURE_EFFECTS]
        return [(label, 1) for _, label in REGRESSION_EFFECTS]

    @property
    def influential_per_cluster(self) -> int:
        return sum(size for _, size in self._groups)

    def group_order(self) -> List[str]:
        return [label for label, _ in self._groups] + [NOISE_GROUP]

    def group_labels(self) -> List[str]:
        """Group key of every covariate ("1.5", ..., "-" for noise)."""
        block = [label for label, size in self._groups for _ in range(size)]
        block += [NOISE_GROUP] * (self.cluster_size - len(block))
        return block * self.n_clusters

    def truth(self) -> np.ndarray:
        return np.array([g != NOISE_GROUP for g in self.group_labels()])

    def covariate_names(self) -> Tuple[str, ...]:
        return tuple(f"c{k + 1}_x{i + 1}" for k in range(self.n_clusters) for i in range(self.cluster_size))

    def to_dict(self) -> dict:
        data = asdict(self)
        data["kind"] = self.kind.value
        data["q_per_cluster"] = list(self.q_per_cluster)
        data["marginal_variance"] = self.variance
        return data


def simulate_cluster(p_k: int, q_k: int, comvar: float, n: int, seed: int,
                     marginal_variance: Optional[float] = None) -> np.ndarray:
    """
    n x p_k block from a q_k-factor model whose common variance is exactly ``comvar``.

    Loading rows are drawn Gaussian and rescaled so every covariate has
    ||b_i||^2 = comvar * v and specific variance (1 - comvar) * v. Without a
    marginal variance the specific variances are 1.
    """
    if not 0.0 < comvar < 1.0:
        raise DataError(f"comvar must be in (0, 1), got {comvar}")
    if q_k < 1:
        raise DataError(f"at least one factor is required, got {q_k}")
    v = 1.0 / (1.0 - comvar) if marginal_variance is None else float(marginal_variance)
    rng = derive_rng(seed, STREAM_SIMULATION)
    loadings = rng.standard_normal((p_k, q_k))
    loadings *= np.sqrt(comvar * v) / np.linalg.norm(loadings, axis=1, keepdims=True)
    factors = rng.standard_normal((n, q_k))
    noise = rng.standard_normal((n, p_k)) * np.sqrt((1.0 - comvar) * v)
    return factors @ loadings.T + noise


def simulate_design(design: SimDesign, seed: int) -> Tuple[Dataset, np.ndarray]:
    """
    Draw one dataset of the design; returns it with the boolean truth vector.

    Covariates are drawn with marginal variance ``design.variance`` before the
    response effect is added: 2.0 for the main and mixture designs and 1.0 for
    the regression design, unless ``marginal_variance`` overrides it. The
    specific variances are then (1 - comvar) * variance rather than the identity
    that ``simulate_cluster`` uses when no variance is given.
    """
    n, size = design.n, design.cluster_size
    effect_rng = derive_rng(seed, STREAM_SIMULATION, 0)
    if design.kind is DesignKind.REGRESSION:
        y = effect_rng.standard_normal(n)
    else:
        y = np.repeat([0.0, 1.0], n // 2)

    blocks = []
    for k, q in enumerate(design.q_per_cluster):
        block = simulate_cluster(size, q, design.comvar, n, derive_seed(seed, STREAM_SIMULATION, k + 1),
                                 design.variance)
        start = 0
        if design.kind is DesignKind.MAIN:
            for shift, _ in MAIN_EFFECTS:
                block[:, start:start + 10] += shift * (y == 0)[:, None]
                start += 10
        elif design.kind is DesignKind.MIXTURE:
            for weight, mult, _ in MIXTURE_EFFECTS:
                linked = effect_rng.random((n, 10)) < weight
                shifts = np.where(linked, effect_rng.normal(mult * y[:, None], 1.0, (n, 10)),
                                  effect_rng.normal(0.0, 1.0, (n, 10)))
                block[:, start:start + 10] += shifts
                start += 10
        else:
            for slope, _ in REGRESSION_EFFECTS:
                block[:, start] += slope * y
                start += 1
        blocks.append(block)

    dataset = Dataset(
        matrix=np.hstack(blocks),
        covariate_names=design.covariate_names(),
        response=ResponseVariable(design.response_kind, y, "y"),
        sample_ids=tuple(f"s{i + 1}" for i in range(n)),
    )
    return dataset, design.truth()
