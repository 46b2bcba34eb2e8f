"""
Clustering of covariates into homogeneous blocks.

Agglomerative clustering of variables: each cluster is summarised by its first
principal component and the homogeneity of a cluster is the leading eigenvalue of
its correlation matrix (the sum of squared correlations between the cluster's
covariates and that component). Each step merges the pair of clusters whose union
loses the least total homogeneity.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from sklearn.metrics import adjusted_rand_score

from dataset import StandardizedMatrix, standardize_array
from errors import ConvergenceError, DataError
from rng import STREAM_STABILITY, derive_rng

logger = logging.getLogger(__name__)

POWER_TOL = 1e-10
POWER_MAX_ITER = 10_000
MAX_REDRAWS = 10

# upper bound on floats materialised per batched eigen-solve
_BATCH_FLOATS = 5_000_000

MatrixLike = Union[StandardizedMatrix, np.ndarray]


def _values(m: MatrixLike) -> np.ndarray:
    return np.asarray(m.values if isinstance(m, StandardizedMatrix) else m, dtype=float)


def _names(m: MatrixLike, p: int) -> Tuple[str, ...]:
    names = getattr(m, "covariate_names", ()) or ()
    return tuple(names) if len(names) == p else tuple(f"X{j + 1}" for j in range(p))


def first_principal_component(sub: np.ndarray, tol: float = POWER_TOL,
                              max_iter: int = POWER_MAX_ITER) -> Tuple[np.ndarray, float]:
    """
    Leading principal component of a standardized n x m block by power iteration.

    Returns:
        (scores, eigenvalue): sample scores on the leading eigenvector of the
        correlation matrix and its eigenvalue; the eigenvector is signed so that
        the loading of the first column is non-negative.

    Raises:
        ConvergenceError: when the Rayleigh quotient has not settled after max_iter steps
    """
    x = np.asarray(sub, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, m = x.shape
    if m < 1:
        raise DataError("empty cluster")
    scale = 1.0 / (n - 1)

    def matvec(v):
        return x.T @ (x @ v) * scale

    # start from the largest column of R tilted toward the all-ones direction
    r = x.T @ x
    v = r[:, int(np.argmax(np.linalg.norm(r, axis=0)))] / max(np.linalg.norm(r), 1e-300) + 1.0 / np.sqrt(m)
    v /= np.linalg.norm(v)
    eigenvalue = float(v @ matvec(v))
    for it in range(1, max_iter + 1):
        w = matvec(v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            break
        v = w / norm
        updated = float(v @ matvec(v))
        if abs(updated - eigenvalue) <= tol * max(1.0, abs(updated)):
            eigenvalue = updated
            break
        eigenvalue = updated
    else:
        raise ConvergenceError(f"power iteration did not converge after {max_iter} iterations")

    if v[0] < 0:
        v = -v
    return x @ v, eigenvalue


def _leading_eigenvalue(block: np.ndarray) -> float:
    n, m = block.shape
    gram = block.T @ block if m <= n else block @ block.T
    return float(np.linalg.eigvalsh(gram / (n - 1))[-1])


def cluster_homogeneity(sub: np.ndarray) -> float:
    """Leading eigenvalue of the block's correlation matrix, in [1, m]."""
    x = np.asarray(sub, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return _leading_eigenvalue(x)


def _batched_leading_eigenvalues(x: np.ndarray, column_sets: List[np.ndarray]) -> np.ndarray:
    """Leading correlation eigenvalue of every column set, batched by set size."""
    n = x.shape[0]
    out = np.empty(len(column_sets))
    by_size: Dict[int, List[int]] = {}
    for i, cols in enumerate(column_sets):
        by_size.setdefault(len(cols), []).append(i)
    for size, idx in by_size.items():
        dim = min(size, n)
        chunk = max(1, _BATCH_FLOATS // (n * size + dim * dim))
        for start in range(0, len(idx), chunk):
            part = idx[start:start + chunk]
            cols = np.stack([column_sets[i] for i in part])          # (g, s)
            blocks = np.transpose(x[:, cols], (1, 0, 2))              # (g, n, s)
            if size <= n:
                mats = np.matmul(np.transpose(blocks, (0, 2, 1)), blocks)
            else:
                mats = np.matmul(blocks, np.transpose(blocks, (0, 2, 1)))
            out[part] = np.linalg.eigvalsh(mats / (n - 1))[:, -1]
    return out


@dataclass(frozen=True)
class Partition:
    """Assignment of the p covariates to K clusters labelled 1..K."""

    labels: np.ndarray
    k: int
    merge_heights: np.ndarray
    homogeneity: float
    covariate_names: Tuple[str, ...] = ()

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int)
        if labels.min() != 1 or set(np.unique(labels)) != set(range(1, self.k + 1)):
            raise DataError("partition labels must cover 1..K with no empty cluster")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def p(self) -> int:
        return self.labels.shape[0]

    def members(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)

    def clusters(self) -> List[np.ndarray]:
        return [self.members(c) for c in range(1, self.k + 1)]

    def sizes(self) -> List[int]:
        return [int(np.sum(self.labels == c)) for c in range(1, self.k + 1)]

    def to_frame(self) -> pd.DataFrame:
        names = self.covariate_names or tuple(f"X{j + 1}" for j in range(self.p))
        return pd.DataFrame({"covariate_name": list(names), "cluster_label": self.labels})

    @classmethod
    def single(cls, p: int, names: Sequence[str] = ()) -> "Partition":
        """All covariates in one cluster (global correction)."""
        return cls(np.ones(p, dtype=int), 1, np.zeros(0), float("nan"), tuple(names))

    @classmethod
    def from_labels(cls, labels: Sequence[int], names: Sequence[str] = ()) -> "Partition":
        """Partition from arbitrary labels, renumbered 1..K by first appearance."""
        return cls(_relabel(np.asarray(labels)), len(set(labels)), np.zeros(0), float("nan"), tuple(names))


@dataclass(frozen=True)
class StabilityCurve:
    k_values: np.ndarray
    mean_stability: np.ndarray
    chosen_k: int
    replicate_scores: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"k": self.k_values, "mean_stability": self.mean_stability})


def _relabel(groups: np.ndarray) -> np.ndarray:
    """Renumber group ids 1..K in order of first appearance."""
    _, first = np.unique(groups, return_index=True)
    order = np.argsort(np.argsort(first))
    _, inverse = np.unique(groups, return_inverse=True)
    return order[inverse] + 1


@dataclass(frozen=True)
class Dendrogram:
    """
    Full merge sequence of the agglomeration.

    ``merge_slots[t] = (a, b)`` with a < b: at step t the cluster held in slot b
    is merged into slot a. ``merge_nodes`` uses the usual linkage numbering
    (leaves 0..p-1, the cluster created at step t is node p + t).
    """

    merge_slots: np.ndarray
    merge_nodes: np.ndarray
    merge_heights: np.ndarray
    merge_sizes: np.ndarray
    covariate_names: Tuple[str, ...]

    @property
    def p(self) -> int:
        return self.merge_slots.shape[0] + 1

    def total_homogeneity(self, k: int) -> float:
        """Sum of cluster homogeneities after cutting at k clusters."""
        return float(self.p - np.sum(self.merge_heights[: self.p - k]))

    def cut(self, k: int) -> Partition:
        if not 1 <= k <= self.p:
            raise DataError(f"number of clusters must be in [1, {self.p}], got {k}")
        slot_of_leaf = np.arange(self.p)
        for a, b in self.merge_slots[: self.p - k]:
            slot_of_leaf[slot_of_leaf == b] = a
        return Partition(_relabel(slot_of_leaf), k, self.merge_heights.copy(),
                         self.total_homogeneity(k), self.covariate_names)

    def largest_jump_k(self) -> int:
        """Cluster count obtained by stopping just before the largest increase of merge height."""
        if self.p <= 2:
            return 1
        jumps = np.diff(self.merge_heights)
        merges = int(np.argmax(jumps)) + 1
        return self.p - merges

    def to_json(self) -> dict:
        return {
            "covariate_names": list(self.covariate_names),
            "merges": [
                {"left": int(l), "right": int(r), "height": float(h), "size": int(s)}
                for (l, r), h, s in zip(self.merge_nodes, self.merge_heights, self.merge_sizes)
            ],
        }


def build_hierarchy(m: MatrixLike) -> Dendrogram:
    """Run the full agglomeration from p singletons down to one cluster."""
    x = _values(m)
    n, p = x.shape
    if p < 2:
        raise DataError(f"clustering needs at least 2 covariates, got {p}")
    names = _names(m, p)

    members: List[np.ndarray] = [np.array([j]) for j in range(p)]
    homogeneity = np.ones(p)
    node_id = np.arange(p)
    active = np.ones(p, dtype=bool)

    # singleton pairs: leading eigenvalue of a 2x2 correlation matrix is 1 + |r|
    corr = x.T @ x / (n - 1)
    loss = 1.0 - np.abs(corr)
    np.clip(loss, 0.0, None, out=loss)
    np.fill_diagonal(loss, np.inf)

    merge_slots = np.zeros((p - 1, 2), dtype=int)
    merge_nodes = np.zeros((p - 1, 2), dtype=int)
    heights = np.zeros(p - 1)
    sizes = np.zeros(p - 1, dtype=int)

    for step in range(p - 1):
        # first minimum in row-major order of the symmetric table = smallest (a, b)
        flat = int(np.argmin(loss))
        a, b = divmod(flat, p)
        if a > b:
            a, b = b, a
        height = float(loss[a, b])

        merge_slots[step] = (a, b)
        merge_nodes[step] = (node_id[a], node_id[b])
        heights[step] = max(height, 0.0)
        members[a] = np.concatenate([members[a], members[b]])
        sizes[step] = members[a].size
        homogeneity[a] = homogeneity[a] + homogeneity[b] - heights[step]
        node_id[a] = p + step
        active[b] = False
        loss[b, :] = np.inf
        loss[:, b] = np.inf

        others = np.flatnonzero(active)
        others = others[others != a]
        if others.size:
            merged = _batched_leading_eigenvalues(x, [np.concatenate([members[a], members[j]]) for j in others])
            row = np.clip(homogeneity[a] + homogeneity[others] - merged, 0.0, None)
            loss[a, others] = row
            loss[others, a] = row
        if (step + 1) % 200 == 0:
            logger.debug(f"agglomeration step {step + 1}/{p - 1}")

    return Dendrogram(merge_slots, merge_nodes, heights, sizes, names)


def hierarchical_cluster(m: MatrixLike, k: Optional[int] = None) -> Partition:
    """
    Cluster the covariates of ``m`` and cut the hierarchy at ``k`` clusters.

    When ``k`` is None the dendrogram is cut below its largest merge-height jump.
    """
    p = _values(m).shape[1]
    if k is not None and not 1 <= k <= p:
        raise DataError(f"number of clusters must be in [1, {p}], got {k}")
    dendrogram = build_hierarchy(m)
    if k is None:
        k = dendrogram.largest_jump_k()
        logger.info(f"🌳 No cluster count given, largest merge-height jump gives K={k}")
    return dendrogram.cut(k)


def _stability_replicate(x: np.ndarray, reference: Dict[int, np.ndarray], seed: int,
                         replicate: int) -> np.ndarray:
    n = x.shape[0]
    for attempt in range(MAX_REDRAWS + 1):
        rng = derive_rng(seed, STREAM_STABILITY, replicate, attempt)
        rows = rng.integers(0, n, size=n)
        sample = x[rows]
        if np.all(np.ptp(sample, axis=0) > 0):
            break
        logger.warning(f"⚠️  stability replicate {replicate} has a constant column, redrawing")
    else:
        raise DataError(f"stability replicate {replicate} stayed degenerate after {MAX_REDRAWS} redraws")

    values, _, _ = standardize_array(sample)
    dendrogram = build_hierarchy(values)
    return np.array([
        max(0.0, adjusted_rand_score(reference[k], dendrogram.cut(k).labels))
        for k in sorted(reference)
    ])


def stability_select_k(m: MatrixLike, b: int, k_max: int, seed: int, n_jobs: int = 1) -> StabilityCurve:
    """
    Choose K by bootstrap stability of the hierarchy.

    Each replicate resamples the n samples with replacement, rebuilds the hierarchy
    and compares its cut at every k in 2..k_max with the cut of the original
    hierarchy by the adjusted Rand index (negative values count as 0). The chosen K
    maximises the mean agreement, the smallest K winning ties.
    """
    x = _values(m)
    p = x.shape[1]
    if b < 2:
        raise DataError(f"at least 2 bootstrap replicates are required, got {b}")
    if not 2 <= k_max <= p - 1:
        raise DataError(f"k_max must be in [2, {p - 1}], got {k_max}")

    original = build_hierarchy(m)
    reference = {k: original.cut(k).labels for k in range(2, k_max + 1)}
    logger.info(f"🔁 Stability selection of K over {b} bootstrap hierarchies (k=2..{k_max})")
    scores = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_stability_replicate)(x, reference, seed, r) for r in range(b)
    )
    scores = np.vstack(scores)
    mean = np.clip(scores.mean(axis=0), 0.0, 1.0)
    k_values = np.arange(2, k_max + 1)
    chosen = int(k_values[int(np.argmax(mean))])
    logger.info(f"✅ Stability selection chose K={chosen}")
    return StabilityCurve(k_values, mean, chosen, scores)
