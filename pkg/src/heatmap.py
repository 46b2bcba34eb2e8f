"""
Co-clustered heatmap of selected covariates: samples and covariates are both
ordered by agglomerative clustering on Euclidean distances of the per-covariate
standardized values, then drawn as an SVG with both dendrograms.
"""
import logging
import os
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from reportlab.graphics import renderSVG
from reportlab.graphics.shapes import Drawing, Line, Rect, String
from reportlab.lib import colors
from scipy.cluster.hierarchy import dendrogram, linkage

from config import LINKAGES
from dataset import Dataset
from errors import DataError

logger = logging.getLogger(__name__)

CLIP = 3.0
LOW = colors.HexColor("#2166ac")
MID = colors.white
HIGH = colors.HexColor("#b2182b")
MAX_ROW_LABELS = 60
MAX_COLUMN_LABELS = 80


@dataclass(frozen=True)
class HeatmapSpec:
    """Rows are the selected covariates, columns the samples, both in input order."""

    values: np.ndarray
    covariate_names: Tuple[str, ...]
    sample_labels: Tuple[str, ...]
    row_order: np.ndarray
    column_order: np.ndarray
    row_linkage: Optional[np.ndarray]
    column_linkage: Optional[np.ndarray]
    bounds: Tuple[float, float] = (-CLIP, CLIP)
    method: str = "complete"

    def ordered(self) -> np.ndarray:
        return self.values[np.ix_(self.row_order, self.column_order)]


def normalize_rows(values: np.ndarray) -> np.ndarray:
    """Each row to mean 0 and sd 1; constant rows become 0."""
    values = np.asarray(values, dtype=float)
    centered = values - values.mean(axis=1, keepdims=True)
    sd = values.std(axis=1, ddof=1, keepdims=True) if values.shape[1] > 1 else np.zeros((values.shape[0], 1))
    return np.divide(centered, sd, out=np.zeros_like(centered), where=sd > 0)


def _cluster(values: np.ndarray, method: str) -> Tuple[Optional[np.ndarray], np.ndarray]:
    if values.shape[0] < 2:
        return None, np.arange(values.shape[0])
    z = linkage(values, method=method, metric="euclidean")
    return z, np.asarray(dendrogram(z, no_plot=True)["leaves"], dtype=int)


def cocluster(d: Dataset, selected: Sequence[int], labels: Optional[Sequence[str]] = None,
              method: str = "complete") -> HeatmapSpec:
    selected = np.asarray(selected, dtype=int)
    if selected.size == 0:
        raise DataError("the heatmap needs at least one selected covariate")
    if method not in LINKAGES:
        raise DataError(f"linkage must be one of {LINKAGES}, got {method!r}")
    if labels is None:
        labels = [f"{v:g}" for v in d.response.values]
    if len(labels) != d.n:
        raise DataError(f"{len(labels)} sample labels for {d.n} samples")

    values = normalize_rows(np.asarray(d.matrix)[:, selected].T)
    row_linkage, row_order = _cluster(values, method)
    column_linkage, column_order = _cluster(values.T, method)
    return HeatmapSpec(values, tuple(d.covariate_names[j] for j in selected), tuple(str(s) for s in labels),
                       row_order, column_order, row_linkage, column_linkage, (-CLIP, CLIP), method)


def _color(value: float):
    t = float(np.clip(value, -CLIP, CLIP)) / CLIP
    end = HIGH if t > 0 else LOW
    t = abs(t)
    return colors.Color(MID.red + t * (end.red - MID.red), MID.green + t * (end.green - MID.green),
                        MID.blue + t * (end.blue - MID.blue))


def _draw_tree(drawing: Drawing, z: np.ndarray, leaf_pos, branch_pos, vertical: bool) -> None:
    """Draw the dendrogram of ``z``; ``leaf_pos`` maps leaf coordinates, ``branch_pos`` relative heights."""
    tree = dendrogram(z, no_plot=True)
    top = max(max(d) for d in tree["dcoord"]) or 1.0
    for xs, hs in zip(tree["icoord"], tree["dcoord"]):
        pos = [leaf_pos((x - 5.0) / 10.0) for x in xs]
        height = [branch_pos(h / top) for h in hs]
        for i in range(3):
            if vertical:
                drawing.add(Line(pos[i], height[i], pos[i + 1], height[i + 1], strokeWidth=0.6))
            else:
                drawing.add(Line(height[i], pos[i], height[i + 1], pos[i + 1], strokeWidth=0.6))


def render_svg(spec: HeatmapSpec) -> str:
    n_rows, n_cols = spec.values.shape
    cell_w = float(np.clip(600.0 / n_cols, 4.0, 16.0))
    cell_h = float(np.clip(600.0 / n_rows, 4.0, 16.0))
    tree = 80.0
    left, bottom = tree + 10, 70.0
    width = left + n_cols * cell_w + 160
    height = bottom + n_rows * cell_h + tree + 40
    drawing = Drawing(width, height)
    ordered = spec.ordered()

    # rows are drawn top to bottom in leaf order
    top = bottom + n_rows * cell_h
    for i in range(n_rows):
        for j in range(n_cols):
            drawing.add(Rect(left + j * cell_w, top - (i + 1) * cell_h, cell_w, cell_h,
                             fillColor=_color(ordered[i, j]), strokeColor=None, strokeWidth=0))

    if spec.column_linkage is not None:
        _draw_tree(drawing, spec.column_linkage, lambda i: left + (i + 0.5) * cell_w,
                   lambda h: top + 4 + h * (tree - 10), vertical=True)
    if spec.row_linkage is not None:
        _draw_tree(drawing, spec.row_linkage, lambda i: top - (i + 0.5) * cell_h,
                   lambda h: left - 4 - h * (tree - 10), vertical=False)

    if n_rows <= MAX_ROW_LABELS:
        for i, r in enumerate(spec.row_order):
            drawing.add(String(left + n_cols * cell_w + 4, top - (i + 1) * cell_h + cell_h / 2 - 3,
                               spec.covariate_names[r], fontName="Helvetica", fontSize=min(8, cell_h)))
    if n_cols <= MAX_COLUMN_LABELS:
        for j, c in enumerate(spec.column_order):
            drawing.add(String(left + j * cell_w + cell_w / 2, bottom - 12, spec.sample_labels[c],
                               fontName="Helvetica", fontSize=min(7, cell_w), textAnchor="middle"))

    # color bar
    bar_x = left + n_cols * cell_w + 100
    steps = 24
    for s in range(steps):
        value = -CLIP + 2 * CLIP * (s + 0.5) / steps
        drawing.add(Rect(bar_x, bottom + s * 6, 12, 6, fillColor=_color(value), strokeColor=None, strokeWidth=0))
    for value in (-CLIP, 0.0, CLIP):
        y = bottom + (value + CLIP) / (2 * CLIP) * steps * 6
        drawing.add(String(bar_x + 16, y - 3, f"{value:g}", fontName="Helvetica", fontSize=7))
    return renderSVG.drawToString(drawing)


def cocluster_heatmap(d: Dataset, selected: Sequence[int], labels: Optional[Sequence[str]] = None,
                      path: Optional[str] = None, method: str = "complete") -> HeatmapSpec:
    """Co-cluster the selected covariates and the samples; writes the SVG when ``path`` is given."""
    spec = cocluster(d, selected, labels, method)
    if path:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(render_svg(spec))
        logger.info(f"🗺️  Heatmap of {spec.values.shape[0]} covariates x {spec.values.shape[1]} samples: {path}")
    return spec
