"""
Static SVG figures for benchmark reports, drawn with reportlab graphics.
"""
import logging
import os
from typing import Dict, List, Sequence, Tuple

import numpy as np
from reportlab.graphics import renderSVG
from reportlab.graphics.shapes import Drawing, Line, PolyLine, Rect, String
from reportlab.lib import colors

logger = logging.getLogger(__name__)

PALETTE = [colors.HexColor(c) for c in ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")]
FONT = "Helvetica"


class Panel:
    """A drawing with one plot area and linear axes."""

    def __init__(self, width: float, height: float, title: str,
                 x_range: Tuple[float, float], y_range: Tuple[float, float],
                 margins: Tuple[float, float, float, float] = (60, 20, 50, 40)):
        left, right, bottom, top = margins
        self.drawing = Drawing(width, height)
        self.x0, self.x1 = left, width - right
        self.y0, self.y1 = bottom, height - top
        self.x_range = x_range
        self.y_range = y_range if y_range[1] > y_range[0] else (y_range[0], y_range[0] + 1.0)
        self.drawing.add(String(width / 2, height - top / 2 - 4, title, fontName=FONT, fontSize=12,
                                textAnchor="middle"))
        self.drawing.add(Rect(self.x0, self.y0, self.x1 - self.x0, self.y1 - self.y0,
                              fillColor=None, strokeColor=colors.black, strokeWidth=0.8))

    def x(self, value: float) -> float:
        lo, hi = self.x_range
        return self.x0 + (value - lo) / (hi - lo) * (self.x1 - self.x0)

    def y(self, value: float) -> float:
        lo, hi = self.y_range
        return self.y0 + (value - lo) / (hi - lo) * (self.y1 - self.y0)

    def axes(self, x_label: str, y_label: str, x_ticks: Sequence[float] = (), y_ticks: Sequence[float] = (),
             x_tick_labels: Sequence[str] = ()) -> None:
        labels = list(x_tick_labels) or [f"{t:g}" for t in x_ticks]
        for t, label in zip(x_ticks, labels):
            self.drawing.add(Line(self.x(t), self.y0, self.x(t), self.y0 - 4, strokeColor=colors.black))
            self.drawing.add(String(self.x(t), self.y0 - 15, label, fontName=FONT, fontSize=8,
                                    textAnchor="middle"))
        for t in y_ticks:
            self.drawing.add(Line(self.x0 - 4, self.y(t), self.x0, self.y(t), strokeColor=colors.black))
            self.drawing.add(String(self.x0 - 7, self.y(t) - 3, f"{t:g}", fontName=FONT, fontSize=8,
                                    textAnchor="end"))
        self.drawing.add(String((self.x0 + self.x1) / 2, self.y0 - 32, x_label, fontName=FONT, fontSize=10,
                                textAnchor="middle"))
        # y label above the axis, strings are not rotated
        self.drawing.add(String(self.x0, self.y1 + 6, y_label, fontName=FONT, fontSize=10, textAnchor="middle"))

    def line(self, xs: Sequence[float], ys: Sequence[float], color, width: float = 1.5) -> None:
        points: List[float] = []
        for a, b in zip(xs, ys):
            points += [self.x(a), self.y(b)]
        self.drawing.add(PolyLine(points, strokeColor=color, strokeWidth=width))

    def legend(self, entries: Sequence[Tuple[str, object]]) -> None:
        for i, (name, color) in enumerate(entries):
            y = self.y1 - 14 - 13 * i
            self.drawing.add(Line(self.x1 - 110, y + 3, self.x1 - 92, y + 3, strokeColor=color, strokeWidth=2))
            self.drawing.add(String(self.x1 - 88, y, name, fontName=FONT, fontSize=8))

    def box(self, center: float, half_width: float, stats: Dict[str, float], color) -> None:
        """Box from q1 to q3 with the median line and whiskers to the 1.5 IQR fences."""
        left, right = self.x(center - half_width), self.x(center + half_width)
        mid = self.x(center)
        self.drawing.add(Rect(left, self.y(stats["q1"]), right - left, self.y(stats["q3"]) - self.y(stats["q1"]),
                              fillColor=colors.Color(color.red, color.green, color.blue, alpha=0.25),
                              strokeColor=color))
        self.drawing.add(Line(left, self.y(stats["median"]), right, self.y(stats["median"]),
                              strokeColor=color, strokeWidth=2))
        for end, edge in ((stats["low"], stats["q1"]), (stats["high"], stats["q3"])):
            self.drawing.add(Line(mid, self.y(edge), mid, self.y(end), strokeColor=color))

    def save(self, path: str) -> str:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(renderSVG.drawToString(self.drawing))
        logger.debug(f"🖼️  wrote {path}")
        return path


def box_stats(values: np.ndarray) -> Dict[str, float]:
    values = np.asarray(values, dtype=float)
    q1, median, q3 = np.percentile(values, [25, 50, 75])
    iqr = q3 - q1
    inside = values[(values >= q1 - 1.5 * iqr) & (values <= q3 + 1.5 * iqr)]
    return {"q1": q1, "median": median, "q3": q3, "low": float(inside.min()), "high": float(inside.max())}


def _ticks(lo: float, hi: float, n: int = 5) -> List[float]:
    return [float(t) for t in np.linspace(lo, hi, n)]


def roc_svg(roc, methods: Sequence[str], path: str, title: str = "Mean ROC curves") -> str:
    """``roc``: frame with an ``fpr`` column and one sensitivity column per method."""
    panel = Panel(420, 380, title, (0.0, 1.0), (0.0, 1.0))
    panel.axes("1 - specificity", "sensitivity", _ticks(0, 1, 6), _ticks(0, 1, 6))
    panel.line([0, 1], [0, 1], colors.lightgrey, width=0.8)
    for i, method in enumerate(methods):
        panel.line(roc["fpr"], roc[method], PALETTE[i % len(PALETTE)])
    panel.legend([(m, PALETTE[i % len(PALETTE)]) for i, m in enumerate(methods)])
    return panel.save(path)


def grouped_boxplot_svg(groups: Dict[str, np.ndarray], path: str, title: str, y_label: str) -> str:
    """One box per named sample (TP or FP counts per procedure, score distributions per group)."""
    names = list(groups)
    everything = np.concatenate([np.asarray(v, dtype=float) for v in groups.values()])
    lo, hi = float(everything.min()), float(everything.max())
    pad = 0.05 * (hi - lo) or 0.5
    panel = Panel(max(320, 70 * len(names) + 100), 360, title, (0.0, len(names) + 1.0), (lo - pad, hi + pad))
    panel.axes("", y_label, list(range(1, len(names) + 1)), _ticks(lo, hi), x_tick_labels=names)
    for i, name in enumerate(names):
        panel.box(i + 1, 0.3, box_stats(groups[name]), PALETTE[i % len(PALETTE)])
    return panel.save(path)


def mean_scores_svg(mean_scores: np.ndarray, path: str, max_score: int, title: str = "Mean score per covariate") -> str:
    p = mean_scores.shape[0]
    panel = Panel(600, 320, title, (1.0, float(p)), (0.0, float(max_score)))
    panel.axes("covariate", "mean score", _ticks(1, p, 5), _ticks(0, max_score, min(max_score, 8) + 1))
    panel.line(np.arange(1, p + 1), mean_scores, PALETTE[0], width=0.8)
    return panel.save(path)


def score_counts_boxplot_svg(score_counts, path: str, title: str = "Scores per group") -> str:
    """Box plots of the score distribution per group from a count table (group, "0", "1", ...)."""
    score_columns = [c for c in score_counts.columns if c != "group"]
    values = np.array([int(c) for c in score_columns])
    groups = {
        row["group"]: np.repeat(values, [int(row[c]) for c in score_columns])
        for _, row in score_counts.iterrows()
    }
    return grouped_boxplot_svg(groups, path, title, "score")
