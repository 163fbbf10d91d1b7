"""Evaluation: confusion matrices, macro/micro metrics, run aggregation.

The confusion matrix is square over the gold label axis plus one overflow
column collecting predictions outside the axis (including UNMAPPED).
Per-class precision treats overflow as belonging to no class; the micro
pool counts every wrong prediction as one FN and one FP, which keeps
micro F1 identical to accuracy on single-label data.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyMatrix, IoFailure, LengthMismatch

OVERFLOW_LABEL = "UNMAPPED"


@dataclass
class ConfusionMatrix:
    labels: tuple[str, ...]   # gold axis, rows = gold
    counts: np.ndarray        # (n, n + 1); last column is overflow

    def __post_init__(self):
        self.labels = tuple(self.labels)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        n = len(self.labels)
        if self.counts.shape != (n, n + 1):
            raise LengthMismatch("counts must be (n, n+1) for n gold labels")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row(self, label: str) -> np.ndarray:
        return self.counts[self.labels.index(label)]


def confusion(gold, pred, label_order=None) -> ConfusionMatrix:
    """Count (gold, predicted) pairs over the gold label axis.

    `label_order` fixes the axis (extra names without gold support are
    dropped); by default the axis is the sorted set of gold labels.
    """
    gold = list(gold)
    pred = list(pred)
    if len(gold) != len(pred):
        raise LengthMismatch(f"{len(gold)} gold vs {len(pred)} predicted labels")
    if not gold:
        raise LengthMismatch("need at least one (gold, pred) pair")
    present = set(gold)
    if label_order is None:
        labels = tuple(sorted(present))
    else:
        labels = tuple(l for l in label_order if l in present)
        missing = present - set(labels)
        if missing:
            raise LengthMismatch(f"gold labels missing from label_order: "
                                 f"{sorted(missing)}")
    index = {label: i for i, label in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels) + 1), dtype=np.int64)
    overflow = len(labels)
    for g, p in zip(gold, pred):
        counts[index[g], index.get(p, overflow)] += 1
    return ConfusionMatrix(labels=labels, counts=counts)


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class MetricReport:
    macro_precision: float
    macro_f1: float
    micro_f1: float
    recall: float  # macro recall
    per_class: dict[str, ClassMetrics] = field(default_factory=dict)
    seed: int | None = None

    def as_dict(self) -> dict[str, float]:
        return {"macro_precision": self.macro_precision,
                "macro_f1": self.macro_f1,
                "micro_f1": self.micro_f1,
                "recall": self.recall}


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def compute_metrics(matrix: ConfusionMatrix, seed: int | None = None) -> MetricReport:
    """Per-class and macro/micro metrics from a confusion matrix."""
    if matrix.total == 0:
        raise EmptyMatrix("confusion matrix holds no counts")
    n = len(matrix.labels)
    counts = matrix.counts
    per_class: dict[str, ClassMetrics] = {}
    precisions, recalls, f1s = [], [], []
    for i, label in enumerate(matrix.labels):
        tp = int(counts[i, i])
        fp = int(counts[:, i].sum()) - tp   # overflow column is no class
        fn = int(counts[i, :].sum()) - tp   # includes overflow predictions
        precision = _safe_div(tp, tp + fp)
        recall = _safe_div(tp, tp + fn)
        f1 = _safe_div(2 * precision * recall, precision + recall)
        per_class[label] = ClassMetrics(precision, recall, f1,
                                        support=int(counts[i, :].sum()))
        precisions.append(precision)
        recalls.append(recall)
        f1s.append(f1)

    total = matrix.total
    pooled_tp = int(np.trace(counts[:, :n]))
    # every wrong prediction is one pooled FN and one pooled FP, so the
    # pooled harmonic mean reduces to plain accuracy; computing it from the
    # integer counts keeps that identity float-exact
    pooled_fp = total - pooled_tp
    pooled_fn = total - pooled_tp
    micro_f1 = _safe_div(2 * pooled_tp, 2 * pooled_tp + pooled_fp + pooled_fn)
    return MetricReport(macro_precision=float(np.mean(precisions)),
                        macro_f1=float(np.mean(f1s)),
                        micro_f1=micro_f1,
                        recall=float(np.mean(recalls)),
                        per_class=per_class, seed=seed)


def aggregate_runs(reports: list[MetricReport]) -> dict[str, tuple[float, float]]:
    """Mean and population standard deviation per summary metric."""
    if not reports:
        raise ValueError("need at least one report")
    out: dict[str, tuple[float, float]] = {}
    for metric in ("macro_precision", "macro_f1", "micro_f1", "recall"):
        values = np.array([getattr(r, metric) for r in reports], dtype=np.float64)
        out[metric] = (float(values.mean()), float(values.std()))
    return out


def _write_rows(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerows(rows)


def emit_report(report: MetricReport, matrix: ConfusionMatrix,
                path_prefix) -> dict[str, Path]:
    """Write metrics CSV, confusion CSV, and a plain-text matrix.

    Returns the written paths keyed by artifact name. Output is
    deterministic: fixed column order, 6 decimal places.
    """
    prefix = str(path_prefix)
    metrics_path = Path(prefix + "metrics.csv")
    confusion_path = Path(prefix + "confusion.csv")
    text_path = Path(prefix + "confusion.txt")
    try:
        metrics_path.parent.mkdir(parents=True, exist_ok=True)
        return _emit_files(report, matrix, metrics_path, confusion_path, text_path)
    except OSError as exc:
        raise IoFailure(f"cannot write report files: {exc}") from exc


def _emit_files(report, matrix, metrics_path, confusion_path, text_path):

    rows = [["metric", "value"]]
    for name, value in report.as_dict().items():
        rows.append([name, f"{value:.6f}"])
    for label in matrix.labels:
        cm = report.per_class[label]
        rows.append([f"precision[{label}]", f"{cm.precision:.6f}"])
        rows.append([f"recall[{label}]", f"{cm.recall:.6f}"])
        rows.append([f"f1[{label}]", f"{cm.f1:.6f}"])
    _write_rows(metrics_path, rows)

    header = ["gold\\pred", *matrix.labels, OVERFLOW_LABEL]
    body = [[label, *map(str, matrix.counts[i])]
            for i, label in enumerate(matrix.labels)]
    _write_rows(confusion_path, [header, *body])

    widths = [max(len(str(cell)) for cell in col)
              for col in zip(header, *body)]
    lines = []
    for row in [header, *body]:
        lines.append("  ".join(str(cell).rjust(w) for cell, w in zip(row, widths)))
    text_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    return {"metrics": metrics_path, "confusion": confusion_path,
            "confusion_text": text_path}
