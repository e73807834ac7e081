"""Classification reports: confusion matrix, per-class and support-weighted
precision/recall/F1, text/JSON rendering, and a misclassification gallery.

Counting stays in integer arithmetic; division happens once per metric so the
values match a brute-force oracle exactly.
"""
from __future__ import annotations

import base64
import html
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySplit


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class ClassificationReport:
    class_names: list[str]
    per_class: list[ClassMetrics]
    weighted_avg: ClassMetrics
    matrix: np.ndarray  # rows = true class, columns = predicted class
    per_sample: list[tuple[str, int, int]] = field(default_factory=list)  # (sample_id, true, pred)

    def to_text(self) -> str:
        rows = [(name, m.precision, m.recall, m.f1)
                for name, m in zip(self.class_names, self.per_class)]
        rows.append(("Weighted Average", self.weighted_avg.precision,
                     self.weighted_avg.recall, self.weighted_avg.f1))
        return render_metrics_table(rows)

    def to_json(self) -> str:
        doc = {
            "classes": {
                name: {"precision": m.precision, "recall": m.recall,
                       "f1": m.f1, "support": m.support}
                for name, m in zip(self.class_names, self.per_class)
            },
            "weighted_avg": {
                "precision": self.weighted_avg.precision,
                "recall": self.weighted_avg.recall,
                "f1": self.weighted_avg.f1,
                "support": self.weighted_avg.support,
            },
            "confusion_matrix": self.matrix.tolist(),
            "per_sample": [
                {"sample_id": sid, "true": t, "pred": p} for sid, t, p in self.per_sample
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def render_metrics_table(rows) -> str:
    """Render (name, precision, recall, f1) rows, two decimals, space separated."""
    lines = ["Class Precision Recall F1 Score"]
    for name, p, r, f1 in rows:
        lines.append(f"{name} {p:.2f} {r:.2f} {f1:.2f}")
    return "\n".join(lines)


def confusion_matrix(true_ids, pred_ids, num_classes: int) -> np.ndarray:
    m = np.zeros((num_classes, num_classes), dtype=np.int64)
    for t, p in zip(true_ids, pred_ids):
        m[t, p] += 1
    return m


def _safe_div(num: int, den: int, what: str, cls: str) -> float:
    if den == 0:
        warnings.warn(f"{what} undefined for class {cls!r} (zero denominator); using 0")
        return 0.0
    return num / den


def report_from_matrix(matrix: np.ndarray, class_names,
                       per_sample=None) -> ClassificationReport:
    matrix = np.asarray(matrix, dtype=np.int64)
    per_class = []
    for c, name in enumerate(class_names):
        tp = int(matrix[c, c])
        support = int(matrix[c].sum())
        predicted = int(matrix[:, c].sum())
        precision = _safe_div(tp, predicted, "precision", name)
        recall = _safe_div(tp, support, "recall", name)
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        per_class.append(ClassMetrics(precision, recall, f1, support))

    total = sum(m.support for m in per_class)
    if total == 0:
        raise EmptySplit("no samples to evaluate")
    weighted = ClassMetrics(
        precision=sum(m.support * m.precision for m in per_class) / total,
        recall=sum(m.support * m.recall for m in per_class) / total,
        f1=sum(m.support * m.f1 for m in per_class) / total,
        support=total,
    )
    return ClassificationReport(
        class_names=list(class_names),
        per_class=per_class,
        weighted_avg=weighted,
        matrix=matrix,
        per_sample=list(per_sample or []),
    )


def compute_report(true_ids, pred_ids, class_names, sample_ids=None) -> ClassificationReport:
    matrix = confusion_matrix(true_ids, pred_ids, len(class_names))
    per_sample = None
    if sample_ids is not None:
        per_sample = list(zip(sample_ids, (int(t) for t in true_ids), (int(p) for p in pred_ids)))
    return report_from_matrix(matrix, class_names, per_sample)


def weighted_f1(true_ids, pred_ids, num_classes: int) -> float:
    """Support-weighted F1 without the full report (used in the training loop)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m = confusion_matrix(true_ids, pred_ids, num_classes)
        rep = report_from_matrix(m, [str(c) for c in range(num_classes)])
    return rep.weighted_avg.f1


def evaluate(bundle, manifest, split: str, batch_size: int = 32) -> ClassificationReport:
    """Run the model over one split and build the classification report."""
    from .data import load_batch  # local import to keep module deps one-way

    samples = manifest.split_samples(split)
    if not samples:
        raise EmptySplit(f"split {split!r} has no samples")
    true_ids, pred_ids, sample_ids = [], [], []
    for start in range(0, len(samples), batch_size):
        idx = range(start, min(start + batch_size, len(samples)))
        images, labels = load_batch(manifest, split, idx, bundle.config.input_size)
        ids, _ = bundle.predict(images)
        true_ids.extend(labels)
        pred_ids.extend(int(i) for i in ids)
        sample_ids.extend(samples[i].sample_id for i in idx)
    return compute_report(true_ids, pred_ids, manifest.class_names(), sample_ids)


def misclassification_gallery(report: ClassificationReport,
                              overlay_png: dict[str, bytes],
                              max_per_cell: int = 6) -> str:
    """Static HTML gallery of wrongly predicted samples, grouped by confusion
    cell, worst cells first. ``overlay_png`` maps sample_id to PNG bytes."""
    if not report.per_sample:
        raise ValueError("report has no per-sample predictions; rerun evaluate()")

    cells: dict[tuple[int, int], list[str]] = {}
    for sid, t, p in report.per_sample:
        if t != p:
            cells.setdefault((t, p), []).append(sid)

    parts = ["<!doctype html><html><head><meta charset='utf-8'>"
             "<title>Misclassification gallery</title></head><body>"
             "<h1>Misclassification gallery</h1>"]
    ordered = sorted(cells.items(), key=lambda kv: (-len(kv[1]), kv[0]))
    for (t, p), sids in ordered:
        tn = html.escape(report.class_names[t])
        pn = html.escape(report.class_names[p])
        parts.append(f"<h2>true: {tn} &rarr; predicted: {pn} ({len(sids)} samples)</h2>")
        for sid in sids[:max_per_cell]:
            png = overlay_png.get(sid)
            if png is None:
                parts.append(f"<div>{html.escape(sid)} (no overlay)</div>")
            else:
                b64 = base64.b64encode(png).decode("ascii")
                parts.append(
                    f"<figure style='display:inline-block'>"
                    f"<img src='data:image/png;base64,{b64}' alt='{html.escape(sid)}'>"
                    f"<figcaption>{html.escape(sid)}</figcaption></figure>")
    if not ordered:
        parts.append("<p>No misclassified samples.</p>")
    parts.append("</body></html>")
    return "".join(parts)
