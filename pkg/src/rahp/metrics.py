"""Evaluation metrics: F1 on the helpful class and AUROC.

AUROC is computed two independent ways on every call (trapezoidal ROC
integration and the pairwise positive-outscores-negative fraction with
half credit for ties); the two must agree to 1e-9 and the pairwise value
is returned. This keeps the metric self-checking.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


def _validate_binary(labels):
    labels = np.asarray(labels)
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    return labels.astype(int)


def confusion_counts(predictions, labels):
    predictions = _validate_binary(predictions)
    labels = _validate_binary(labels)
    if predictions.shape != labels.shape or predictions.size == 0:
        raise ValueError("predictions and labels must be equal-length and non-empty")
    tp = int(((predictions == 1) & (labels == 1)).sum())
    fp = int(((predictions == 1) & (labels == 0)).sum())
    fn = int(((predictions == 0) & (labels == 1)).sum())
    tn = int(((predictions == 0) & (labels == 0)).sum())
    return tp, fp, fn, tn


def precision_recall(predictions, labels):
    tp, fp, fn, _tn = confusion_counts(predictions, labels)
    precision = tp / (tp + fp) if (tp + fp) else 0.0
    recall = tp / (tp + fn) if (tp + fn) else 0.0
    return precision, recall


def f1_score(predictions, labels):
    """Harmonic mean of precision and recall on the positive class.

    Undefined components count as zero; if both are zero, F1 is zero.
    """
    precision, recall = precision_recall(predictions, labels)
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _auroc_pairwise(scores, labels):
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = (pos[:, None] > neg[None, :]).sum(dtype=np.float64)
    ties = (pos[:, None] == neg[None, :]).sum(dtype=np.float64)
    return (wins + 0.5 * ties) / (pos.size * neg.size)


def _auroc_trapezoid(scores, labels):
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    n_pos = int((labels == 1).sum())
    n_neg = labels.size - n_pos

    tpr_points = [0.0]
    fpr_points = [0.0]
    tp = fp = 0
    i = 0
    while i < sorted_scores.size:
        j = i
        while j < sorted_scores.size and sorted_scores[j] == sorted_scores[i]:
            j += 1
        tp += int((sorted_labels[i:j] == 1).sum())
        fp += int((sorted_labels[i:j] == 0).sum())
        tpr_points.append(tp / n_pos)
        fpr_points.append(fp / n_neg)
        i = j

    area = 0.0
    for k in range(1, len(tpr_points)):
        area += (fpr_points[k] - fpr_points[k - 1]) * (
            tpr_points[k] + tpr_points[k - 1]
        ) / 2.0
    return area


def auroc(scores, labels):
    """Probability a random positive outscores a random negative."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = _validate_binary(labels)
    if scores.shape != labels.shape or scores.size == 0:
        raise ValueError("scores and labels must be equal-length and non-empty")
    if (labels == 1).all() or (labels == 0).all():
        raise ValueError("AUROC undefined: both classes must be present")
    pairwise = _auroc_pairwise(scores, labels)
    trapezoid = _auroc_trapezoid(scores, labels)
    if abs(pairwise - trapezoid) > 1e-9:
        raise RuntimeError(
            f"AUROC implementations disagree: pairwise {pairwise!r},"
            f" trapezoid {trapezoid!r}"
        )
    return float(pairwise)


@dataclass
class EvalReport:
    f1: float
    auroc: float
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int
    tn: int
    count: int
    config_fingerprint: str = ""

    @classmethod
    def from_scores(cls, scores, labels, config_fingerprint="", threshold=0.5):
        scores = np.asarray(scores, dtype=np.float64)
        labels = _validate_binary(labels)
        predictions = (scores >= threshold).astype(int)
        tp, fp, fn, tn = confusion_counts(predictions, labels)
        precision, recall = precision_recall(predictions, labels)
        return cls(
            f1=f1_score(predictions, labels),
            auroc=auroc(scores, labels),
            precision=precision,
            recall=recall,
            tp=tp, fp=fp, fn=fn, tn=tn,
            count=int(labels.size),
            config_fingerprint=config_fingerprint,
        )

    def to_dict(self):
        return {
            "f1": self.f1, "auroc": self.auroc,
            "precision": self.precision, "recall": self.recall,
            "confusion": {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn},
            "count": self.count,
            "config_fingerprint": self.config_fingerprint,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def table(self):
        lines = [
            f"instances   {self.count}",
            f"F1          {self.f1:.4f}",
            f"AUROC       {self.auroc:.4f}",
            f"precision   {self.precision:.4f}",
            f"recall      {self.recall:.4f}",
            f"confusion   tp={self.tp} fp={self.fp} fn={self.fn} tn={self.tn}",
        ]
        return "\n".join(lines)
