"""Confusion-matrix metrics. Fall is the positive class throughout."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import CLASS_FALL


@dataclass
class EvalReport:
    tp: int
    tn: int
    fp: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    per_pair_recall: dict = field(default_factory=dict)
    threshold_sweep: list = field(default_factory=list)

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn


def _safe_div(num, den):
    return num / den if den else 0.0


def report_from_counts(tp, tn, fp, fn) -> EvalReport:
    accuracy = _safe_div(tp + tn, tp + tn + fp + fn)
    precision = _safe_div(tp, tp + fp)
    recall = _safe_div(tp, tp + fn)
    f1 = _safe_div(2 * precision * recall, precision + recall)
    return EvalReport(tp, tn, fp, fn, accuracy, precision, recall, f1)


def confusion_counts(preds, labels):
    """(tp, tn, fp, fn) from integer class arrays."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    pos_pred = preds == CLASS_FALL
    pos_true = labels == CLASS_FALL
    tp = int(np.sum(pos_pred & pos_true))
    tn = int(np.sum(~pos_pred & ~pos_true))
    fp = int(np.sum(pos_pred & ~pos_true))
    fn = int(np.sum(~pos_pred & pos_true))
    return tp, tn, fp, fn


def report_from_predictions(preds, labels) -> EvalReport:
    return report_from_counts(*confusion_counts(preds, labels))


def threshold_sweep(fall_probs, labels, thresholds=None):
    """(threshold, precision, recall) triples across decision thresholds."""
    if thresholds is None:
        thresholds = np.round(np.arange(0.05, 1.0, 0.05), 2)
    fall_probs = np.asarray(fall_probs)
    out = []
    for t in thresholds:
        preds = np.where(fall_probs >= t, CLASS_FALL, 1 - CLASS_FALL)
        r = report_from_predictions(preds, labels)
        out.append((float(t), r.precision, r.recall))
    return out
