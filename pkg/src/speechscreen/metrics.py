"""Binary classification metrics, ROC/AUROC, and cross-fold aggregation.

Positive class is ASD throughout. Precision/recall/F1 come in two flavors:
positive-class and support-weighted average over both classes; zero
denominators yield 0 with an explicit degenerate flag instead of silently
poisoning aggregates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .validation import POSITIVE_LABEL, check_labels


@dataclass
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


@dataclass
class PrfScores:
    precision: float
    recall: float
    f1: float
    degenerate: bool  # some zero-denominator metric was forced to 0


@dataclass
class ClassificationScores:
    confusion: ConfusionMatrix
    accuracy: float
    positive: PrfScores
    weighted: PrfScores


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # +inf anchor first, then distinct scores descending
    auc: float

    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist(), self.thresholds.tolist()))


def _ratio(num: int, den: int) -> tuple[float, bool]:
    if den == 0:
        return 0.0, True
    return num / den, False


def _f1(precision: float, recall: float) -> tuple[float, bool]:
    if precision + recall == 0.0:
        return 0.0, True
    return 2.0 * precision * recall / (precision + recall), False


def confusion_and_scores(labels, predicted) -> ClassificationScores:
    """Confusion matrix plus accuracy and both PRF averaging modes."""
    y = check_labels(labels, "labels")
    p = check_labels(predicted, "predicted")
    if y.size != p.size:
        raise ValueError(f"labels and predictions differ in length: {y.size} vs {p.size}")
    if y.size == 0:
        raise ValueError("empty inputs")

    actual_pos = y == POSITIVE_LABEL
    pred_pos = p == POSITIVE_LABEL
    tp = int(np.count_nonzero(actual_pos & pred_pos))
    fp = int(np.count_nonzero(~actual_pos & pred_pos))
    tn = int(np.count_nonzero(~actual_pos & ~pred_pos))
    fn = int(np.count_nonzero(actual_pos & ~pred_pos))
    cm = ConfusionMatrix(tp, fp, tn, fn)

    n = cm.total
    accuracy = (tp + tn) / n

    prec_pos, d1 = _ratio(tp, tp + fp)
    rec_pos, d2 = _ratio(tp, tp + fn)
    f1_pos, d3 = _f1(prec_pos, rec_pos)
    positive = PrfScores(prec_pos, rec_pos, f1_pos, d1 or d2 or d3)

    # per-class metrics weighted by class support; a zero-support class has
    # zero weight and its degenerate metrics are irrelevant
    prec_neg, e1 = _ratio(tn, tn + fn)
    rec_neg, e2 = _ratio(tn, tn + fp)
    f1_neg, e3 = _f1(prec_neg, rec_neg)
    support_pos = tp + fn
    support_neg = tn + fp
    w_prec = (support_pos * prec_pos + support_neg * prec_neg) / n
    w_rec = (support_pos * rec_pos + support_neg * rec_neg) / n
    w_f1 = (support_pos * f1_pos + support_neg * f1_neg) / n
    w_degen = (support_pos > 0 and (d1 or d2 or d3)) or (support_neg > 0 and (e1 or e2 or e3))
    weighted = PrfScores(w_prec, w_rec, w_f1, w_degen)

    return ClassificationScores(confusion=cm, accuracy=accuracy, positive=positive, weighted=weighted)


def roc_auc(labels, scores) -> RocCurve:
    """ROC staircase over descending distinct thresholds, trapezoidal AUC.

    Tied scores collapse into a single threshold step. Raises ValueError
    when only one class is present (AUROC is undefined, never 0).
    """
    y = check_labels(labels, "labels") == POSITIVE_LABEL
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size != y.size:
        raise ValueError("scores must be a 1-d sequence matching labels")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores contain non-finite values")
    n_pos = int(np.count_nonzero(y))
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC undefined: only one class present")

    order = np.argsort(s, kind="stable")[::-1]
    s_sorted = s[order]
    pos_sorted = y[order].astype(np.int64)

    # cumulative counts at the end of each tie group
    group_ends = np.nonzero(np.diff(s_sorted) != 0.0)[0]
    group_ends = np.concatenate([group_ends, [s_sorted.size - 1]])
    tp = np.cumsum(pos_sorted)[group_ends]
    fp = (group_ends + 1) - tp

    tpr = np.concatenate([[0.0], tp / n_pos])
    fpr = np.concatenate([[0.0], fp / n_neg])
    thresholds = np.concatenate([[np.inf], s_sorted[group_ends]])

    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1])) / 2.0)
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds, auc=auc)


def mean_std(values) -> tuple[float, float]:
    """Arithmetic mean and sample (n-1) standard deviation; std is 0 for n=1."""
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("no values to aggregate")
    n = len(vals)
    mean = sum(vals) / n
    if n == 1:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in vals) / (n - 1)
    return mean, math.sqrt(var)


def aggregate_folds(per_fold: list[dict]) -> dict:
    """Aggregate per-fold metric dicts into {metric: {mean, std, n[, excluded]}}.

    None values (e.g. an undefined AUROC) are excluded from that metric's
    aggregate and counted. A metric with zero present values raises.
    """
    if not per_fold:
        raise ValueError("no folds to aggregate")
    metrics = list(per_fold[0].keys())
    out: dict[str, dict] = {}
    for name in metrics:
        values = [fold[name] for fold in per_fold]
        present = [v for v in values if v is not None]
        if not present:
            raise ValueError(f"metric {name!r} has no present values across folds")
        mean, std = mean_std(present)
        entry = {"mean": mean, "std": std, "n": len(present)}
        excluded = len(values) - len(present)
        if excluded:
            entry["excluded"] = excluded
        out[name] = entry
    return out


def roc_csv(curve: RocCurve, comments: list[str] | None = None) -> str:
    """threshold,fpr,tpr rows; the +inf anchor prints as inf."""
    lines = list(comments or [])
    lines.append("threshold,fpr,tpr")
    for f, t, thr in zip(curve.fpr, curve.tpr, curve.thresholds):
        lines.append(f"{repr(float(thr))},{repr(float(f))},{repr(float(t))}")
    return "\n".join(lines) + "\n"
