"""Detection metrics: elementwise confusion counting, precision, recall,
F1 with the usual zero-denominator conventions, and a best-threshold sweep
for the naive per-channel z-score baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class MetricsReport:
    precision: float
    recall: float
    f1: float
    counts: ConfusionCounts
    per_kind: dict[str, dict[str, float]] | None = None

    def to_dict(self) -> dict:
        out = {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "counts": {
                "tp": self.counts.tp,
                "fp": self.counts.fp,
                "fn": self.counts.fn,
                "tn": self.counts.tn,
            },
        }
        if self.per_kind is not None:
            out["per_kind"] = self.per_kind
        return out


def confusion(pred: np.ndarray, truth: np.ndarray) -> ConfusionCounts:
    """Elementwise counting over every (node, modality, time) cell."""
    pred = np.asarray(pred).astype(bool)
    truth = np.asarray(truth).astype(bool)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    tn = int(np.sum(~pred & ~truth))
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def metrics(counts: ConfusionCounts) -> MetricsReport:
    """Precision, recall and their harmonic mean; zero denominators give 0."""
    tp, fp, fn = counts.tp, counts.fp, counts.fn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MetricsReport(precision=precision, recall=recall, f1=f1, counts=counts)


def evaluate(
    pred: np.ndarray,
    truth: np.ndarray,
    kinds: np.ndarray | None = None,
    kind_names: dict[int, str] | None = None,
) -> MetricsReport:
    """Full report; with kind codes supplied, adds per-kind recall."""
    report = metrics(confusion(pred, truth))
    if kinds is not None and kind_names:
        breakdown = {}
        pred_b = np.asarray(pred).astype(bool)
        for code, name in sorted(kind_names.items()):
            mask = np.asarray(kinds) == code
            positives = int(mask.sum())
            if positives == 0:
                continue
            caught = int(np.sum(pred_b & mask))
            breakdown[name] = {"recall": caught / positives, "positives": positives}
        report.per_kind = breakdown
    return report


def best_f1(scores: np.ndarray, truth: np.ndarray) -> tuple[float, float]:
    """Best achievable F1 over every threshold of a score field.

    Sweeps the unique score values as strict thresholds and returns
    (best_f1, best_threshold). This is the oracle-threshold comparison the
    baseline gets; the model's own threshold is fitted on training data.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    truth = np.asarray(truth).astype(bool).ravel()
    if scores.shape != truth.shape:
        raise ValueError("scores and truth must align")
    total_pos = int(truth.sum())
    if total_pos == 0:
        return 0.0, float("inf")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_truth = truth[order]
    tp_cum = np.cumsum(sorted_truth)
    kept = np.arange(1, scores.size + 1)
    # threshold just below sorted_scores[i] keeps items 0..i; skip ties mid-run
    boundary = np.ones(scores.size, dtype=bool)
    boundary[:-1] = sorted_scores[:-1] != sorted_scores[1:]
    precision = tp_cum / kept
    recall = tp_cum / total_pos
    denom = precision + recall
    f1 = np.where(denom > 0, 2 * precision * recall / np.maximum(denom, 1e-300), 0.0)
    f1 = np.where(boundary, f1, -1.0)
    best = int(np.argmax(f1))
    return float(f1[best]), float(sorted_scores[best])


def zscore_baseline_scores(values: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """|z| per (node, modality, time) against training-split statistics."""
    safe = np.where(sigma == 0, 1.0, sigma)
    return np.abs((values - mu[..., None]) / safe[..., None])
