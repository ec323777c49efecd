"""ROC AUC evaluation: pooled (unbalanced), per-label, and balanced averages.

The pooled "unbalanced" average treats every (clip, label) pair as one
sample of a single binary problem, so frequent and rare labels contribute in
proportion to their pair counts; the balanced average is the unweighted mean
of the 8 per-label AUCs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import EMOTION_LABELS, NUM_LABELS
from .errors import DegenerateLabelsError


@dataclass
class EvalRecord:
    """One clip's predicted probabilities and ground truth."""

    clip_id: str
    probabilities: np.ndarray  # (8,) in [0, 1]
    labels: np.ndarray  # (8,) binary
    epoch: int | None = None

    def __post_init__(self):
        self.probabilities = np.asarray(self.probabilities, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.probabilities.shape != (NUM_LABELS,) or self.labels.shape != (NUM_LABELS,):
            raise ValueError(f"records carry {NUM_LABELS} probabilities and labels")
        if not np.all(np.isfinite(self.probabilities)):
            raise ValueError("probabilities must be finite")
        if self.probabilities.min() < 0.0 or self.probabilities.max() > 1.0:
            raise ValueError("probabilities must lie in [0, 1]")


def _records_to_arrays(records) -> tuple[np.ndarray, np.ndarray]:
    records = list(records)
    if not records:
        raise DegenerateLabelsError("no evaluation records")
    scores = np.stack([r.probabilities for r in records])
    labels = np.stack([r.labels for r in records])
    return scores, labels


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    avg_rank = ends - (counts - 1) / 2.0
    return avg_rank[inverse]


def roc_auc_binary(scores, labels) -> float:
    """Probability that a random positive outranks a random negative.

    Ties count one half, which matches trapezoidal integration of the ROC
    curve.

    Raises:
        DegenerateLabelsError: fewer than one positive or one negative.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have the same length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError(
            f"need both classes, got {n_pos} positives / {n_neg} negatives"
        )
    ranks = _average_ranks(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def roc_auc_unbalanced(records) -> float:
    """Single AUC over all (clip, label) pairs pooled together."""
    scores, labels = _records_to_arrays(records)
    return roc_auc_binary(scores.ravel(), labels.ravel())


def per_label_auc(records) -> list[float | None]:
    """AUC per label column; None where a column is single-class."""
    scores, labels = _records_to_arrays(records)
    out = []
    for j in range(NUM_LABELS):
        try:
            out.append(roc_auc_binary(scores[:, j], labels[:, j]))
        except DegenerateLabelsError:
            out.append(None)
    return out


def roc_auc_balanced(records) -> float:
    """Unweighted mean of the 8 per-label AUCs.

    Raises:
        DegenerateLabelsError: naming the first single-class label.
    """
    scores, labels = _records_to_arrays(records)
    aucs = []
    for j in range(NUM_LABELS):
        try:
            aucs.append(roc_auc_binary(scores[:, j], labels[:, j]))
        except DegenerateLabelsError as exc:
            raise DegenerateLabelsError(
                f"label {EMOTION_LABELS[j]!r} has a single class"
            ) from exc
    return float(np.mean(aucs))


def roc_auc_prevalence_weighted(records) -> float:
    """Per-label AUCs averaged with weights proportional to positive counts.

    Alternative reading of "unbalanced average"; the pooled
    :func:`roc_auc_unbalanced` is the default everywhere else.
    """
    scores, labels = _records_to_arrays(records)
    aucs, weights = [], []
    for j in range(NUM_LABELS):
        try:
            aucs.append(roc_auc_binary(scores[:, j], labels[:, j]))
            weights.append(labels[:, j].sum())
        except DegenerateLabelsError:
            continue
    if not aucs or sum(weights) == 0:
        raise DegenerateLabelsError("no label column with both classes")
    return float(np.average(aucs, weights=weights))


def select_best_epoch(history) -> int:
    """Index of the highest validation metric; earliest epoch wins ties."""
    history = np.asarray(list(history), dtype=np.float64)
    if history.size == 0:
        raise ValueError("empty metric history")
    return int(np.argmax(history))


@dataclass
class PerEmotionReport:
    """Named per-label AUCs plus data for a bar chart."""

    aucs: list[float | None]
    warnings: list[str] = field(default_factory=list)
    label_names: tuple = EMOTION_LABELS

    def bar_data(self) -> dict:
        return {
            "labels": list(self.label_names),
            "auc": [None if a is None else float(a) for a in self.aucs],
        }


def per_emotion_report(records) -> PerEmotionReport:
    """Per-label AUCs in canonical order; degenerate columns become null
    entries with a warning instead of failing the whole report."""
    aucs = per_label_auc(records)
    warnings = [
        f"label {EMOTION_LABELS[j]!r} has a single class; AUC undefined"
        for j, a in enumerate(aucs)
        if a is None
    ]
    return PerEmotionReport(aucs=aucs, warnings=warnings)
