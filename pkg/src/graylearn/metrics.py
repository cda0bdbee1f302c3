"""Accuracy, expected calibration error and reliability tables."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from graylearn.data import LabeledDataset
from graylearn.numerics import ModelParams, forward, softmax

N_BINS = 20


@dataclass(frozen=True)
class PredictionSet:
    predicted: np.ndarray
    confidence: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.labels)

    @property
    def correct(self) -> np.ndarray:
        return self.predicted == self.labels

    @classmethod
    def from_probs(cls, probs: np.ndarray, labels) -> "PredictionSet":
        probs = np.asarray(probs, dtype=np.float64)
        # np.argmax returns the first maximum, i.e. ties go to the lowest class
        return cls(np.argmax(probs, axis=1), probs.max(axis=1), np.asarray(labels, dtype=np.int64))


@dataclass(frozen=True)
class ReliabilityBins:
    count: np.ndarray
    mean_confidence: np.ndarray  # NaN for empty bins
    accuracy: np.ndarray  # NaN for empty bins

    @property
    def n_bins(self) -> int:
        return len(self.count)

    def edges(self) -> list[tuple[float, float]]:
        return [(i / self.n_bins, (i + 1) / self.n_bins) for i in range(self.n_bins)]


def bin_index(conf: np.ndarray, n_bins: int = N_BINS) -> np.ndarray:
    """0-based bin of each confidence; bins are right-closed, 0 joins the first."""
    idx = np.ceil(np.asarray(conf, dtype=np.float64) * n_bins).astype(np.int64) - 1
    return np.clip(idx, 0, n_bins - 1)


def accuracy(preds: PredictionSet) -> float:
    if len(preds) == 0:
        raise ValueError("accuracy of an empty prediction set")
    return float(np.mean(preds.correct))


def reliability(preds: PredictionSet, n_bins: int = N_BINS) -> ReliabilityBins:
    b = bin_index(preds.confidence, n_bins)
    count = np.bincount(b, minlength=n_bins)
    conf_sum = np.bincount(b, weights=preds.confidence, minlength=n_bins)
    hit_sum = np.bincount(b, weights=preds.correct.astype(np.float64), minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        return ReliabilityBins(count, conf_sum / count, hit_sum / count)


def ece(preds: PredictionSet, n_bins: int = N_BINS) -> tuple[float, ReliabilityBins]:
    """Count-weighted mean |accuracy - confidence| over equal-width bins."""
    if len(preds) == 0:
        raise ValueError("ECE of an empty prediction set")
    bins = reliability(preds, n_bins)
    nonempty = bins.count > 0
    gaps = np.abs(bins.accuracy[nonempty] - bins.mean_confidence[nonempty])
    value = float(np.sum(bins.count[nonempty] / len(preds) * gaps))
    return value, bins


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    ece: float
    bins: ReliabilityBins
    per_class_accuracy: np.ndarray
    per_class_count: np.ndarray
    n: int


def predict(params: ModelParams, data: LabeledDataset) -> PredictionSet:
    return PredictionSet.from_probs(softmax(forward(params, data.features).logits), data.labels)


def evaluate(params: ModelParams, test: LabeledDataset) -> MetricsReport:
    """Accuracy, ECE and per-class accuracy on an in-distribution test set."""
    if test.n_ood:
        raise ValueError(f"test set contains {test.n_ood} OOD samples; evaluation is ID-only")
    if len(test) == 0:
        raise ValueError("empty test set")
    preds = predict(params, test)
    value, bins = ece(preds)
    counts = np.bincount(test.labels, minlength=test.num_classes)
    hits = np.bincount(test.labels, weights=preds.correct.astype(np.float64), minlength=test.num_classes)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = hits / counts
    return MetricsReport(accuracy(preds), value, bins, per_class, counts, len(test))


def reliability_rows(bins: ReliabilityBins) -> list[list]:
    rows = []
    for (lo, hi), n, conf, acc in zip(bins.edges(), bins.count, bins.mean_confidence, bins.accuracy):
        rows.append([lo, hi, int(n), 0.0 if math.isnan(conf) else float(conf), 0.0 if math.isnan(acc) else float(acc)])
    return rows


def write_reliability_csv(bins: ReliabilityBins, path) -> None:
    """Columns: bin_low, bin_high, count, mean_confidence, accuracy (0 for empty bins)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_low", "bin_high", "count", "mean_confidence", "accuracy"])
        for row in reliability_rows(bins):
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
