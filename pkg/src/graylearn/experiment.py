"""Experiment plumbing: build the contaminated train/test pair for a seed,
train one method on it and summarise the result."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field, replace

import numpy as np

from graylearn.data import (
    LabeledDataset,
    Labeling,
    MixtureSpec,
    gen_blobs,
    load_csv,
    make_smallest_class_ood,
    mix,
    split_classes,
    train_test_split,
)
from graylearn.losses import LossMethod
from graylearn.metrics import MetricsReport, evaluate
from graylearn.rng import derive_seed
from graylearn.train import TrainConfig, TrainRecord, train

STREAM_DATA = 10
STREAM_SPLIT = 11
STREAM_MIX = 12
STREAM_TRAIN = 13


@dataclass(frozen=True)
class DataSource:
    kind: str = "blobs"  # "blobs" or "csv"
    # blobs
    n_per_class: int = 50
    classes: int = 6
    features: int = 10
    centers_scale: float = 3.0
    noise_sd: float = 1.0
    # csv
    path: str = ""
    label_column: str = "-1"
    has_header: bool = True
    # which classes form the OOD pool: "smallest" or explicit class indices
    ood: str = "4,5"
    test_fraction: float = 0.3

    def load(self, seed: int) -> LabeledDataset:
        if self.kind == "blobs":
            return gen_blobs(self.n_per_class, self.classes, self.features, self.centers_scale, self.noise_sd, seed)
        if self.kind == "csv":
            return load_csv(self.path, self.label_column, self.has_header)
        raise ValueError(f"unknown data source {self.kind!r}")

    def split_pool(self, data: LabeledDataset) -> tuple[LabeledDataset, LabeledDataset]:
        if self.ood.strip().lower() == "smallest":
            return make_smallest_class_ood(data)
        return split_classes(data, [int(c) for c in self.ood.replace(";", ",").split(",") if c.strip()])


@dataclass(frozen=True)
class Experiment:
    data: DataSource = field(default_factory=DataSource)
    mixture: MixtureSpec = field(default_factory=lambda: MixtureSpec(alpha=0.1))
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)


def prepare(exp: Experiment, seed: int, alpha: float | None = None, labeling: Labeling | None = None):
    """(train, test) for one replicate. The test set is clean ID data; the
    contamination replaces part of the ID training split."""
    raw = exp.data.load(derive_seed(seed, STREAM_DATA))
    id_part, pool = exp.data.split_pool(raw)
    train_id, test = train_test_split(id_part, exp.data.test_fraction, derive_seed(seed, STREAM_SPLIT))
    spec = replace(
        exp.mixture,
        alpha=exp.mixture.alpha if alpha is None else alpha,
        labeling=exp.mixture.labeling if labeling is None else labeling,
        seed=derive_seed(seed, STREAM_MIX),
    )
    return mix(train_id, pool, spec), test


@dataclass(frozen=True)
class CellResult:
    method: str
    alpha: float
    labeling: str
    seed: int
    accuracy: float
    ece: float
    gap: float  # final-epoch ID minus OOD confidence (NaN without OOD rows)
    wall_clock: float
    record: TrainRecord = field(repr=False, compare=False, default=None)  # type: ignore[assignment]
    report: MetricsReport = field(repr=False, compare=False, default=None)  # type: ignore[assignment]


def run_cell(exp: Experiment, method: LossMethod, seed: int, alpha: float | None = None, labeling: Labeling | None = None, datasets=None) -> CellResult:
    train_set, test = datasets if datasets is not None else prepare(exp, seed, alpha, labeling)
    cfg = replace(exp.train, method=method, seed=derive_seed(seed, STREAM_TRAIN))
    record = train(cfg, train_set)
    report = evaluate(record.params, test)
    last = record.epochs[-1]
    return CellResult(
        method=str(method),
        alpha=exp.mixture.alpha if alpha is None else alpha,
        labeling=(exp.mixture.labeling if labeling is None else labeling).value,
        seed=seed,
        accuracy=report.accuracy,
        ece=report.ece,
        gap=last.id_confidence - last.ood_confidence,
        wall_clock=record.wall_clock,
        record=record,
        report=report,
    )


def mean_std(values) -> tuple[float, float]:
    """Mean and sample standard deviation (0 for a single value)."""
    values = [float(v) for v in values]
    if not values:
        return math.nan, math.nan
    return statistics.fmean(values), statistics.stdev(values) if len(values) > 1 else 0.0


def method_means(cells, attr: str = "accuracy") -> dict[str, float]:
    groups: dict[str, list[float]] = {}
    for c in cells:
        groups.setdefault(c.method, []).append(getattr(c, attr))
    return {m: float(np.mean(v)) for m, v in groups.items()}
