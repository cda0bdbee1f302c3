"""Mini-batch training with any loss method, plus binary checkpoints."""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from graylearn.data import LabeledDataset
from graylearn.losses import GL, LossMethod, per_sample_losses
from graylearn.numerics import (
    ModelParams,
    NumericError,
    backward,
    forward,
    init_params,
    make_optimizer,
    softmax,
    softmax_backward,
)
from graylearn.rng import Xoshiro256, derive_seed

STREAM_INIT = 1
STREAM_SHUFFLE = 2


@dataclass(frozen=True)
class TrainConfig:
    method: LossMethod = GL
    epochs: int = 10
    batch_size: int = 16
    optimizer: str = "adam"
    lr: float = 1e-3
    momentum: float = 0.9
    lr_schedule: tuple[tuple[int, float], ...] = ()  # (epoch, multiplier), 0-based epochs
    seed: int = 0
    detach_confidence: bool = False
    hidden: tuple[int, ...] = (128, 128)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        marks = [e for e, _ in self.lr_schedule]
        if any(b <= a for a, b in zip(marks, marks[1:])):
            raise ValueError("lr_schedule epochs must be strictly increasing")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden widths must be positive")

    def lr_at(self, epoch: int) -> float:
        lr = self.lr
        for e, mult in self.lr_schedule:
            if epoch >= e:
                lr *= mult
        return lr


def tabular_recipe(**overrides) -> TrainConfig:
    """2 x 128 ReLU, Adam(1e-3), 10 epochs, batches of 16."""
    return TrainConfig(**overrides)


def imagery_recipe(**overrides) -> TrainConfig:
    """SGD lr 0.1 with momentum, x0.1 at epochs 100 and 150, 200 epochs, batches of 128."""
    base = dict(epochs=200, batch_size=128, optimizer="sgd", lr=0.1, momentum=0.9, lr_schedule=((100, 0.1), (150, 0.1)))
    base.update(overrides)
    return TrainConfig(**base)


class TrainingAborted(NumericError):
    def __init__(self, epoch: int, batch: int, sample: int | None, reason: str):
        where = f"epoch {epoch}, batch {batch}" + (f", sample {sample}" if sample is not None else "")
        super().__init__(f"{reason} at {where}")
        self.epoch, self.batch, self.sample = epoch, batch, sample


@dataclass(frozen=True)
class EpochStats:
    loss: float  # mean per-sample training loss seen during the epoch
    train_accuracy: float
    id_confidence: float  # mean C(x, y) over ID-tagged rows, NaN if none
    ood_confidence: float  # mean C(x, y) over OOD-tagged rows, NaN if none


@dataclass
class TrainRecord:
    epochs: list[EpochStats]
    initial: EpochStats  # snapshot of the freshly initialised network
    params: ModelParams
    wall_clock: float = 0.0
    extra: dict = field(default_factory=dict)


def snapshot(params: ModelParams, data: LabeledDataset, method: LossMethod, loss: float | None = None) -> EpochStats:
    probs = softmax(forward(params, data.features).logits)
    conf = probs[np.arange(len(data)), data.labels]
    if loss is None:
        loss = float(np.mean(per_sample_losses(method, probs, data.labels)[0]))
    acc = float(np.mean(np.argmax(probs, axis=1) == data.labels))
    id_c = float(np.mean(conf[~data.ood])) if np.any(~data.ood) else float("nan")
    ood_c = float(np.mean(conf[data.ood])) if np.any(data.ood) else float("nan")
    return EpochStats(loss, acc, id_c, ood_c)


def train(config: TrainConfig, data: LabeledDataset, confidence_override=None) -> TrainRecord:
    """Train a fresh network on ``data``.

    Each epoch visits every sample once in a seeded Fisher-Yates order; the
    last partial batch is kept. ``confidence_override`` pins the GL blend
    weight (used to check that GL with weight 1 reproduces cross-entropy).
    """
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    layout = [data.n_features, *config.hidden, data.num_classes]
    params = init_params(layout, Xoshiro256(derive_seed(config.seed, STREAM_INIT)))
    shuffler = Xoshiro256(derive_seed(config.seed, STREAM_SHUFFLE))
    opt = make_optimizer(config.optimizer, config.lr, config.momentum)
    n = len(data)
    start = time.perf_counter()
    initial = snapshot(params, data, config.method)
    history = []
    for epoch in range(config.epochs):
        opt.lr = config.lr_at(epoch)
        order = shuffler.permutation(n)
        total = 0.0
        for b, lo in enumerate(range(0, n, config.batch_size)):
            idx = order[lo : lo + config.batch_size]
            x, y = data.features[idx], data.labels[idx]
            trace = forward(params, x)
            probs = softmax(trace.logits)
            losses, dprobs = per_sample_losses(config.method, probs, y, config.detach_confidence, confidence_override)
            bad = np.flatnonzero(~np.isfinite(losses))
            if bad.size:
                raise TrainingAborted(epoch, b, int(idx[bad[0]]), "non-finite loss")
            total += float(np.sum(losses))
            grads = backward(params, trace, softmax_backward(trace.logits, dprobs / len(idx)))
            try:
                opt.step(params, grads)
            except NumericError as exc:
                raise TrainingAborted(epoch, b, None, str(exc)) from exc
        history.append(snapshot(params, data, config.method, loss=total / n))
    return TrainRecord(history, initial, params, time.perf_counter() - start)


def confidence_gap(record: TrainRecord) -> np.ndarray:
    """Per-epoch mean ID confidence minus mean OOD confidence."""
    gaps = np.array([e.id_confidence - e.ood_confidence for e in record.epochs])
    if np.any(np.isnan(gaps)) or np.isnan(record.initial.id_confidence - record.initial.ood_confidence):
        raise ValueError("confidence gap needs both ID and OOD samples in the training data")
    return gaps


# --- checkpoints ----------------------------------------------------------

MAGIC = b"GLCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def checkpoint_bytes(params: ModelParams) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, params.depth)]
    for w, b in zip(params.weights, params.biases):
        parts.append(struct.pack("<II", *w.shape))
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(parts)


def checkpoint_save(params: ModelParams, path) -> None:
    """Little-endian: magic, u32 version, u32 layer count, then per layer
    u32 rows, u32 cols, rows*cols f64 weights (row-major), rows f64 biases."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(checkpoint_bytes(params))
    tmp.replace(path)


def checkpoint_load(path) -> ModelParams:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    if len(buf) < 12:
        raise CheckpointError(f"{path}: truncated header")
    version, depth = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    off = 12
    weights, biases = [], []
    for i in range(depth):
        if off + 8 > len(buf):
            raise CheckpointError(f"{path}: truncated at layer {i}")
        rows, cols = struct.unpack_from("<II", buf, off)
        off += 8
        need = 8 * (rows * cols + rows)
        if off + need > len(buf):
            raise CheckpointError(f"{path}: truncated at layer {i}")
        weights.append(np.frombuffer(buf, "<f8", rows * cols, off).reshape(rows, cols).astype(np.float64))
        off += 8 * rows * cols
        biases.append(np.frombuffer(buf, "<f8", rows, off).astype(np.float64))
        off += 8 * rows
    if off != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - off} trailing bytes")
    return ModelParams(weights, biases)
