"""Labeled datasets, OOD contamination and small synthetic benchmarks."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from graylearn.rng import Xoshiro256


class DataError(ValueError):
    """Malformed input file or dataset."""


class Labeling(enum.Enum):
    SPECIFIC = "specific"
    RANDOM = "random"


@dataclass(frozen=True)
class LabeledDataset:
    """Features, 0-based labels and a per-sample OOD flag.

    ``source_class`` holds the original class of OOD samples (-1 for ID rows).
    For an OOD *pool* (before mixing) the labels are the pool's own classes.
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    ood: np.ndarray = None  # type: ignore[assignment]
    source_class: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        if x.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        y = np.asarray(self.labels, dtype=np.int64)
        n = len(x)
        ood = np.zeros(n, dtype=bool) if self.ood is None else np.asarray(self.ood, dtype=bool)
        src = np.full(n, -1, dtype=np.int64) if self.source_class is None else np.asarray(self.source_class, dtype=np.int64)
        if y.shape != (n,) or ood.shape != (n,) or src.shape != (n,):
            raise DataError("labels/provenance length differs from the number of rows")
        if self.num_classes < 2:
            raise DataError("need at least two classes")
        if n and (y.min() < 0 or y.max() >= self.num_classes):
            raise DataError(f"labels must lie in 0..{self.num_classes - 1}")
        if not np.all(np.isfinite(x)):
            raise DataError("features contain non-finite values")
        for name, arr in (("features", x), ("labels", y), ("ood", ood), ("source_class", src)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_ood(self) -> int:
        return int(self.ood.sum())

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(self.features[idx], self.labels[idx], self.num_classes, self.ood[idx], self.source_class[idx])

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass(frozen=True)
class MixtureSpec:
    alpha: float
    labeling: Labeling = Labeling.SPECIFIC
    seed: int = 0
    ood_subsets: int = 1
    ood_subset: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.ood_subsets < 1:
            raise ValueError("ood_subsets must be >= 1")
        if self.ood_subset is not None and not 0 <= self.ood_subset < self.ood_subsets:
            raise ValueError(f"ood_subset must lie in 0..{self.ood_subsets - 1}")


class CapacityError(ValueError):
    pass


def n_ood_for(alpha: float, n: int) -> int:
    """round(alpha * n), halves rounded up."""
    return int(math.floor(alpha * n + 0.5))


def split_ood_source(pool: LabeledDataset, n_subsets: int) -> list[LabeledDataset]:
    """Partition a pool into class-balanced subsets by class order.

    Subset ``i`` holds classes ``i*m .. (i+1)*m - 1`` with ``m = K / n_subsets``.
    """
    k = pool.num_classes
    if n_subsets < 1 or k % n_subsets:
        raise ValueError(f"{k} classes cannot be split into {n_subsets} equal groups")
    per = k // n_subsets
    group = pool.labels // per
    return [pool.subset(np.flatnonzero(group == i)) for i in range(n_subsets)]


def _pool_source_classes(pool: LabeledDataset) -> np.ndarray:
    return np.where(pool.source_class >= 0, pool.source_class, pool.labels)


def mix(id_data: LabeledDataset, ood_pool: LabeledDataset, spec: MixtureSpec) -> LabeledDataset:
    """Replace round(alpha * N) ID samples with mislabeled OOD samples.

    Total size stays at ``len(id_data)``. Replaced positions and the OOD
    draws are uniform without replacement. Under specific labeling every OOD
    sample from source class ``s`` gets ID label ``s mod K``; under random
    labeling each gets a uniform ID label.
    """
    n = len(id_data)
    k = id_data.num_classes
    n_o = n_ood_for(spec.alpha, n)
    if n_o == 0:
        return id_data
    if ood_pool.n_features != id_data.n_features:
        raise DataError("ID and OOD feature widths differ")
    if spec.ood_subset is not None:
        ood_pool = split_ood_source(ood_pool, spec.ood_subsets)[spec.ood_subset]
    if len(ood_pool) < n_o:
        raise CapacityError(f"need {n_o} OOD samples, pool holds {len(ood_pool)}")

    rng = Xoshiro256(spec.seed)
    positions = rng.sample(n, n_o)
    draws = rng.sample(len(ood_pool), n_o)
    source = _pool_source_classes(ood_pool)[draws]
    if spec.labeling is Labeling.SPECIFIC:
        new_labels = source % k
    else:
        new_labels = np.array([rng.randbelow(k) for _ in range(n_o)], dtype=np.int64)

    x = id_data.features.copy()
    y = id_data.labels.copy()
    ood = id_data.ood.copy()
    src = id_data.source_class.copy()
    x[positions] = ood_pool.features[draws]
    y[positions] = new_labels
    ood[positions] = True
    src[positions] = source
    return LabeledDataset(x, y, k, ood, src)


def make_smallest_class_ood(data: LabeledDataset) -> tuple[LabeledDataset, LabeledDataset]:
    """Split off the smallest class (lowest index on ties) as an OOD pool.

    The remaining classes are re-encoded densely in their original order. The
    returned pool keeps the original class index as its label.
    """
    k = data.num_classes
    if k < 3:
        raise ValueError("need at least three classes so two remain in-distribution")
    counts = data.class_counts()
    smallest = int(np.argmin(counts))
    keep = data.labels != smallest
    remap = np.full(k, -1, dtype=np.int64)
    remap[[c for c in range(k) if c != smallest]] = np.arange(k - 1)
    id_part = LabeledDataset(data.features[keep], remap[data.labels[keep]], k - 1)
    ood_idx = np.flatnonzero(~keep)
    ood_part = LabeledDataset(data.features[ood_idx], data.labels[ood_idx], k)
    return id_part, ood_part


def split_classes(data: LabeledDataset, ood_classes) -> tuple[LabeledDataset, LabeledDataset]:
    """Generalisation of the smallest-class protocol to a chosen class set.

    The pool's labels are renumbered 0..m-1 in the order given, so specific
    labeling maps the i-th OOD class to ID label ``i mod K``.
    """
    ood_classes = [int(c) for c in ood_classes]
    k = data.num_classes
    if len(set(ood_classes)) != len(ood_classes) or not all(0 <= c < k for c in ood_classes):
        raise ValueError(f"bad OOD class list {ood_classes}")
    if k - len(ood_classes) < 2:
        raise ValueError("at least two in-distribution classes must remain")
    id_classes = [c for c in range(k) if c not in ood_classes]
    remap_id = np.full(k, -1, dtype=np.int64)
    remap_id[id_classes] = np.arange(len(id_classes))
    remap_ood = np.full(k, -1, dtype=np.int64)
    remap_ood[ood_classes] = np.arange(len(ood_classes))
    is_ood = remap_ood[data.labels] >= 0
    id_part = LabeledDataset(data.features[~is_ood], remap_id[data.labels[~is_ood]], len(id_classes))
    pool_k = max(len(ood_classes), 2)
    ood_part = LabeledDataset(data.features[is_ood], remap_ood[data.labels[is_ood]], pool_k)
    return id_part, ood_part


def gen_blobs(n_per_class: int, k: int, n_features: int, centers_scale: float, noise_sd: float, seed: int) -> LabeledDataset:
    """Isotropic Gaussian blobs, rows grouped by class.

    Class ``c`` is centred at ``centers_scale * e_c`` when ``k <= n_features``
    (vertices of a scaled simplex); otherwise centres are random unit
    directions scaled by ``centers_scale``.
    """
    if n_per_class < 1 or k < 2 or n_features < 1 or centers_scale < 0 or noise_sd < 0:
        raise ValueError("blob parameters must be positive")
    rng = Xoshiro256(seed)
    if k <= n_features:
        centers = centers_scale * np.eye(k, n_features)
    else:
        d = rng.normals((k, n_features))
        centers = centers_scale * d / np.linalg.norm(d, axis=1, keepdims=True)
    noise = rng.normals((k * n_per_class, n_features)) * noise_sd
    labels = np.repeat(np.arange(k), n_per_class)
    return LabeledDataset(centers[labels] + noise, labels, k)


def train_test_split(data: LabeledDataset, test_fraction: float, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified split of the ID rows; every OOD row goes to training.

    Each class contributes round(test_fraction * n_class) rows to the test set.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    rng = Xoshiro256(seed)
    test_idx, train_idx = [], []
    id_rows = np.flatnonzero(~data.ood)
    for c in range(data.num_classes):
        members = id_rows[data.labels[id_rows] == c]
        if len(members) == 0:
            continue
        order = members[rng.permutation(len(members))]
        n_test = n_ood_for(test_fraction, len(order))
        if n_test >= len(order):
            raise DataError(f"class {c} would have no training samples after the split")
        test_idx.extend(order[:n_test].tolist())
        train_idx.extend(order[n_test:].tolist())
    train_idx.extend(np.flatnonzero(data.ood).tolist())
    return data.subset(sorted(train_idx)), data.subset(sorted(test_idx))


# --- CSV ------------------------------------------------------------------

def load_csv(path, label_column: str | int = -1, has_header: bool = True) -> LabeledDataset:
    """Read a numeric CSV with one label column.

    Labels (any strings) are encoded 0..K-1 by first appearance. An optional
    ``dist`` column with ``id``/``ood`` values restores provenance. Errors
    carry 1-based file line numbers.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and not (len(r) == 1 and not r[0].strip())]
    if not rows:
        raise DataError(f"{path}: empty file")
    header = None
    first_line = 1
    if has_header:
        header = [h.strip() for h in rows[0]]
        rows = rows[1:]
        first_line = 2
        if not rows:
            raise DataError(f"{path}: header but no data rows")
    width = len(header) if header else len(rows[0])

    if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
        if header is None or label_column not in header:
            raise DataError(f"{path}: unknown column {label_column!r}")
        label_idx = header.index(label_column)
    else:
        label_idx = int(label_column)
        if not -width <= label_idx < width:
            raise DataError(f"{path}: label column {label_idx} out of range for {width} columns")
        label_idx %= width
    dist_idx = header.index("dist") if header and "dist" in header else None

    feats, raw_labels, ood = [], [], []
    for i, row in enumerate(rows):
        line = first_line + i
        if len(row) != width:
            raise DataError(f"{path}:{line}: expected {width} fields, found {len(row)}")
        values = []
        for j, cell in enumerate(row):
            if j in (label_idx, dist_idx):
                continue
            try:
                values.append(float(cell))
            except ValueError:
                raise DataError(f"{path}:{line}: non-numeric feature {cell!r} in column {j + 1}") from None
        feats.append(values)
        raw_labels.append(row[label_idx].strip())
        if dist_idx is not None:
            tag = row[dist_idx].strip().lower()
            if tag not in ("id", "ood"):
                raise DataError(f"{path}:{line}: dist must be 'id' or 'ood', got {tag!r}")
            ood.append(tag == "ood")

    codes: dict[str, int] = {}
    labels = [codes.setdefault(lab, len(codes)) for lab in raw_labels]
    k = max(len(codes), 2)
    return LabeledDataset(np.array(feats, dtype=np.float64), np.array(labels), k, np.array(ood) if ood else None)


def save_csv(data: LabeledDataset, path) -> None:
    """Write features, 1-based label and the ``dist`` provenance column.

    Floats are written with ``repr`` so a reload is bit-exact.
    """
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{j}" for j in range(data.n_features)] + ["label", "dist"])
        for x, y, o in zip(data.features, data.labels, data.ood):
            w.writerow([repr(float(v)) for v in x] + [str(int(y) + 1), "ood" if o else "id"])
