"""INI-style experiment configuration.

Grammar: ``[section]`` headers followed by ``key = value`` lines; ``#`` and
``;`` start comments. Sections and keys (all optional, defaults shown)::

    [data]
    source = blobs              # blobs | csv
    n_per_class = 50            # blobs only
    classes = 6
    features = 10
    centers_scale = 3.0
    noise_sd = 1.0
    path =                      # csv only
    label_column = -1           # name or index
    has_header = true
    ood = 4,5                   # "smallest" or comma-separated class indices
    test_fraction = 0.3

    [mixture]
    alpha = 0.1
    labeling = specific         # specific | random
    ood_subsets = 1
    ood_subset =                # empty = whole pool

    [train]
    method = gl                 # gl | standard | nl | standard+nl | mae | bootstrap(0.95)
    epochs = 10
    batch_size = 16
    optimizer = adam            # adam | sgd
    lr = 0.001
    momentum = 0.9
    schedule =                  # e.g. 100:0.1, 150:0.1
    confidence_gradient = full  # full | detached
    hidden = 128,128

    [run]
    seeds = 0,1,2,3,4
    alphas = 0.05,0.1,...       # sweep-alpha only
    methods =                   # override the method list of ablate/calibrate
"""

from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass
from pathlib import Path

from graylearn.data import Labeling, MixtureSpec
from graylearn.experiment import DataSource, Experiment
from graylearn.losses import LossMethod
from graylearn.train import TrainConfig


class ConfigError(ValueError):
    pass


SCHEMA = {
    "data": {"source", "n_per_class", "classes", "features", "centers_scale", "noise_sd", "path", "label_column", "has_header", "ood", "test_fraction"},
    "mixture": {"alpha", "labeling", "ood_subsets", "ood_subset"},
    "train": {"method", "epochs", "batch_size", "optimizer", "lr", "momentum", "schedule", "confidence_gradient", "hidden"},
    "run": {"seeds", "alphas", "methods"},
}


@dataclass(frozen=True)
class RunSettings:
    experiment: Experiment
    alphas: tuple[float, ...]
    methods: tuple[LossMethod, ...]
    digest: str


def _line_of(text: str, section: str, key: str | None) -> int | None:
    current = None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.fullmatch(r"\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip().lower()
            if key is None and current == section:
                return no
            continue
        if current == section and key is not None and re.match(rf"{re.escape(key)}\s*[=:]", line, re.I):
            return no
    return None


def _where(text: str, section: str, key: str | None = None) -> str:
    line = _line_of(text, section, key)
    name = f"{section}.{key}" if key else section
    return f"line {line}, {name}" if line else name


def parse_list(text: str, cast=float) -> tuple:
    text = text.strip()
    if not text:
        return ()
    return tuple(cast(t.strip()) for t in re.split(r"[,\s;]+", text) if t.strip())


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_alphas(text: str) -> tuple[float, ...]:
    """Either a list (``0.1, 0.2``) or an inclusive range ``start:stop:step``."""
    if ":" in text:
        start, stop, step = (float(v) for v in text.split(":"))
        n = int(round((stop - start) / step)) + 1
        return tuple(round(start + i * step, 12) for i in range(n))
    return parse_list(text, float)


def digest_of(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def load_config(path) -> RunSettings:
    text = Path(path).read_text(encoding="utf-8")
    return parse_config(text)


def parse_config(text: str) -> RunSettings:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from None
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{_where(text, section)}: unknown section")
        for key in cp[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(f"{_where(text, section, key)}: unknown key")

    def get(section, key, default, cast):
        if not cp.has_option(section, key):
            return default
        raw = cp.get(section, key)
        try:
            return cast(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{_where(text, section, key)}: {exc}") from None

    def checked(section, keys, build):
        try:
            return build()
        except ConfigError:
            raise
        except ValueError as exc:
            key = next((k for k in keys if k.split("_")[0] in str(exc).lower() and cp.has_option(section, k)), None)
            raise ConfigError(f"{_where(text, section, key)}: {exc}") from None

    d = DataSource()
    data = checked("data", sorted(SCHEMA["data"]), lambda: DataSource(
        kind=get("data", "source", d.kind, str.strip),
        n_per_class=get("data", "n_per_class", d.n_per_class, int),
        classes=get("data", "classes", d.classes, int),
        features=get("data", "features", d.features, int),
        centers_scale=get("data", "centers_scale", d.centers_scale, float),
        noise_sd=get("data", "noise_sd", d.noise_sd, float),
        path=get("data", "path", d.path, str.strip),
        label_column=get("data", "label_column", d.label_column, str.strip),
        has_header=get("data", "has_header", d.has_header, parse_bool),
        ood=get("data", "ood", d.ood, str.strip),
        test_fraction=get("data", "test_fraction", d.test_fraction, float),
    ))
    if data.kind not in ("blobs", "csv"):
        raise ConfigError(f"{_where(text, 'data', 'source')}: must be 'blobs' or 'csv'")
    if data.kind == "csv" and not data.path:
        raise ConfigError(f"{_where(text, 'data', 'path')}: required for csv sources")
    if not 0.0 < data.test_fraction < 1.0:
        raise ConfigError(f"{_where(text, 'data', 'test_fraction')}: must lie in (0, 1)")

    alpha = get("mixture", "alpha", 0.1, float)
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"{_where(text, 'mixture', 'alpha')}: alpha must lie in [0, 1], got {alpha}")
    subset_raw = get("mixture", "ood_subset", "", str.strip)
    mixture = checked("mixture", ["ood_subsets", "ood_subset", "labeling"], lambda: MixtureSpec(
        alpha=alpha,
        labeling=get("mixture", "labeling", Labeling.SPECIFIC, lambda s: Labeling(s.strip().lower())),
        ood_subsets=get("mixture", "ood_subsets", 1, int),
        ood_subset=int(subset_raw) if subset_raw else None,
    ))

    t = TrainConfig()
    mode = get("train", "confidence_gradient", "full", lambda s: s.strip().lower())
    if mode not in ("full", "detached"):
        raise ConfigError(f"{_where(text, 'train', 'confidence_gradient')}: must be 'full' or 'detached'")
    optimizer = get("train", "optimizer", t.optimizer, lambda s: s.strip().lower())
    if optimizer not in ("adam", "sgd"):
        raise ConfigError(f"{_where(text, 'train', 'optimizer')}: must be 'adam' or 'sgd'")
    train = checked("train", ["epochs", "batch_size", "lr", "schedule", "hidden"], lambda: TrainConfig(
        method=get("train", "method", t.method, LossMethod.parse),
        epochs=get("train", "epochs", t.epochs, int),
        batch_size=get("train", "batch_size", t.batch_size, int),
        optimizer=optimizer,
        lr=get("train", "lr", t.lr, float),
        momentum=get("train", "momentum", t.momentum, float),
        lr_schedule=get("train", "schedule", (), _parse_schedule),
        detach_confidence=mode == "detached",
        hidden=get("train", "hidden", t.hidden, lambda s: parse_list(s, int)),
    ))

    seeds = get("run", "seeds", (0, 1, 2, 3, 4), lambda s: parse_list(s, int))
    if not seeds:
        raise ConfigError(f"{_where(text, 'run', 'seeds')}: at least one seed is required")
    alphas = get("run", "alphas", tuple(round(0.05 * i, 2) for i in range(1, 11)), parse_alphas)
    if any(not 0.0 <= a <= 1.0 for a in alphas):
        raise ConfigError(f"{_where(text, 'run', 'alphas')}: every alpha must lie in [0, 1]")
    methods = get("run", "methods", (), lambda s: tuple(LossMethod.parse(m) for m in s.split(",") if m.strip()))
    return RunSettings(Experiment(data, mixture, train, tuple(seeds)), tuple(alphas), methods, digest_of(text))


def _parse_schedule(text: str) -> tuple[tuple[int, float], ...]:
    out = []
    for item in re.split(r"[,;]", text):
        if not item.strip():
            continue
        epoch, mult = item.split(":")
        out.append((int(epoch), float(mult)))
    return tuple(out)
