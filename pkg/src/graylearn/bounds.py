"""Closed-form generalization bounds for plain cross-entropy training and
for gray learning on an ID/OOD mixture, plus a pool-based discrepancy proxy.

All logarithms are natural.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from graylearn.data import LabeledDataset
from graylearn.losses import LossMethod, per_sample_losses
from graylearn.numerics import ModelParams, forward, softmax


@dataclass(frozen=True)
class BoundInputs:
    alpha: float
    n_id: int
    n_ood: int
    B: float  # bound on the input norm
    L: float  # Lipschitz constant of the loss
    c: float  # bound on |loss|
    depth: int
    M: tuple[float, ...]  # per-layer Frobenius norm bounds
    K: int
    lam: float
    z: float  # bound on log-sum-exp of the logits
    delta: float
    d_h: float = 0.0

    def validate(self, need_lambda: bool = False) -> None:
        problems = []
        if not 0.0 <= self.alpha <= 1.0:
            problems.append("alpha must lie in [0, 1]")
        if self.n_id < 1 or self.n_ood < 1:
            problems.append("n_id and n_ood must be >= 1")
        if self.B < 0 or self.L <= 0 or self.c < 0:
            problems.append("need B >= 0, L > 0, c >= 0")
        if self.depth < 1 or len(self.M) != self.depth:
            problems.append(f"M must list one norm per layer (depth {self.depth}, got {len(self.M)})")
        if any(m < 0 for m in self.M):
            problems.append("Frobenius bounds must be nonnegative")
        if self.K < 2:
            problems.append("K must be >= 2")
        if not 0.0 < self.delta < 1.0:
            problems.append("delta must lie in (0, 1)")
        if self.d_h < 0:
            problems.append("d_h must be nonnegative")
        if need_lambda and not self.lam > 1.0:
            problems.append("lambda must exceed 1")
        if problems:
            raise ValueError("; ".join(problems))


def coef(alpha: float, n_id: int, n_ood: int) -> float:
    """(alpha sqrt(N_I) + (1 - alpha) sqrt(N_O)) / sqrt(N_I N_O)."""
    if n_id < 1 or n_ood < 1:
        raise ValueError("sample counts must be >= 1")
    return (alpha * math.sqrt(n_id) + (1.0 - alpha) * math.sqrt(n_ood)) / math.sqrt(n_id * n_ood)


def _depth_factor(depth: int) -> float:
    return math.sqrt(2.0 * depth * math.log(2.0)) + 1.0


def rademacher_term(n: int, B: float, depth: int, M: Sequence[float]) -> float:
    """sqrt(N) B (sqrt(2 d ln 2) + 1) prod(M): the norm-based complexity of a depth-d ReLU net."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return math.sqrt(n) * B * _depth_factor(depth) * math.prod(M)


def _sampling_term(inp: BoundInputs, k: float) -> float:
    return 8.0 * inp.c * k * math.sqrt(2.0 * math.log(16.0 / inp.delta))


def bound_standard(inp: BoundInputs) -> float:
    inp.validate()
    k = coef(inp.alpha, inp.n_id, inp.n_ood)
    complexity = 4.0 * inp.B * inp.L * k * _depth_factor(inp.depth) * math.prod(inp.M)
    return 2.0 * inp.alpha * inp.d_h + complexity + _sampling_term(inp, k)


def bound_gl(inp: BoundInputs) -> float:
    inp.validate(need_lambda=True)
    k = coef(inp.alpha, inp.n_id, inp.n_ood)
    complexity = 4.0 * inp.B * inp.L * inp.K * k * (inp.c + math.log(2.0 * inp.lam - 2.0))
    return 2.0 * inp.alpha * inp.d_h + complexity + _sampling_term(inp, k)


def lambda_threshold(B: float, depth: int, M: Sequence[float], L: float, K: int, z: float) -> float:
    """Largest lambda for which the GL bound is claimed to beat the standard one."""
    if L <= 0 or K < 2:
        raise ValueError("need L > 0 and K >= 2")
    exponent = B * _depth_factor(depth) * math.prod(M) / (L * math.sqrt(K)) - z
    try:
        return 1.0 + 0.5 * math.exp(exponent)
    except OverflowError:
        return math.inf


def lambda_crossover(inp: BoundInputs) -> float:
    """The lambda at which the two closed forms are exactly equal.

    ``bound_gl <= bound_standard`` holds iff ``lam <= lambda_crossover``
    (the shared terms and the factor 4 B L coef cancel; requires B > 0).
    """
    return 1.0 + 0.5 * math.exp(_depth_factor(inp.depth) * math.prod(inp.M) / inp.K - inp.c)


def gl_bound_is_tighter(inp: BoundInputs) -> bool:
    return bound_gl(inp) <= bound_standard(inp)


def _mean_loss(params: ModelParams, data: LabeledDataset, loss: LossMethod) -> float:
    probs = softmax(forward(params, data.features).logits)
    values, _ = per_sample_losses(loss, probs, data.labels)
    return float(np.mean(values))


def discrepancy_proxy(pool: Sequence[ModelParams], id_data: LabeledDataset, ood_data: LabeledDataset, loss: LossMethod) -> float:
    """max over a finite set of networks of |risk(ID) - risk(OOD)|.

    A lower bound on the supremum over the whole hypothesis class. OOD
    samples are scored against the labels they carry in ``ood_data``.
    """
    if not pool:
        raise ValueError("discrepancy proxy needs at least one network")
    if len(id_data) == 0 or len(ood_data) == 0:
        raise ValueError("both datasets must be nonempty")
    return max(abs(_mean_loss(p, id_data, loss) - _mean_loss(p, ood_data, loss)) for p in pool)
