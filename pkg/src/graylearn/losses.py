"""Gray-learning loss and the baselines it is compared against.

Class labels are 0-based throughout the package. ``probs`` are clamped softmax
outputs (see :func:`graylearn.numerics.softmax`), so every log below is finite.

The batch entry point :func:`per_sample_losses` returns both the loss values
and their gradients with respect to the probabilities; the network-level
gradient is then obtained with :func:`graylearn.numerics.softmax_backward`
and :func:`graylearn.numerics.backward`.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

import numpy as np

from graylearn.numerics import ModelParams, backward, forward, softmax, softmax_backward


class Method(enum.Enum):
    GL = "gl"
    STANDARD = "standard"
    NL = "nl"
    STANDARD_PLUS_NL = "standard+nl"
    MAE = "mae"
    BOOTSTRAP = "bootstrap"


@dataclass(frozen=True)
class LossMethod:
    kind: Method
    beta: float = 0.95  # soft-bootstrap mixing weight; unused by other methods

    def __post_init__(self):
        if self.kind is Method.BOOTSTRAP and not 0.0 < self.beta < 1.0:
            raise ValueError(f"bootstrap beta must lie in (0, 1), got {self.beta}")

    @classmethod
    def parse(cls, text: str) -> "LossMethod":
        """Parse names such as ``gl``, ``standard+nl`` or ``bootstrap(0.8)``."""
        t = text.strip().lower().replace(" ", "")
        m = re.fullmatch(r"bootstrap(?:\(([^)]*)\))?", t)
        if m:
            return cls(Method.BOOTSTRAP, float(m.group(1)) if m.group(1) else 0.95)
        aliases = {"ce": "standard", "standardplusnl": "standard+nl", "standard_plus_nl": "standard+nl"}
        try:
            return cls(Method(aliases.get(t, t)))
        except ValueError:
            raise ValueError(f"unknown loss method {text!r}") from None

    def __str__(self) -> str:
        if self.kind is Method.BOOTSTRAP:
            return f"bootstrap({self.beta:g})"
        return self.kind.value


GL = LossMethod(Method.GL)
STANDARD = LossMethod(Method.STANDARD)
NL = LossMethod(Method.NL)
STANDARD_PLUS_NL = LossMethod(Method.STANDARD_PLUS_NL)
MAE = LossMethod(Method.MAE)


@dataclass(frozen=True)
class SampleLossBreakdown:
    confidence: float
    loss_g: float
    loss_c: float
    loss_m: float
    regularizer: float


def _check_label(probs: np.ndarray, y: int) -> None:
    if not 0 <= y < probs.shape[-1]:
        raise IndexError(f"label {y} outside 0..{probs.shape[-1] - 1}")


def confidence(probs, y: int) -> float:
    """Probability the model assigns to the annotated label."""
    probs = np.asarray(probs, dtype=np.float64)
    _check_label(probs, y)
    return float(probs[y])


def loss_ground_truth(probs, y: int) -> float:
    return -float(np.log(confidence(probs, y)))


def complementary_set(y: int, k: int) -> set[int]:
    if k < 2:
        raise ValueError("need at least two classes")
    if not 0 <= y < k:
        raise IndexError(f"label {y} outside 0..{k - 1}")
    return set(range(k)) - {y}


def loss_complementary(probs, y: int) -> float:
    """-sum over the complementary labels of log(1 - p)."""
    probs = np.asarray(probs, dtype=np.float64)
    # zero the label slot rather than slicing, so the summation order matches
    # the batched path bit for bit
    terms = np.log1p(-probs)
    terms[y] = 0.0
    return -float(np.sum(terms))


def loss_gl(probs, y: int, confidence_override: float | None = None) -> SampleLossBreakdown:
    """Confidence-weighted blend of the ground-truth and complementary losses."""
    c = confidence(probs, y) if confidence_override is None else float(confidence_override)
    lg = loss_ground_truth(probs, y)
    lc = loss_complementary(probs, y)
    lm = c * lg + (1.0 - c) * lc
    return SampleLossBreakdown(confidence=c, loss_g=lg, loss_c=lc, loss_m=lm, regularizer=lm - lg)


def regularizer_r(probs, y: int) -> float:
    """Excess of the GL loss over plain cross-entropy, in closed form:

        (1 - q) log(q (1 - q)) - (1 - q) * sum_k log(1 - p_k),   q = p_y

    Evaluated directly from the formula (not as a difference of losses).
    """
    probs = np.asarray(probs, dtype=np.float64)
    q = confidence(probs, y)
    return (1.0 - q) * float(np.log(q * (1.0 - q))) - (1.0 - q) * float(np.sum(np.log1p(-probs)))


def complementary_log_sum(probs) -> float:
    """sum_k log(1 - p_k); never exceeds K log(1 - 1/K) on the simplex."""
    return float(np.sum(np.log1p(-np.asarray(probs, dtype=np.float64))))


def loss_baseline(method: LossMethod, probs, y: int) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    _check_label(probs, y)
    kind = method.kind
    if kind is Method.GL:
        raise ValueError("use loss_gl for the GL method")
    if kind is Method.STANDARD:
        return loss_ground_truth(probs, y)
    if kind is Method.NL:
        return loss_complementary(probs, y)
    if kind is Method.STANDARD_PLUS_NL:
        return 0.5 * loss_ground_truth(probs, y) + 0.5 * loss_complementary(probs, y)
    onehot = np.zeros_like(probs)
    onehot[y] = 1.0
    if kind is Method.MAE:
        return float(np.sum(np.abs(probs - onehot)))
    target = method.beta * onehot + (1.0 - method.beta) * probs
    return -float(np.sum(target * np.log(probs)))


def per_sample_losses(
    method: LossMethod,
    probs: np.ndarray,
    labels: np.ndarray,
    detach_confidence: bool = False,
    confidence_override: np.ndarray | float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised losses for a batch, plus d(loss_i)/d(probs_i) per row.

    For GL the blend weight is differentiated by default; with
    ``detach_confidence`` it is treated as a per-sample constant. A
    ``confidence_override`` replaces the weight outright (and is constant).
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, k = probs.shape
    if labels.shape != (n,):
        raise ValueError("one label per row required")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise IndexError(f"labels must lie in 0..{k - 1}")
    rows = np.arange(n)
    is_y = np.zeros((n, k), dtype=bool)
    is_y[rows, labels] = True
    q = probs[rows, labels]
    log1m = np.log1p(-probs)

    # ground-truth and complementary parts with their probability gradients
    lg = -np.log(q)
    dlg = np.where(is_y, -1.0 / probs, 0.0)
    lc = -np.sum(np.where(is_y, 0.0, log1m), axis=1)
    dlc = np.where(is_y, 0.0, 1.0 / (1.0 - probs))

    kind = method.kind
    if kind is Method.STANDARD:
        return lg, dlg
    if kind is Method.NL:
        return lc, dlc
    if kind is Method.STANDARD_PLUS_NL:
        return 0.5 * lg + 0.5 * lc, 0.5 * dlg + 0.5 * dlc
    if kind is Method.GL:
        if confidence_override is not None:
            c = np.broadcast_to(np.asarray(confidence_override, dtype=np.float64), (n,))
            detached = True
        else:
            c, detached = q, detach_confidence
        loss = c * lg + (1.0 - c) * lc
        grad = c[:, None] * dlg + (1.0 - c)[:, None] * dlc
        if not detached:
            grad = grad + np.where(is_y, (lg - lc)[:, None], 0.0)
        return loss, grad
    onehot = is_y.astype(np.float64)
    if kind is Method.MAE:
        return np.sum(np.abs(probs - onehot), axis=1), np.sign(probs - onehot)
    # soft bootstrap, target differentiated along with the prediction
    beta = method.beta
    target = beta * onehot + (1.0 - beta) * probs
    logp = np.log(probs)
    return -np.sum(target * logp, axis=1), -target / probs - (1.0 - beta) * logp


def empirical_risk(
    method: LossMethod,
    params: ModelParams,
    x: np.ndarray,
    labels: np.ndarray,
    detach_confidence: bool = False,
    confidence_override=None,
) -> tuple[float, ModelParams, np.ndarray]:
    """Mean per-sample loss over a batch and its parameter gradients.

    Returns ``(risk, grads, per_sample)``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if len(x) == 0:
        raise ValueError("empirical risk of an empty batch")
    trace = forward(params, x)
    probs = softmax(trace.logits)
    losses, dprobs = per_sample_losses(method, probs, labels, detach_confidence, confidence_override)
    n = len(losses)
    grad_logits = softmax_backward(trace.logits, dprobs / n)
    return float(np.sum(losses) / n), backward(params, trace, grad_logits), losses
