"""Dense ReLU networks with hand-written backprop, clamped softmax and
first-order optimizers. Everything is float64.

Weights are stored as ``(fan_out, fan_in)`` so a layer computes ``W @ x + b``;
batches are row-major ``(n, features)`` and go through as ``X @ W.T + b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from graylearn.rng import Xoshiro256

PROB_EPS = 1e-7


class ShapeError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


@dataclass
class ModelParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if not self.weights:
            raise ShapeError("a network needs at least one layer")
        if len(self.weights) != len(self.biases):
            raise ShapeError("weights and biases differ in length")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeError(f"layer {i}: weight {w.shape} incompatible with bias {b.shape}")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ShapeError(f"layer {i} expects {w.shape[1]} inputs, previous layer emits {self.weights[i - 1].shape[0]}")

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def layout(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def copy(self) -> "ModelParams":
        return ModelParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def arrays(self) -> list[np.ndarray]:
        """Parameters in a fixed order: W1, b1, W2, b2, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def zeros_like(self) -> "ModelParams":
        return ModelParams([np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases])


def init_params(layout, rng: Xoshiro256) -> ModelParams:
    """He-normal weights (sd = sqrt(2 / fan_in)) and zero biases."""
    layout = [int(n) for n in layout]
    if len(layout) < 2 or min(layout) < 1:
        raise ShapeError(f"bad layer layout {layout}")
    weights, biases = [], []
    for fan_in, fan_out in zip(layout[:-1], layout[1:]):
        weights.append(rng.normals((fan_out, fan_in)) * np.sqrt(2.0 / fan_in))
        biases.append(np.zeros(fan_out))
    return ModelParams(weights, biases)


@dataclass
class ForwardTrace:
    inputs: np.ndarray
    pre: list[np.ndarray] = field(default_factory=list)
    post: list[np.ndarray] = field(default_factory=list)

    @property
    def logits(self) -> np.ndarray:
        return self.pre[-1]


def _as_batch(params: ModelParams, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.weights[0].shape[1]:
        raise ShapeError(f"input of shape {x.shape[-1:]} does not match first layer width {params.weights[0].shape[1]}")
    return x, single


def forward(params: ModelParams, x) -> ForwardTrace:
    """Run the network on one feature vector or a batch of rows.

    Hidden layers use ReLU; the output layer is linear. The returned trace
    keeps batch shape, so ``trace.logits`` is ``(n, K)`` even for one input.
    """
    h, _ = _as_batch(params, x)
    trace = ForwardTrace(inputs=h)
    last = params.depth - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        trace.pre.append(z)
        h = z if i == last else np.maximum(z, 0.0)
        trace.post.append(h)
    if not np.all(np.isfinite(trace.logits)):
        raise NumericError("non-finite logits")
    return trace


def logits(params: ModelParams, x) -> np.ndarray:
    x_, single = _as_batch(params, x)
    out = forward(params, x_).logits
    return out[0] if single else out


def softmax_raw(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericError("non-finite logit")
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax(z, eps: float = PROB_EPS) -> np.ndarray:
    """Max-shifted softmax, clamped to [eps, 1 - eps] and renormalized.

    Works on a single logit vector or on rows of a matrix.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] < 2:
        raise ShapeError("softmax needs at least two classes")
    c = np.clip(softmax_raw(z), eps, 1.0 - eps)
    return c / c.sum(axis=-1, keepdims=True)


def softmax_backward(z: np.ndarray, grad_probs: np.ndarray, eps: float = PROB_EPS) -> np.ndarray:
    """Pull a gradient w.r.t. clamped softmax outputs back to the logits.

    Clamped coordinates pass no gradient (the clamp is flat there).
    """
    s = softmax_raw(z)
    c = np.clip(s, eps, 1.0 - eps)
    total = c.sum(axis=-1, keepdims=True)
    p = c / total
    g_c = (grad_probs - np.sum(grad_probs * p, axis=-1, keepdims=True)) / total
    g_s = np.where((s > eps) & (s < 1.0 - eps), g_c, 0.0)
    return s * (g_s - np.sum(g_s * s, axis=-1, keepdims=True))


def backward(params: ModelParams, trace: ForwardTrace, grad_logits) -> ModelParams:
    """Reverse-mode gradients of a scalar loss given dloss/dlogits.

    ``grad_logits`` has the same shape as ``trace.logits``; per-row gradients
    are summed over the batch, so pass already-averaged upstream gradients for
    a mean loss.
    """
    g = np.asarray(grad_logits, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != trace.logits.shape:
        raise ShapeError(f"upstream gradient {g.shape} does not match logits {trace.logits.shape}")
    gw: list[np.ndarray] = [None] * params.depth  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * params.depth  # type: ignore[list-item]
    for i in range(params.depth - 1, -1, -1):
        below = trace.post[i - 1] if i else trace.inputs
        gw[i] = g.T @ below
        gb[i] = g.sum(axis=0)
        if i:
            g = (g @ params.weights[i]) * (trace.pre[i - 1] > 0.0)
    return ModelParams(gw, gb)


def frobenius_norms(params: ModelParams) -> np.ndarray:
    return np.array([np.linalg.norm(w, "fro") for w in params.weights])


class Optimizer:
    """Base class; subclasses implement ``_update`` on one parameter array."""

    def __init__(self, lr: float):
        if not lr > 0:
            raise ValueError("learning rate must be positive")
        self.lr = float(lr)
        self.t = 0
        self._slots: list[dict[str, np.ndarray]] | None = None
        self._shapes: list[tuple] = []

    def step(self, params: ModelParams, grads: ModelParams) -> ModelParams:
        """Update ``params`` in place and return it.

        A non-finite gradient raises NumericError before anything is touched.
        """
        p_arrays, g_arrays = params.arrays(), grads.arrays()
        if [a.shape for a in p_arrays] != [a.shape for a in g_arrays]:
            raise ShapeError("gradient layout does not match parameters")
        for g in g_arrays:
            if not np.all(np.isfinite(g)):
                raise NumericError("non-finite gradient; step aborted")
        if self._slots is None:
            self._shapes = [p.shape for p in p_arrays]
            self._slots = [self._new_slot(p) for p in p_arrays]
        elif self._shapes != [p.shape for p in p_arrays]:
            raise ShapeError("optimizer state was built for a different network")
        self.t += 1
        for p, g, slot in zip(p_arrays, g_arrays, self._slots):
            p += self._update(g, slot)
        return params

    def _new_slot(self, p: np.ndarray) -> dict[str, np.ndarray]:
        return {}

    def _update(self, g: np.ndarray, slot: dict[str, np.ndarray]) -> np.ndarray:
        raise NotImplementedError


class SGD(Optimizer):
    """Heavy-ball momentum: v <- mu v - lr g; theta <- theta + v."""

    def __init__(self, lr: float = 0.1, momentum: float = 0.9):
        super().__init__(lr)
        self.momentum = float(momentum)

    def _new_slot(self, p):
        return {"v": np.zeros_like(p)}

    def _update(self, g, slot):
        slot["v"] = self.momentum * slot["v"] - self.lr * g
        return slot["v"]


class Adam(Optimizer):
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(lr)
        self.beta1, self.beta2, self.eps = float(beta1), float(beta2), float(eps)

    def _new_slot(self, p):
        return {"m": np.zeros_like(p), "v": np.zeros_like(p)}

    def _update(self, g, slot):
        slot["m"] = self.beta1 * slot["m"] + (1.0 - self.beta1) * g
        slot["v"] = self.beta2 * slot["v"] + (1.0 - self.beta2) * g * g
        m_hat = slot["m"] / (1.0 - self.beta1**self.t)
        v_hat = slot["v"] / (1.0 - self.beta2**self.t)
        return -self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(kind: str, lr: float, momentum: float = 0.9) -> Optimizer:
    kind = kind.lower()
    if kind == "adam":
        return Adam(lr)
    if kind in ("sgd", "momentum"):
        return SGD(lr, momentum)
    raise ValueError(f"unknown optimizer {kind!r}")
