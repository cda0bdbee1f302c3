"""Independent reference computations used by the tests."""

import math

import numpy as np


def naive_forward(params, x):
    """Affine/ReLU chain evaluated with plain Python loops."""
    h = [float(v) for v in x]
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = []
        for r in range(w.shape[0]):
            acc = float(b[r])
            for c in range(w.shape[1]):
                acc += float(w[r, c]) * h[c]
            z.append(acc)
        h = z if i == last else [max(v, 0.0) for v in z]
    return h


def fd_gradients(fun, params, h=1e-5):
    """Central differences of a scalar function of the parameters."""
    out = []
    for a in params.arrays():
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            old = a[idx]
            a[idx] = old + h
            up = fun()
            a[idx] = old - h
            down = fun()
            a[idx] = old
            g[idx] = (up - down) / (2 * h)
        out.append(g)
    return out


def max_rel_err(analytic, numeric, floor=1e-6):
    """max |a - f| / max(|a|, |f|, floor) over all coordinates."""
    worst = 0.0
    for a, f in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), floor)
        worst = max(worst, float(np.max(np.abs(a - f) / denom)))
    return worst


def sq_frobenius(w):
    return math.sqrt(sum(float(v) ** 2 for v in np.ravel(w)))
