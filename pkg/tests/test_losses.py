import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graylearn.losses import (
    GL,
    MAE,
    NL,
    STANDARD,
    STANDARD_PLUS_NL,
    LossMethod,
    Method,
    complementary_log_sum,
    complementary_set,
    confidence,
    empirical_risk,
    loss_baseline,
    loss_complementary,
    loss_gl,
    loss_ground_truth,
    per_sample_losses,
    regularizer_r,
)
from graylearn.numerics import forward, softmax
from graylearn.rng import Xoshiro256

from conftest import random_net
from oracles import fd_gradients, max_rel_err

P3 = np.array([0.2, 0.4, 0.4])
ALL_METHODS = [GL, STANDARD, NL, STANDARD_PLUS_NL, MAE, LossMethod(Method.BOOTSTRAP, 0.95), LossMethod(Method.BOOTSTRAP, 0.6)]

mpmath.mp.dps = 40


def test_confidence():
    assert confidence([0.5, 0.5], 0) == 0.5
    assert confidence(P3, 0) == 0.2
    assert confidence(softmax([50.0, -50.0]), 0) == 1 - 1e-7
    with pytest.raises(IndexError):
        confidence(P3, 3)


def test_loss_ground_truth():
    assert loss_ground_truth(softmax([60.0, 0.0]), 0) == pytest.approx(1e-7, rel=1e-6)
    assert loss_ground_truth([1 / math.e, 1 - 1 / math.e], 0) == pytest.approx(1.0, abs=1e-15)
    assert loss_ground_truth(P3, 0) == pytest.approx(float(-mpmath.log(mpmath.mpf("0.2"))), abs=1e-15)
    assert loss_ground_truth(P3, 0) == pytest.approx(1.60944, abs=5e-6)


def test_complementary_set():
    assert complementary_set(0, 2) == {1}
    assert complementary_set(2, 3) == {0, 1}
    assert complementary_set(4, 10) == {0, 1, 2, 3, 5, 6, 7, 8, 9}
    with pytest.raises(IndexError):
        complementary_set(10, 10)


def test_loss_complementary():
    assert loss_complementary([0.5, 0.5], 0) == pytest.approx(math.log(2), abs=1e-15)
    expected = float(-2 * mpmath.log(mpmath.mpf("0.6")))
    assert loss_complementary(P3, 0) == pytest.approx(expected, abs=1e-15)
    assert loss_complementary(P3, 0) == pytest.approx(1.02165, abs=5e-6)
    saturated = softmax([60.0, 0.0, 0.0, 0.0])
    assert loss_complementary(saturated, 0) == pytest.approx(3 * -math.log1p(-1e-7), rel=1e-6)


def test_loss_gl_worked_example():
    b = loss_gl(P3, 0)
    lg = -mpmath.log(mpmath.mpf("0.2"))
    lc = -2 * mpmath.log(mpmath.mpf("0.6"))
    lm = mpmath.mpf("0.2") * lg + mpmath.mpf("0.8") * lc
    assert b.confidence == 0.2
    assert b.loss_m == pytest.approx(float(lm), abs=1e-14)
    assert b.loss_m == pytest.approx(1.13921, abs=5e-6)
    assert b.regularizer == pytest.approx(float(lm - lg), abs=1e-14)
    assert b.regularizer == pytest.approx(-0.47023, abs=5e-6)


def test_loss_gl_endpoints():
    hi = softmax([40.0, 0.0, 0.0])
    b = loss_gl(hi, 0)
    assert b.loss_m == pytest.approx(b.loss_g, abs=1e-6)
    lo = softmax([-40.0, 0.0, 0.0])
    b = loss_gl(lo, 0)
    assert b.loss_m == pytest.approx(b.loss_c, abs=1e-5)


def test_regularizer_examples():
    assert regularizer_r(P3, 0) == pytest.approx(-0.47023, abs=5e-6)
    b = loss_gl([0.5, 0.5], 0)
    assert (b.loss_g, b.loss_c) == (pytest.approx(math.log(2)), pytest.approx(math.log(2)))
    assert regularizer_r([0.5, 0.5], 0) == pytest.approx(0.0, abs=1e-15)


def test_loss_baseline_examples():
    assert loss_baseline(MAE, softmax([60.0, 0.0]), 0) == pytest.approx(0.0, abs=1e-6)
    assert loss_baseline(MAE, P3, 0) == pytest.approx(1.6, abs=1e-15)
    assert loss_baseline(LossMethod(Method.BOOTSTRAP, 0.95), [0.5, 0.5], 0) == pytest.approx(math.log(2), abs=1e-15)
    assert loss_baseline(STANDARD, P3, 0) == loss_ground_truth(P3, 0)
    assert loss_baseline(NL, P3, 0) == loss_complementary(P3, 0)
    assert loss_baseline(STANDARD_PLUS_NL, P3, 0) == pytest.approx(0.5 * 1.6094379124341003 + 0.5 * 1.0216512475319814)
    with pytest.raises(ValueError):
        loss_baseline(GL, P3, 0)


def test_method_parsing_roundtrip():
    for m in ALL_METHODS:
        assert LossMethod.parse(str(m)) == m
    with pytest.raises(ValueError):
        LossMethod.parse("spl")
    with pytest.raises(ValueError):
        LossMethod(Method.BOOTSTRAP, 1.5)


def test_batch_losses_match_scalar_versions():
    g = np.random.default_rng(1)
    probs = softmax(g.normal(size=(20, 5)) * 2)
    labels = g.integers(0, 5, size=20)
    for m in ALL_METHODS:
        batch, _ = per_sample_losses(m, probs, labels)
        for i in range(20):
            ref = loss_gl(probs[i], labels[i]).loss_m if m.kind is Method.GL else loss_baseline(m, probs[i], labels[i])
            assert batch[i] == pytest.approx(ref, rel=1e-13, abs=1e-15)


simplex = st.integers(min_value=2, max_value=12).flatmap(
    lambda k: st.tuples(
        st.lists(st.floats(-30, 30, allow_nan=False), min_size=k, max_size=k),
        st.integers(min_value=0, max_value=k - 1),
    )
)


@settings(max_examples=300, deadline=None)
@given(simplex)
def test_gl_properties(case):
    logits, y = case
    p = softmax(np.array(logits))
    b = loss_gl(p, y)
    assert abs(b.loss_m - (b.confidence * b.loss_g + (1 - b.confidence) * b.loss_c)) <= 1e-12
    assert abs(b.loss_m - (b.loss_g + regularizer_r(p, y))) <= 1e-10
    lo, hi = min(b.loss_g, b.loss_c), max(b.loss_g, b.loss_c)
    assert lo - 1e-12 <= b.loss_m <= hi + 1e-12
    assert all(math.isfinite(v) and v >= 0 for v in (b.loss_g, b.loss_c, b.loss_m))
    k = len(p)
    assert complementary_log_sum(p) <= k * math.log1p(-1 / k) + 1e-12


@settings(max_examples=200, deadline=None)
@given(simplex)
def test_all_losses_nonnegative_and_finite(case):
    logits, y = case
    p = softmax(np.array(logits))
    for m in ALL_METHODS:
        v = per_sample_losses(m, p[None], np.array([y]))[0][0]
        assert math.isfinite(v) and v >= -1e-15


def test_endpoint_override_is_exact():
    g = np.random.default_rng(2)
    probs = softmax(g.normal(size=(50, 4)) * 3)
    labels = g.integers(0, 4, size=50)
    std, dstd = per_sample_losses(STANDARD, probs, labels)
    nl, dnl = per_sample_losses(NL, probs, labels)
    one, done = per_sample_losses(GL, probs, labels, confidence_override=1.0)
    zero, dzero = per_sample_losses(GL, probs, labels, confidence_override=0.0)
    assert np.array_equal(one, std) and np.array_equal(done, dstd)
    assert np.array_equal(zero, nl) and np.array_equal(dzero, dnl)


def _check_risk_gradient(method, detach, seed):
    p = random_net(seed, (3, 5, 4))
    g = Xoshiro256(seed + 1000)
    x = g.normals((3, 3)) * 1.5
    y = np.array([g.randbelow(4) for _ in range(3)])
    _, grads, _ = empirical_risk(method, p, x, y, detach)
    override = None
    if detach and method.kind is Method.GL:
        probs = softmax(forward(p, x).logits)
        override = probs[np.arange(3), y].copy()  # freeze C at its current value
    fd = fd_gradients(lambda: empirical_risk(method, p, x, y, detach, override)[0], p)
    return max_rel_err(grads.arrays(), fd)


@pytest.mark.parametrize("method", ALL_METHODS, ids=str)
def test_empirical_risk_gradient(method):
    assert max(_check_risk_gradient(method, False, s) for s in range(5)) < 1e-5


@pytest.mark.parametrize("seed", range(5))
def test_gl_detached_gradient(seed):
    assert _check_risk_gradient(GL, True, seed) < 1e-5


def test_empirical_risk_single_and_duplicated():
    p = random_net(0, (3, 4, 3))
    x = np.array([[0.3, -1.0, 2.0]])
    r1, _, per = empirical_risk(GL, p, x, [1])
    assert r1 == per[0]
    assert r1 == pytest.approx(loss_gl(softmax(forward(p, x).logits[0]), 1).loss_m, rel=1e-14)
    r2, _, _ = empirical_risk(GL, p, np.vstack([x, x]), [1, 1])
    assert r2 == r1


def test_empirical_risk_empty_batch():
    with pytest.raises(ValueError):
        empirical_risk(GL, random_net(0, (3, 3)), np.zeros((0, 3)), [])
