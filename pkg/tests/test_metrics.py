import numpy as np
import pytest

from graylearn.data import LabeledDataset
from graylearn.metrics import (
    PredictionSet,
    accuracy,
    bin_index,
    ece,
    evaluate,
    predict,
    write_reliability_csv,
)
from graylearn.numerics import ModelParams, softmax

from conftest import random_net


def _preds(conf, correct):
    conf = np.asarray(conf, dtype=float)
    labels = np.zeros(len(conf), dtype=int)
    predicted = np.where(np.asarray(correct, dtype=bool), 0, 1)
    return PredictionSet(predicted, conf, labels)


def test_accuracy_examples():
    assert accuracy(_preds([0.9] * 3, [1, 1, 1])) == 1.0
    assert accuracy(_preds([0.9] * 3, [0, 0, 0])) == 0.0
    assert accuracy(_preds([0.9] * 4, [1, 1, 1, 0])) == 0.75
    with pytest.raises(ValueError):
        accuracy(_preds([], []))


def test_bin_assignment_right_closed():
    assert bin_index(np.array([0.0, 0.05, 0.050001, 0.95, 1.0])).tolist() == [0, 0, 1, 18, 19]


def test_ece_hand_case():
    value, bins = ece(_preds([0.95, 0.95, 0.55, 0.55], [1, 0, 1, 1]))
    # |0.5 - 0.95| * 0.5 + |1.0 - 0.55| * 0.5, up to one rounding of each operand
    assert value == pytest.approx(0.45, abs=1e-15)
    assert bins.count.sum() == 4 and bins.count[18] == 2 and bins.count[10] == 2


def test_ece_single_sample():
    assert ece(_preds([0.9], [1]))[0] == pytest.approx(0.1, abs=1e-15)


def test_ece_perfectly_calibrated():
    # bin (0.7, 0.75]: 4 samples at 0.75, 3 correct; bin (0.45, 0.5]: 2 at 0.5, 1 correct
    value, _ = ece(_preds([0.75] * 4 + [0.5] * 2, [1, 1, 1, 0, 1, 0]))
    assert value == 0.0


def test_ece_permutation_invariant():
    g = np.random.default_rng(0)
    conf = g.uniform(0.3, 1.0, size=200)
    correct = g.uniform(size=200) < conf
    base = ece(_preds(conf, correct))[0]
    for _ in range(5):
        perm = g.permutation(200)
        assert ece(_preds(conf[perm], correct[perm]))[0] == pytest.approx(base, abs=1e-15)


def test_ece_in_unit_interval():
    g = np.random.default_rng(1)
    for _ in range(20):
        conf = g.uniform(0.0, 1.0, size=50)
        v = ece(_preds(conf, g.uniform(size=50) < 0.5))[0]
        assert 0.0 <= v <= 1.0


def test_argmax_ties_to_lowest_and_shift_invariance():
    p = PredictionSet.from_probs(np.array([[0.4, 0.4, 0.2]]), [1])
    assert p.predicted.tolist() == [0]
    z = np.random.default_rng(2).normal(size=(30, 4))
    a = PredictionSet.from_probs(softmax(z), np.zeros(30, dtype=int))
    b = PredictionSet.from_probs(softmax(z + 17.0), np.zeros(30, dtype=int))
    assert np.array_equal(a.predicted, b.predicted)


def test_evaluate_constant_model():
    k = 4
    const = ModelParams([np.zeros((k, 3))], [np.zeros(k)])
    data = LabeledDataset(np.random.default_rng(0).normal(size=(40, 3)), np.arange(40) % k, k)
    r = evaluate(const, data)
    assert r.accuracy == pytest.approx(1 / k)


def test_evaluate_consistent_with_naive_pass():
    params = random_net(5, (3, 6, 3))
    g = np.random.default_rng(5)
    data = LabeledDataset(g.normal(size=(80, 3)), g.integers(0, 3, size=80), 3)
    r = evaluate(params, data)
    # per-class counts reproduce overall accuracy
    assert np.nansum(r.per_class_accuracy * r.per_class_count) / r.n == pytest.approx(r.accuracy)
    # naive re-evaluation over the same predictions
    preds = predict(params, data)
    bins = {}
    for c, ok in zip(preds.confidence, preds.correct):
        b = max(int(np.ceil(c * 20)), 1)
        bins.setdefault(b, []).append((c, ok))
    naive = sum(len(v) / 80 * abs(np.mean([o for _, o in v]) - np.mean([c for c, _ in v])) for v in bins.values())
    assert r.ece == pytest.approx(naive, abs=1e-14)
    assert r.accuracy == sum(ok for _, ok in sum(bins.values(), [])) / 80


def test_evaluate_rejects_ood():
    data = LabeledDataset(np.zeros((2, 3)), [0, 1], 2, ood=[False, True])
    with pytest.raises(ValueError, match="OOD"):
        evaluate(random_net(0, (3, 2)), data)


def test_reliability_csv(tmp_path):
    _, bins = ece(_preds([0.95, 0.95, 0.55, 0.55], [1, 0, 1, 1]))
    write_reliability_csv(bins, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "bin_low,bin_high,count,mean_confidence,accuracy"
    assert len(lines) == 21
