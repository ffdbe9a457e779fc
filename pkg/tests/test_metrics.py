import math
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from desot.metrics import (EvalReport, accuracy, brier, ece, entropy, entropy_histogram, evaluate,
                           macro_f1)


def onehot(labels, C):
    return np.eye(C)[labels]


def brute_brier_decomposition(probs, labels, n_bins):
    """Record-by-record accumulation into (class, bin) cells."""
    n, C = probs.shape
    cells = defaultdict(lambda: [0, 0.0, 0.0])
    rel = res = unc = 0.0
    for c in range(C):
        rate = sum(1 for y in labels if y == c) / n
        unc += rate * (1 - rate)
    for i in range(n):
        for c in range(C):
            b = min(int(probs[i, c] * n_bins), n_bins - 1)
            cell = cells[(c, b)]
            cell[0] += 1
            cell[1] += probs[i, c]
            cell[2] += 1.0 if labels[i] == c else 0.0
    for (c, _), (count, sf, so) in cells.items():
        rate = sum(1 for y in labels if y == c) / n
        rel += count * (sf / count - so / count) ** 2 / n
        res += count * (so / count - rate) ** 2 / n
    score = sum((probs[i, c] - (labels[i] == c)) ** 2 for i in range(n) for c in range(C)) / n
    return score, rel, res, unc


def quantized_forecasts(rng, n, C, n_bins=10):
    """Rows whose entries are all bin centers and sum to one."""
    k_total = n_bins - C // 2  # sum of (k_c + 0.5) / n_bins == 1, C even
    rows = []
    for _ in range(n):
        cuts = np.sort(rng.integers(0, k_total + 1, size=C - 1))
        k = np.diff(np.concatenate([[0], cuts, [k_total]]))
        rows.append((k + 0.5) / n_bins)
    return np.array(rows)


class TestAccuracy:
    def test_examples(self):
        assert accuracy(onehot([0, 1, 2], 3), [0, 1, 2]) == 1.0
        assert accuracy(onehot([0, 0, 0, 0], 2), [0, 1, 1, 1]) == 0.25
        assert accuracy(np.array([[0.5, 0.5]]), [0]) == 1.0
        assert accuracy(np.array([[0.5, 0.5]]), [1]) == 0.0

    def test_empty(self):
        with pytest.raises(ValueError):
            accuracy(np.zeros((0, 2)), [])


class TestMacroF1:
    def test_perfect(self):
        assert macro_f1(onehot([0, 1, 2, 1], 3), [0, 1, 2, 1]) == 1.0

    def test_one_third(self):
        assert macro_f1(onehot([0, 0, 0, 0], 2), [0, 0, 1, 1]) == pytest.approx(1 / 3, abs=1e-15)

    def test_single_class(self):
        assert macro_f1(onehot([2, 2], 4), [2, 2]) == 1.0

    def test_class_subset(self):
        probs = onehot([0, 1, 1, 2], 3)
        # class 1: tp 1, fp 1, fn 0 -> 2/3; class 2: 1
        assert macro_f1(probs, [0, 1, 2, 2], classes=[1, 2]) == pytest.approx((2 / 3 + 2 / 3) / 2)

    def test_symmetric_confusion_equals_accuracy(self):
        labels = np.array([0] * 10 + [1] * 10)
        pred = np.array([0] * 7 + [1] * 3 + [1] * 7 + [0] * 3)
        probs = onehot(pred, 2)
        assert macro_f1(probs, labels) == pytest.approx(accuracy(probs, labels), abs=1e-15)

    def test_class_count_check(self):
        with pytest.raises(ValueError):
            macro_f1(onehot([0], 2), [0], n_classes=3)


class TestEce:
    def test_one_hot_correct(self):
        assert ece(onehot([0, 1, 2], 3), [0, 1, 2]) == 0.0

    def test_single_wrong(self):
        assert ece(np.array([[0.8, 0.2]]), [1]) == pytest.approx(0.8, abs=1e-15)

    def test_calibrated_by_construction(self):
        blocks = [(0.7, 10, 7), (0.9, 20, 18), (0.55, 20, 11)]
        probs, labels = [], []
        for conf, n, n_correct in blocks:
            for i in range(n):
                probs.append([conf, 1 - conf])
                labels.append(0 if i < n_correct else 1)
        assert ece(np.array(probs), labels) < 1e-12

    def test_bin_edges_right_closed(self):
        # confidence exactly 1/15 * k lands in bin k-1; still gives |acc - conf|
        assert ece(np.array([[1.0, 0.0]]), [0], n_bins=15) == 0.0

    @settings(max_examples=30)
    @given(st.integers(0, 10_000))
    def test_order_invariant(self, seed):
        rng = np.random.default_rng(seed)
        p = rng.dirichlet(np.ones(4), size=30)
        y = rng.integers(0, 4, 30)
        perm = rng.permutation(30)
        assert ece(p, y) == pytest.approx(ece(p[perm], y[perm]), abs=1e-14)
        assert macro_f1(p, y) == macro_f1(p[perm], y[perm])
        assert brier(p, y).score == pytest.approx(brier(p[perm], y[perm]).score, abs=1e-14)


class TestBrier:
    def test_perfect(self):
        b = brier(onehot([0, 1, 2], 3), [0, 1, 2])
        assert b.score == 0 and b.reliability == 0

    def test_uniform_binary(self):
        assert brier(np.array([[0.5, 0.5]]), [0]).score == 0.5

    @pytest.mark.parametrize("C", [2, 4, 6])
    def test_identity_on_quantized(self, C):
        rng = np.random.default_rng(C)
        p = quantized_forecasts(rng, 300, C)
        y = rng.integers(0, C, 300)
        b = brier(p, y)
        score, rel, res, unc = brute_brier_decomposition(p, y, 10)
        assert b.score == pytest.approx(score, abs=1e-12)
        assert b.reliability == pytest.approx(rel, abs=1e-12)
        assert b.resolution == pytest.approx(res, abs=1e-12)
        assert b.uncertainty == pytest.approx(unc, abs=1e-12)
        assert abs(b.reliability - b.resolution + b.uncertainty - b.score) < 1e-9

    @given(st.integers(0, 10_000))
    def test_bounds(self, seed):
        rng = np.random.default_rng(seed)
        p = rng.dirichlet(np.full(5, 0.3), size=20)
        s = brier(p, rng.integers(0, 5, 20)).score
        assert 0 <= s <= 2


class TestEntropy:
    def test_values(self):
        assert entropy(np.full(10, 0.1)) == pytest.approx(math.log(10), abs=1e-12)
        assert entropy(np.array([0.0, 1.0, 0.0])) == 0.0
        assert entropy(np.array([0.9, 0.1])) == pytest.approx(0.325083, abs=1e-6)

    def test_invalid(self):
        with pytest.raises(ValueError):
            entropy(np.array([0.5, 0.6]))

    @given(st.integers(2, 30), st.integers(0, 10_000))
    def test_bounds_and_permutation(self, C, seed):
        rng = np.random.default_rng(seed)
        p = rng.dirichlet(np.full(C, 0.5))
        h = entropy(p)
        assert -1e-15 <= h <= math.log(C) + 1e-12
        assert entropy(p[rng.permutation(C)]) == pytest.approx(h, abs=1e-12)

    def test_uniform_exact(self):
        for C in (2, 3, 7, 20, 100):
            assert abs(entropy(np.full(C, 1 / C)) - math.log(C)) < 1e-12


class TestHistogram:
    def test_one_hot(self):
        counts, edges, mean = entropy_histogram(entropy(onehot([0, 1, 1], 4)), 10, n_classes=4)
        assert counts[0] == 3 and counts.sum() == 3 and mean == 0
        assert edges[-1] == pytest.approx(math.log(4))

    def test_uniform(self):
        h = entropy(np.full((5, 4), 0.25))
        counts, _, mean = entropy_histogram(h, 10, n_classes=4)
        assert counts[-1] == 5 and mean == pytest.approx(math.log(4))

    def test_recount(self):
        rng = np.random.default_rng(0)
        h = entropy(rng.dirichlet(np.ones(6), size=500))
        counts, edges, _ = entropy_histogram(h, 12, n_classes=6)
        recount = [0] * 12
        width = math.log(6) / 12
        for v in h:
            recount[min(int(v / width), 11)] += 1
        assert counts.tolist() == recount

    def test_errors(self):
        with pytest.raises(ValueError):
            entropy_histogram([], 5, n_classes=3)
        with pytest.raises(ValueError):
            entropy_histogram([0.1], 5)


def test_evaluate_bundle():
    rng = np.random.default_rng(1)
    p = rng.dirichlet(np.ones(3), size=40)
    y = rng.integers(0, 3, 40)
    r = evaluate(p, y, forward_passes=440)
    assert isinstance(r, EvalReport)
    assert r.accuracy == accuracy(p, y)
    assert r.brier_reliability == brier(p, y).reliability
    assert r.mean_entropy == pytest.approx(entropy(p).mean())
    assert r.forward_passes == 440 and r.n_samples == 40
    assert list(r.as_dict()) == list(EvalReport.FIELDS)
