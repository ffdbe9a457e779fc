import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from desot.ood import (OodSplit, SplitRoleError, candidate_thresholds, detect, evaluate_detection,
                       fit_threshold, split_halves)


def records(h_in, h_ood, role="all"):
    h = np.concatenate([h_in, h_ood])
    is_ood = np.r_[np.zeros(len(h_in), bool), np.ones(len(h_ood), bool)]
    return OodSplit(h, is_ood, np.arange(len(h)), role)


def exhaustive_best_f1(h, is_ood):
    """Try every achievable flagged set: all records strictly above each value, plus all records."""
    best = 0.0
    for tau in [-1.0, *sorted(set(h.tolist()))]:
        tp = fp = fn = 0
        for v, o in zip(h, is_ood):
            flagged = v > tau
            tp += flagged and o
            fp += flagged and not o
            fn += (not flagged) and o
        f1 = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
        best = max(best, f1)
    return best


def confusion_oracle(h, is_ood, tau):
    tp = fp = fn = tn = 0
    for v, o in zip(h, is_ood):
        if v > tau:
            if o:
                tp += 1
            else:
                fp += 1
        elif o:
            fn += 1
        else:
            tn += 1
    return tp, fp, fn, tn


class TestSplit:
    def test_halves(self):
        fit, ev = split_halves(records([0.1, 0.2], [1.0, 1.1]), seed=0)
        assert len(fit) == 2 and len(ev) == 2
        assert fit.is_ood.sum() == 1 and ev.is_ood.sum() == 1
        assert fit.role == "fit" and ev.role == "eval"

    def test_deterministic_and_disjoint(self):
        rng = np.random.default_rng(0)
        r = records(rng.random(31), rng.random(17) + 1)
        a, b = split_halves(r, 5)
        c, _ = split_halves(r, 5)
        np.testing.assert_array_equal(a.group_ids, c.group_ids)
        assert not set(a.group_ids) & set(b.group_ids)
        assert len(a) + len(b) == 48

    def test_degenerate(self):
        with pytest.raises(ValueError):
            split_halves(records([], [0.5, 0.7, 0.9]), 0)
        with pytest.raises(ValueError):
            split_halves(records([0.1], [0.5]), 0)


class TestFit:
    def test_separable(self):
        fit = fit_threshold(records([0.1, 0.2], [1.0, 1.1], "fit"))
        assert fit.threshold == pytest.approx(0.6)
        assert fit.f1 == 1.0 and not fit.degenerate

    def test_inseparable_pair(self):
        fit = fit_threshold(records([0.5], [0.5], "fit"))
        assert fit.threshold == pytest.approx(0.5, abs=1e-15)
        assert fit.degenerate

    def test_candidates(self):
        c = candidate_thresholds([0.3, 0.1, 0.3, 0.7])
        assert c[0] < 0.1 and c[-1] == 0.7
        np.testing.assert_allclose(c[1:-1], [0.2, 0.5])

    def test_role_guard(self):
        with pytest.raises(SplitRoleError):
            fit_threshold(records([0.1], [0.9], "eval"))

    def test_tie_goes_to_smaller(self):
        # in 0.1, ood 0.5, in 0.6, ood 0.9: thresholds 0.3 and 0.75 both give F1 = 2/3 ... pick 0.3
        fit = fit_threshold(records([0.1, 0.6], [0.5, 0.9], "fit"))
        expected = exhaustive_best_f1(np.array([0.1, 0.6, 0.5, 0.9]), np.array([0, 0, 1, 1], bool))
        assert fit.f1 == expected
        assert fit.threshold == pytest.approx(0.3)

    def test_matches_exhaustive_search(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            n_in, n_ood = rng.integers(1, 30, size=2)
            h_in = np.round(rng.gamma(2.0, 0.3, n_in), rng.integers(1, 4))
            h_ood = np.round(rng.gamma(3.0, 0.3, n_ood), rng.integers(1, 4))
            r = records(h_in, h_ood, "fit")
            fit = fit_threshold(r)
            assert fit.f1 == exhaustive_best_f1(r.entropies, r.is_ood)
            # the reported F1 is what the threshold actually achieves
            tp, fp, fn, _ = confusion_oracle(r.entropies, r.is_ood, fit.threshold)
            assert fit.f1 == (2 * tp / (2 * tp + fp + fn))

    @settings(max_examples=50)
    @given(st.lists(st.floats(0, 3), min_size=1, max_size=15),
           st.lists(st.floats(0, 3), min_size=1, max_size=15))
    def test_exhaustive_property(self, h_in, h_ood):
        r = records(h_in, h_ood, "fit")
        assert fit_threshold(r).f1 == exhaustive_best_f1(r.entropies, r.is_ood)

    @settings(max_examples=30)
    @given(st.integers(0, 10_000))
    def test_monotone_transform_invariance(self, seed):
        rng = np.random.default_rng(seed)
        r = records(rng.random(20), rng.random(12) * 1.5, "fit")
        fit = fit_threshold(r)
        warped = OodSplit(np.sqrt(r.entropies) * 3, r.is_ood, r.group_ids, "fit")
        assert fit_threshold(warped).f1 == fit.f1
        ev = OodSplit(rng.random(25) * 1.5, rng.random(25) > 0.5, np.arange(25), "eval")
        a = evaluate_detection(ev, fit.threshold)
        b = evaluate_detection(OodSplit(np.sqrt(ev.entropies) * 3, ev.is_ood, ev.group_ids, "eval"),
                               np.sqrt(fit.threshold) * 3)
        assert (a.accuracy, a.precision, a.recall, a.f1) == (b.accuracy, b.precision, b.recall, b.f1)


class TestEvaluate:
    def test_perfect(self):
        rep = evaluate_detection(records([0.1, 0.2], [1.0, 1.1], "eval"), 0.6)
        assert (rep.accuracy, rep.precision, rep.recall, rep.f1) == (1.0, 1.0, 1.0, 1.0)

    def test_flag_everything(self):
        rep = evaluate_detection(records([0.1, 0.2, 0.3], [1.0], "eval"), -1.0)
        assert rep.recall == 1.0 and rep.precision == 0.25

    def test_undefined_precision_flagged(self):
        rep = evaluate_detection(records([0.1], [0.2], "eval"), 5.0)
        assert rep.precision == 0.0 and "precision_undefined" in rep.flags

    def test_matches_confusion_oracle(self):
        rng = np.random.default_rng(7)
        h = rng.random(100) * 2
        is_ood = rng.random(100) < 0.3
        rep = evaluate_detection(OodSplit(h, is_ood, np.arange(100), "eval"), 1.1)
        tp, fp, fn, tn = confusion_oracle(h, is_ood, 1.1)
        assert rep.accuracy == (tp + tn) / 100
        assert rep.precision == tp / (tp + fp)
        assert rep.recall == tp / (tp + fn)
        assert rep.f1 == 2 * tp / (2 * tp + fp + fn)

    def test_role_guard(self):
        with pytest.raises(SplitRoleError):
            evaluate_detection(records([0.1], [0.9], "fit"), 0.5)

    def test_detect_end_to_end(self):
        rng = np.random.default_rng(3)
        rep = detect(records(rng.random(40) * 0.4, rng.random(40) * 0.4 + 1.0), seed=1)
        assert rep.f1 == 1.0 and rep.n_samples == 40


def test_record_validation():
    with pytest.raises(ValueError):
        OodSplit(np.array([-0.1]), np.array([True]), np.array([0]))
    with pytest.raises(ValueError):
        OodSplit(np.array([0.1, 0.2]), np.array([True]), np.array([0, 1]))
    with pytest.raises(ValueError):
        OodSplit(np.array([0.1]), np.array([True]), np.array([0]), role="test")
