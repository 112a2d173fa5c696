import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smoothfeed.metrics import MetricError, auc, recall_at_precision


def brute_force_auc(scores, labels):
    """Oracle: enumerate every positive-negative pair, ties count 0.5."""
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def brute_force_recall_at_precision(scores, labels, p_target):
    """Oracle: try every distinct score as a >= threshold."""
    best = 0.0
    n_pos = sum(labels)
    for t in sorted(set(scores)):
        tp = sum(1 for s, y in zip(scores, labels) if s >= t and y)
        fp = sum(1 for s, y in zip(scores, labels) if s >= t and not y)
        if tp + fp == 0:
            continue
        if tp / (tp + fp) >= p_target:
            best = max(best, tp / n_pos)
    return best


class TestAuc:
    def test_perfect_separation(self):
        assert auc([0.9, 0.1], [1, 0]) == 1.0

    def test_hand_computed_pairs(self):
        # pairs: (.8,.6)+, (.8,.2)+, (.4,.6)-, (.4,.2)+ -> 3/4
        assert auc([0.8, 0.6, 0.4, 0.2], [1, 0, 1, 0]) == 0.75

    def test_all_ties_is_half(self):
        assert auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == 0.5

    def test_single_class_raises(self):
        with pytest.raises(MetricError):
            auc([0.1, 0.2], [1, 1])

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(42)
        for _ in range(300):
            n = int(rng.integers(2, 50))
            # Draw from a small value set so ties occur often.
            scores = rng.choice(np.linspace(0, 1, 7), size=n)
            labels = rng.integers(0, 2, size=n).astype(bool)
            if labels.all() or not labels.any():
                continue
            assert auc(scores, labels) == pytest.approx(
                brute_force_auc(scores.tolist(), labels.tolist()), abs=1e-12)

    @given(st.data())
    @settings(max_examples=80, deadline=None)
    def test_invariant_under_monotone_transforms(self, data):
        n = data.draw(st.integers(4, 30))
        # Quantized so the affine transform stays strictly monotone in
        # float arithmetic (tiny values would collapse into ties).
        scores = np.round(np.array(data.draw(st.lists(
            st.floats(-5, 5, allow_nan=False), min_size=n, max_size=n))), 3)
        labels = np.array(data.draw(st.lists(st.booleans(), min_size=n, max_size=n)))
        if labels.all() or not labels.any():
            return
        base = auc(scores, labels)
        for transform in (lambda x: 3.0 * x + 1.0, np.tanh, lambda x: x ** 3):
            assert auc(transform(scores), labels) == pytest.approx(base, abs=1e-9)


class TestRecallAtPrecision:
    def test_perfect_classifier(self):
        assert recall_at_precision([0.9, 0.8, 0.1], [1, 1, 0], 1.0) == 1.0

    def test_enumerated_thresholds(self):
        # thresholds .9/.8/.7 give (precision, recall) = (1,.5), (.5,.5), (2/3,1)
        assert recall_at_precision([0.9, 0.8, 0.7], [1, 0, 1], 0.7) == 0.5

    def test_inverted_classifier(self):
        assert recall_at_precision([0.1, 0.2, 0.9, 0.8], [1, 1, 0, 0], 0.7) == 0.0

    def test_single_class_raises(self):
        with pytest.raises(MetricError):
            recall_at_precision([0.5, 0.6], [0, 0])

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(7)
        for _ in range(300):
            n = int(rng.integers(2, 50))
            scores = rng.choice(np.linspace(0, 1, 5), size=n)
            labels = rng.integers(0, 2, size=n).astype(bool)
            if labels.all() or not labels.any():
                continue
            p_target = float(rng.choice([0.3, 0.5, 0.7, 0.9]))
            assert recall_at_precision(scores, labels, p_target) == pytest.approx(
                brute_force_recall_at_precision(scores.tolist(), labels.tolist(),
                                                p_target), abs=1e-12)

    def test_non_increasing_in_target(self):
        rng = np.random.default_rng(11)
        scores = rng.random(40)
        labels = rng.integers(0, 2, size=40).astype(bool)
        values = [recall_at_precision(scores, labels, p)
                  for p in np.linspace(0.05, 1.0, 20)]
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))
