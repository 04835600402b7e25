import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from specxnet.metrics import accuracy, average_precision, roc_auc, summarize


def pair_auc(s, y):
    pos = [a for a, l in zip(s, y) if l]
    neg = [a for a, l in zip(s, y) if not l]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def test_hand_dataset_twenty_points():
    s = [0.1, 0.4, 0.35, 0.8, 0.65, 0.2, 0.9, 0.5, 0.5, 0.3, 0.7, 0.6, 0.45, 0.15, 0.5, 0.95, 0.05, 0.55, 0.25, 0.85]
    y = [0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 0, 1, 0, 1, 1, 0, 1, 0, 1]
    assert roc_auc(s, y) == pair_auc(s, y)


@given(st.lists(st.tuples(st.integers(0, 6), st.booleans()), min_size=2, max_size=40))
def test_auc_matches_pairs_with_ties(rows):
    s = [r[0] / 6 for r in rows]
    y = [r[1] for r in rows]
    if len(set(y)) < 2:
        assert math.isnan(roc_auc(s, y))
    else:
        assert roc_auc(s, y) == pytest.approx(pair_auc(s, y), abs=1e-15)


def test_auc_monotone_invariance(rng):
    s = rng.standard_normal(50).round(1)
    y = rng.integers(0, 2, 50)
    base = roc_auc(s, y)
    assert roc_auc(np.exp(s), y) == base and roc_auc(10 * s, y) == base


def test_perfect_and_random():
    y = np.array([0, 0, 1, 1])
    assert roc_auc([0.1, 0.2, 0.8, 0.9], y) == 1.0 and average_precision([0.1, 0.2, 0.8, 0.9], y) == 1.0
    r = np.random.default_rng(0)
    labels = np.tile([0, 1], 1500)
    assert abs(roc_auc(r.random(3000), labels) - 0.5) < 0.05


def test_average_precision_step_rule():
    # ranking: 1, 0, 1, 0 -> AP = 0.5 * 1 + 0.5 * 2/3
    assert average_precision([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0]) == pytest.approx(0.5 + 1 / 3)
    # a tie group counts once at its combined precision
    assert average_precision([0.5, 0.5], [1, 0]) == pytest.approx(0.5)


def test_accuracy_threshold_and_summary():
    assert accuracy([0.5, 0.49, 0.7], [1, 0, 0]) == pytest.approx(2 / 3)
    out = summarize([0.2, 0.8], [0, 1])
    assert out == {"accuracy": 1.0, "auc": 1.0, "map": 1.0}
    assert math.isnan(summarize([0.2, 0.8], [1, 1])["auc"])
