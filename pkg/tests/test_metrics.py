import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neurobeam.metrics import loc_metrics, merge_metrics


def test_all_correct():
    pred = np.array([1, 2, 3, 4])
    m = loc_metrics(pred, pred, np.ones(4, dtype=bool), 12)
    assert (m.acc, m.aer, m.oer) == (1.0, 0.0, 0.0)


def test_counts_8_1_1():
    truth = np.full(10, 5)
    pred = np.full(10, 5)
    pred[0] = 6   # adjacent
    pred[1] = 9   # other
    m = loc_metrics(pred, truth, np.ones(10, dtype=bool), 12)
    assert (m.acc, m.aer, m.oer) == (0.8, 0.1, 0.1)
    assert (m.n_true, m.n_adjacent, m.n_false, m.n_all) == (8, 1, 1, 10)


def test_wraparound_adjacency_by_enumeration():
    n = 12
    # Enumerate every (pred, truth) pair and check the circular rule.
    for truth in range(1, n + 1):
        for pred in range(1, n + 1):
            m = loc_metrics([pred], [truth], [True], n)
            ring_dist = min((pred - truth) % n, (truth - pred) % n)
            if ring_dist == 0:
                assert m.acc == 1.0
            elif ring_dist == 1:
                assert m.aer == 1.0
            else:
                assert m.oer == 1.0


def test_zone_1_and_zone_n_are_adjacent():
    m = loc_metrics([12], [1], [True], 12)
    assert m.aer == 1.0
    m = loc_metrics([1], [12], [True], 12)
    assert m.aer == 1.0


def test_inactive_frames_ignored():
    pred = np.array([1, 9, 9, 9])
    truth = np.array([1, 1, 1, 1])
    active = np.array([True, False, False, True])
    m = loc_metrics(pred, truth, active, 12)
    assert m.n_all == 2
    assert m.acc == 0.5 and m.oer == 0.5


def test_no_active_frames_raises():
    with pytest.raises(ValueError, match="active"):
        loc_metrics([1], [1], [False], 12)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.sampled_from([2, 3, 12, 36]))
def test_identity_sums_to_one_exactly(seed, n):
    g = np.random.default_rng(seed)
    frames = int(g.integers(1, 60))
    pred = g.integers(1, n + 1, size=frames)
    truth = g.integers(1, n + 1, size=frames)
    active = g.uniform(size=frames) < 0.7
    if not active.any():
        active[0] = True
    m = loc_metrics(pred, truth, active, n)
    assert m.acc + m.aer + m.oer == 1.0
    assert m.n_true + m.n_adjacent + m.n_false == m.n_all


def test_merge_metrics_pools_counts():
    a = loc_metrics([1, 2], [1, 1], [True, True], 12)
    b = loc_metrics([5], [7], [True], 12)
    merged = merge_metrics([a, b])
    assert merged.n_all == 3
    assert merged.n_true == 1 and merged.n_adjacent == 1 and merged.n_false == 1
    assert merged.acc + merged.aer + merged.oer == 1.0
