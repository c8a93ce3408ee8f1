import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdibench.metrics import (MetricsError, f1_score, localization_metrics,
                              point_metrics)


def test_f1_harmonic_mean():
    assert f1_score(1.0, 1.0) == 1.0
    assert f1_score(0.5, 1.0) == pytest.approx(2 / 3)
    assert f1_score(0.0, 0.0) == 0.0
    assert f1_score(0.0, 1.0) == 0.0


def test_point_metrics_hand_counted():
    pred = np.array([1, 1, 0, 0, 1], dtype=bool)
    truth = np.array([1, 0, 1, 0, 1], dtype=bool)
    m = point_metrics(pred, truth)
    assert (m.counts.tp, m.counts.fp, m.counts.fn, m.counts.tn) == (2, 1, 1, 1)
    assert m.precision == pytest.approx(2 / 3)
    assert m.recall == pytest.approx(2 / 3)
    assert m.f1 == pytest.approx(2 / 3)
    assert not m.degenerate
    assert m.counts.total == 5


def test_point_metrics_degenerate_no_predictions():
    m = point_metrics(np.zeros(4, dtype=bool), np.array([1, 0, 1, 0], dtype=bool))
    assert m.precision == 0.0 and m.recall == 0.0 and m.f1 == 0.0
    assert m.degenerate


def test_point_metrics_degenerate_no_positives_in_truth():
    m = point_metrics(np.array([1, 0], dtype=bool), np.zeros(2, dtype=bool))
    assert m.recall == 0.0
    assert m.degenerate


def test_point_metrics_shape_mismatch():
    with pytest.raises(MetricsError, match="mismatch"):
        point_metrics(np.zeros(3, dtype=bool), np.zeros(4, dtype=bool))


def test_localization_hit_and_rank():
    loc = localization_metrics([5, 2, 9, 7, 1], {2, 7}, k=3)
    assert loc.hit_at_k == 0.5          # bus 2 in top 3, bus 7 at rank 4
    assert loc.mean_rank == 3.0         # (2 + 4) / 2
    assert loc.k == 3


def test_localization_perfect():
    loc = localization_metrics([3, 1, 2], {1, 3}, k=2)
    assert loc.hit_at_k == 1.0
    assert loc.mean_rank == 1.5


def test_localization_requires_coverage():
    with pytest.raises(MetricsError, match="cover"):
        localization_metrics([1, 2], {3}, k=2)
    with pytest.raises(MetricsError, match="empty"):
        localization_metrics([1, 2], set(), k=2)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=50),
       st.lists(st.booleans(), min_size=1, max_size=50))
def test_property_metrics_bounded_and_consistent(pred, truth):
    n = min(len(pred), len(truth))
    m = point_metrics(np.array(pred[:n]), np.array(truth[:n]))
    assert 0.0 <= m.precision <= 1.0
    assert 0.0 <= m.recall <= 1.0
    assert min(m.precision, m.recall) <= m.f1 <= max(m.precision, m.recall)
    assert m.counts.total == n
    assert m.f1 == pytest.approx(f1_score(m.precision, m.recall))
