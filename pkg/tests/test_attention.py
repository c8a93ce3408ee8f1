import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdibench.attention import (AttentionError, GraphAttentionLayer,
                                attention_aggregate, attention_coefficients,
                                learn_graph_topk)
from fdibench.autodiff import Tensor, mse, numeric_gradient


def test_coefficients_rows_sum_to_one_on_neighborhoods():
    rng = np.random.default_rng(0)
    nbrs = {0: [1, 2], 1: [0], 2: [0, 1, 3], 3: [2]}
    layer = GraphAttentionLayer(4, 5, 3, neighborhoods=nbrs, rng=rng)
    h = rng.standard_normal((4, 5))
    alpha = attention_coefficients(layer, h)
    np.testing.assert_allclose(alpha.sum(axis=-1), 1.0, atol=1e-12)
    # zero outside the neighborhood
    assert alpha[0, 0] == 0.0 and alpha[0, 3] == 0.0
    assert alpha[1, 2] == 0.0
    assert (alpha[2, [0, 1, 3]] > 0).all()


def test_coefficients_batched():
    rng = np.random.default_rng(1)
    layer = GraphAttentionLayer(3, 4, 2, rng=rng)
    h = rng.standard_normal((5, 3, 4))
    alpha = attention_coefficients(layer, h)
    assert alpha.shape == (5, 3, 3)
    np.testing.assert_allclose(alpha.sum(axis=-1), 1.0, atol=1e-12)
    np.testing.assert_allclose(np.diagonal(alpha, axis1=1, axis2=2), 0.0, atol=0)


def test_aggregate_shape_and_nonnegative():
    rng = np.random.default_rng(2)
    layer = GraphAttentionLayer(4, 6, 3, rng=rng)
    out = attention_aggregate(layer, rng.standard_normal((4, 6)))
    assert out.shape == (4, 3)
    assert (out >= 0).all()  # ReLU output


def test_aggregate_matches_manual_computation():
    rng = np.random.default_rng(3)
    layer = GraphAttentionLayer(3, 2, 2, rng=rng)
    h = rng.standard_normal((3, 2))
    alpha = attention_coefficients(layer, h)
    Wh = h @ layer.W.data
    expect = np.maximum(alpha @ Wh, 0.0)
    np.testing.assert_allclose(attention_aggregate(layer, h), expect, atol=1e-12)


def test_attention_gradients():
    rng = np.random.default_rng(4)
    layer = GraphAttentionLayer(4, 3, 3, rng=rng)
    h = rng.standard_normal((4, 3))
    target = rng.standard_normal((4, 3))

    def loss():
        return mse(layer.aggregate(Tensor(h)), target)

    for p in layer.parameters():
        p.grad = None
    loss().backward()
    for p in layer.parameters():
        analytic = p.grad.copy()
        numeric = numeric_gradient(lambda: loss().data, p)
        denom = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
        assert np.abs(analytic - numeric).max() / denom < 1e-4


def test_empty_neighborhood_names_node():
    with pytest.raises(AttentionError, match="node 1"):
        GraphAttentionLayer(3, 2, 2, neighborhoods={0: [1], 1: [], 2: [0]})


def test_feature_width_mismatch():
    layer = GraphAttentionLayer(3, 4, 2)
    with pytest.raises(AttentionError, match="width"):
        layer.coefficients(np.zeros((3, 5)))


def test_topk_by_cosine_similarity():
    emb = np.array([
        [1.0, 0.0],
        [0.9, 0.1],   # closest to 0
        [0.0, 1.0],
        [-1.0, 0.0],
    ])
    nbrs = learn_graph_topk(emb, 2)
    assert nbrs[0] == (1, 2)        # self excluded
    assert nbrs[3][0] == 2          # orthogonal beats antiparallel
    for i, row in nbrs.items():
        assert i not in row
        assert len(row) == 2


def test_topk_tie_breaks_toward_lower_index():
    emb = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    nbrs = learn_graph_topk(emb, 2)
    assert nbrs[3] == (0, 1)  # all similarities equal, lowest indices win


def test_topk_zero_norm_ranks_last():
    emb = np.array([[1.0, 0.0], [0.0, 0.0], [0.8, 0.1], [0.7, 0.2]])
    nbrs = learn_graph_topk(emb, 2)
    assert 1 not in nbrs[0]  # zero-norm sensor similarity forced to -1
    assert set(nbrs[1]) == {0, 2}  # and it still gets (index-ordered) neighbors


def test_topk_k_bound():
    with pytest.raises(AttentionError, match="k="):
        learn_graph_topk(np.eye(3), 3)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 8))
def test_property_rows_always_sum_to_one(seed, n):
    rng = np.random.default_rng(seed)
    layer = GraphAttentionLayer(n, 3, 2, rng=rng)
    h = rng.standard_normal((n, 3)) * rng.uniform(0.1, 10)
    alpha = attention_coefficients(layer, h)
    np.testing.assert_allclose(alpha.sum(axis=-1), 1.0, atol=1e-12)
    assert (alpha >= 0).all()
