"""Graph attention primitives: coefficients, aggregation, top-k graph learning.

Coefficients for node i over its neighborhood N_i:

    alpha_ij = softmax_{j in N_i} LeakyReLU(a^T [W h_i || W h_j])

and the aggregated output h'_i = sigma(sum_j alpha_ij W h_j) with sigma=ReLU.
"""
from __future__ import annotations

import numpy as np

from .autodiff import Tensor, glorot

NEG_INF = -1e30


class AttentionError(ValueError):
    pass


class GraphAttentionLayer:
    """One attention layer over a fixed neighborhood map.

    ``neighborhoods`` maps node index -> iterable of neighbor indices.  The
    layer owns W (n_in x n_out) and the attention vector a (2*n_out,).
    """

    def __init__(self, n_nodes: int, n_in: int, n_out: int,
                 neighborhoods: dict | None = None, slope: float = 0.2,
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_nodes = n_nodes
        self.n_in = n_in
        self.n_out = n_out
        self.slope = slope
        self.W = glorot(rng, n_in, n_out)
        self.a = glorot(rng, 2 * n_out, 1, shape=(2 * n_out,))
        self.set_neighborhoods(neighborhoods)

    def set_neighborhoods(self, neighborhoods: dict | None) -> None:
        """None means fully connected (every other node is a neighbor)."""
        if neighborhoods is None:
            neighborhoods = {
                i: [j for j in range(self.n_nodes) if j != i] for i in range(self.n_nodes)
            }
        mask = np.full((self.n_nodes, self.n_nodes), NEG_INF)
        for i in range(self.n_nodes):
            nbrs = list(neighborhoods.get(i, ()))
            if not nbrs:
                raise AttentionError(f"node {i} has an empty neighborhood")
            mask[i, nbrs] = 0.0
        self.neighborhoods = {i: tuple(neighborhoods[i]) for i in neighborhoods}
        self._mask = mask

    def parameters(self) -> list:
        return [self.W, self.a]

    def _logits(self, h: Tensor) -> tuple:
        """Masked pairwise logits; h is (..., n_nodes, n_in)."""
        Wh = h @ self.W
        d = self.n_out
        s = Wh @ self.a[:d].reshape(d, 1)     # (..., n_nodes, 1)
        r = Wh @ self.a[d:].reshape(d, 1)
        logits = (s + r.swapaxes(-1, -2)).leaky_relu(self.slope)
        return logits + Tensor(self._mask), Wh

    def coefficients(self, h) -> Tensor:
        """Attention matrix alpha with rows summing to 1 over N_i."""
        h = h if isinstance(h, Tensor) else Tensor(np.asarray(h, dtype=float))
        if h.shape[-1] != self.n_in:
            raise AttentionError(f"feature width {h.shape[-1]} != {self.n_in}")
        masked, _ = self._logits(h)
        alpha = masked.softmax(axis=-1)
        # rows of the mask that are all -inf would yield nan; guarded above
        return alpha

    def aggregate(self, h, alpha: Tensor | None = None) -> Tensor:
        """h'_i = ReLU(sum_j alpha_ij W h_j)."""
        h = h if isinstance(h, Tensor) else Tensor(np.asarray(h, dtype=float))
        if alpha is None:
            masked, Wh = self._logits(h)
            alpha = masked.softmax(axis=-1)
        else:
            Wh = h @ self.W
        return (alpha @ Wh).relu()


def attention_coefficients(layer: GraphAttentionLayer, features) -> np.ndarray:
    """Numpy view of the coefficients for inspection and tests."""
    return layer.coefficients(features).data


def attention_aggregate(layer: GraphAttentionLayer, features, alpha=None) -> np.ndarray:
    a = None if alpha is None else Tensor(np.asarray(alpha, dtype=float))
    return layer.aggregate(features, a).data


def learn_graph_topk(embeddings: np.ndarray, k: int) -> dict:
    """Top-k neighbors per sensor by cosine similarity of embeddings.

    Self is excluded; ties break toward the lower sensor index.  Zero-norm
    embeddings get similarity -1 against everything (flagged via the returned
    map's ``"zero_norm"`` entry on the companion diagnostics).
    """
    emb = np.asarray(embeddings, dtype=float)
    n = emb.shape[0]
    if not k < n:
        raise AttentionError(f"k={k} must be < number of sensors {n}")
    norms = np.linalg.norm(emb, axis=1)
    zero = norms <= 0
    safe = np.where(zero, 1.0, norms)
    unit = emb / safe[:, None]
    sim = unit @ unit.T
    sim[zero, :] = -1.0
    sim[:, zero] = -1.0
    np.fill_diagonal(sim, -np.inf)
    out = {}
    idx = np.arange(n)
    for i in range(n):
        order = np.lexsort((idx, -sim[i]))  # by -similarity, then index
        out[i] = tuple(int(j) for j in order[:k])
    return out


def topk_similarities(embeddings: np.ndarray, neighborhoods: dict) -> list:
    """(sensor, neighbor, similarity) rows for the adjacency dump."""
    emb = np.asarray(embeddings, dtype=float)
    norms = np.linalg.norm(emb, axis=1)
    safe = np.where(norms <= 0, 1.0, norms)
    unit = emb / safe[:, None]
    sim = unit @ unit.T
    rows = []
    for i in sorted(neighborhoods):
        for j in neighborhoods[i]:
            s = -1.0 if (norms[i] <= 0 or norms[j] <= 0) else float(sim[i, j])
            rows.append((i, j, s))
    return rows
