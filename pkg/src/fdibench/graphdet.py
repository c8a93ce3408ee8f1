"""Graph-based detectors: deviation network (GDN) and attention forecaster (GAT).

Both train on attack-free traces only, consume 1 s windows, and score every
sample from per-sensor errors that are robust-normalized (median/IQR from
held-out normal data).  The overall anomaly score is the maximum per-sensor
deviation; the firing threshold is the maximum overall score seen on normal
validation data (configurable factor).

GDN forecasts each sensor's next value purely from its learned top-k
neighbors (no self edge, no reconstruction head), so a sensor whose
measurements are falsified stays inconsistent with its neighborhood for the
whole attack window.  GAT runs feature- and time-oriented attention plus a
recurrent cell over each window and combines forecasting and reconstruction
errors.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attention import GraphAttentionLayer, learn_graph_topk, topk_similarities
from .autodiff import Adam, Dense, GRUCell, Module, Tensor, concat, glorot, mse
from .scoring import AnomalyScoreSeries, RobustNormalizer, select_threshold


@dataclass(frozen=True)
class GNNTrainConfig:
    window: int = 50             # samples (1 s at 50 Hz)
    learning_rate: float = 1e-3
    max_epochs: int = 40
    batch_size: int = 64
    val_fraction: float = 0.1
    patience: int = 5
    seed: int = 0
    train_stride: int = 1        # subsampling of training windows
    threshold_factor: float = 1.0
    # GDN
    embed_dim: int = 16
    topk: int = 15
    # GAT
    hidden: int = 64
    gamma: float = 0.5           # forecast vs reconstruction weight in scoring

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")


@dataclass
class Standardizer:
    """Per-sensor scaling fitted on the training traces (model input frame)."""

    center: np.ndarray
    scale: np.ndarray

    @staticmethod
    def fit(traces: list) -> "Standardizer":
        cat = np.concatenate(traces, axis=0)
        return Standardizer(
            center=cat.mean(axis=0), scale=np.maximum(cat.std(axis=0), 1e-9)
        )

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.center) / self.scale


def _window_samples(trace: np.ndarray, w: int, stride: int = 1):
    """(x, y) pairs: x = (n_win, sensors, w) history, y = next value."""
    n = trace.shape[0]
    ts = range(w, n, stride)
    x = np.stack([trace[t - w:t].T for t in ts], axis=0)
    y = np.stack([trace[t] for t in ts], axis=0)
    return x, y, np.array(list(ts))


def _train_val_split(n: int, val_fraction: float, rng: np.random.Generator):
    perm = rng.permutation(n)
    n_val = max(1, int(round(val_fraction * n)))
    return perm[n_val:], perm[:n_val]


def _scenario_split(xs: list, ys: list):
    """Hold out the last trace whole for validation when several are given.

    A whole unseen trace (different events) calibrates the error scale and
    threshold against dynamics the model was not fitted to; a random window
    split would leak every event pattern into training.
    """
    if len(xs) >= 2:
        X_tr = np.concatenate(xs[:-1], axis=0)
        Y_tr = np.concatenate(ys[:-1], axis=0)
        return X_tr, Y_tr, xs[-1], ys[-1]
    return None


class GDNModel(Module):
    def __init__(self, n_sensors: int, cfg: GNNTrainConfig):
        rng = np.random.default_rng(cfg.seed)
        d = cfg.embed_dim
        self.n_sensors = n_sensors
        self.cfg = cfg
        self.embeddings = Tensor(rng.standard_normal((n_sensors, d)) * 0.5,
                                 requires_grad=True)
        self.W = glorot(rng, cfg.window, d)
        self.a_emb_i = glorot(rng, d, 1, shape=(d,))
        self.a_feat_i = glorot(rng, d, 1, shape=(d,))
        self.a_emb_j = glorot(rng, d, 1, shape=(d,))
        self.a_feat_j = glorot(rng, d, 1, shape=(d,))
        self.mlp1 = Dense(d, 32, "relu", rng)
        self.mlp2 = Dense(32, 1, None, rng)
        self.slope = 0.2
        self.neighbor_idx = self._topk_array()
        self.standardizer: Standardizer | None = None
        self.error_norm: RobustNormalizer | None = None
        self.threshold: float = np.inf

    def _topk_array(self) -> np.ndarray:
        nbrs = learn_graph_topk(self.embeddings.data, self.cfg.topk)
        return np.array([nbrs[i] for i in range(self.n_sensors)], dtype=int)

    def refresh_graph(self) -> None:
        self.neighbor_idx = self._topk_array()

    def neighborhoods(self) -> dict:
        return {i: tuple(int(j) for j in row) for i, row in enumerate(self.neighbor_idx)}

    def forward(self, x: np.ndarray) -> Tensor:
        """x: (batch, sensors, window) -> predicted next value (batch, sensors)."""
        B, N, w = x.shape
        d = self.cfg.embed_dim
        xt = Tensor(x)
        Wx = xt @ self.W                                    # (B, N, d)
        E = self.embeddings
        p = (Wx @ self.a_feat_i.reshape(d, 1)).reshape(B, N) + \
            (E @ self.a_emb_i.reshape(d, 1)).reshape(1, N)
        q = (Wx @ self.a_feat_j.reshape(d, 1)).reshape(B, N) + \
            (E @ self.a_emb_j.reshape(d, 1)).reshape(1, N)
        nbr = self.neighbor_idx                             # (N, k)
        q_n = q[:, nbr]                                     # (B, N, k)
        logits = (p.reshape(B, N, 1) + q_n).leaky_relu(self.slope)
        alpha = logits.softmax(axis=-1)
        Wx_n = Wx[:, nbr, :]                                # (B, N, k, d)
        k = nbr.shape[1]
        z = (alpha.reshape(B, N, k, 1) * Wx_n).sum(axis=2).relu()   # (B, N, d)
        h = (E.reshape(1, N, d) * z).reshape(B * N, d)
        out = self.mlp2(self.mlp1(h)).reshape(B, N)
        return out

    # serialization ------------------------------------------------------------
    def save(self, path: str | Path) -> None:
        arrs = {f"p{i}": a for i, a in enumerate(self.state_arrays())}
        np.savez(
            path, kind="gdn", n_sensors=self.n_sensors,
            window=self.cfg.window, embed_dim=self.cfg.embed_dim,
            topk=self.cfg.topk, seed=self.cfg.seed,
            neighbor_idx=self.neighbor_idx,
            std_center=self.standardizer.center, std_scale=self.standardizer.scale,
            err_median=self.error_norm.median, err_iqr=self.error_norm.iqr,
            threshold=self.threshold, **arrs,
        )

    @staticmethod
    def load(path: str | Path) -> "GDNModel":
        d = np.load(path)
        cfg = GNNTrainConfig(window=int(d["window"]), embed_dim=int(d["embed_dim"]),
                             topk=int(d["topk"]), seed=int(d["seed"]))
        model = GDNModel(int(d["n_sensors"]), cfg)
        model.set_state_arrays([d[f"p{i}"] for i in range(len(model.parameters()))])
        model.neighbor_idx = d["neighbor_idx"]
        model.standardizer = Standardizer(d["std_center"], d["std_scale"])
        model.error_norm = RobustNormalizer(d["err_median"], d["err_iqr"])
        model.threshold = float(d["threshold"])
        return model


def train_gdn(traces: list, cfg: GNNTrainConfig) -> tuple[GDNModel, dict]:
    """Train on normal traces (each samples x sensors, shared frame)."""
    n_sensors = traces[0].shape[1]
    model = GDNModel(n_sensors, cfg)
    model.standardizer = Standardizer.fit(traces)
    scaled = [model.standardizer.apply(tr) for tr in traces]
    xs, ys = [], []
    for tr in scaled:
        x, y, _ = _window_samples(tr, cfg.window, cfg.train_stride)
        xs.append(x)
        ys.append(y)
    split = _scenario_split(xs, ys)
    rng = np.random.default_rng(cfg.seed)
    if split is not None:
        X, Y, X_val, Y_val = split
        tr_idx = np.arange(X.shape[0])
    else:
        X = np.concatenate(xs, axis=0)
        Y = np.concatenate(ys, axis=0)
        tr_idx, val_idx = _train_val_split(X.shape[0], cfg.val_fraction, rng)
        X_val, Y_val = X[val_idx], Y[val_idx]

    opt = Adam(model.parameters(), lr=cfg.learning_rate)
    best = np.inf
    best_state = [a.copy() for a in model.state_arrays()]
    best_graph = model.neighbor_idx.copy()
    since = 0
    hist = {"train_loss": [], "val_loss": []}
    for epoch in range(cfg.max_epochs):
        model.refresh_graph()
        order = rng.permutation(tr_idx)
        ep = 0.0
        for i0 in range(0, order.size, cfg.batch_size):
            sel = order[i0:i0 + cfg.batch_size]
            opt.zero_grad()
            loss = mse(model.forward(X[sel]), Y[sel])
            if not np.isfinite(loss.data):
                raise FloatingPointError("non-finite GDN training loss")
            loss.backward()
            opt.step()
            ep += float(loss.data) * sel.size
        hist["train_loss"].append(ep / tr_idx.size)
        vl = float(((
            _batched_forward(model, X_val, cfg.batch_size) - Y_val) ** 2).mean())
        hist["val_loss"].append(vl)
        if vl < best - 1e-12:
            best, since = vl, 0
            best_state = [a.copy() for a in model.state_arrays()]
            best_graph = model.neighbor_idx.copy()
        else:
            since += 1
            if since > cfg.patience:
                break
    model.set_state_arrays(best_state)
    model.neighbor_idx = best_graph

    # robust error normalization + threshold from held-out normal data
    err = np.abs(_batched_forward(model, X_val, cfg.batch_size) - Y_val)
    model.error_norm = RobustNormalizer.fit(err)
    val_overall = model.error_norm.apply(err).max(axis=1)
    model.threshold = select_threshold(val_overall, cfg.threshold_factor)
    hist["val_overall"] = val_overall
    return model, hist


def _batched_forward(model, X, batch):
    outs = []
    for i0 in range(0, X.shape[0], batch):
        outs.append(model.forward(X[i0:i0 + batch]).data)
    return np.concatenate(outs, axis=0)


def _batched_loss(model, X, Y, idx, batch) -> float:
    pred = _batched_forward(model, X[idx], batch)
    return float(((pred - Y[idx]) ** 2).mean())


def gdn_score(model: GDNModel, trace: np.ndarray, t_grid: np.ndarray,
              sensor_ids: tuple) -> AnomalyScoreSeries:
    """Deviation scores for every sample; the first window has score 0."""
    w = model.cfg.window
    if trace.shape[0] <= w:
        raise ValueError(f"trace shorter than one window ({w} samples)")
    scaled = model.standardizer.apply(trace)
    X, Y, ts = _window_samples(scaled, w, 1)
    pred = _batched_forward(model, X, 256)
    err = np.abs(pred - Y)
    scores = np.zeros((trace.shape[0], trace.shape[1]))
    scores[ts] = model.error_norm.apply(err)
    return AnomalyScoreSeries(
        t=t_grid, per_sensor=scores, sensor_ids=tuple(sensor_ids),
        threshold=model.threshold,
    )


class GATModel(Module):
    def __init__(self, n_sensors: int, cfg: GNNTrainConfig):
        rng = np.random.default_rng(cfg.seed)
        w = cfg.window
        self.n_sensors = n_sensors
        self.cfg = cfg
        self.feature_att = GraphAttentionLayer(n_sensors, w, w, rng=rng)
        self.time_att = GraphAttentionLayer(w, n_sensors, n_sensors, rng=rng)
        self.cell = GRUCell(3 * n_sensors, cfg.hidden, rng)
        self.forecast_head = Dense(cfg.hidden, n_sensors, None, rng)
        self.recon_head = Dense(cfg.hidden, w * n_sensors, None, rng)
        self.standardizer: Standardizer | None = None
        self.error_norm: RobustNormalizer | None = None
        self.threshold: float = np.inf

    def parameters(self) -> list:
        return (self.feature_att.parameters() + self.time_att.parameters()
                + self.cell.parameters() + self.forecast_head.parameters()
                + self.recon_head.parameters())

    def forward(self, x: np.ndarray) -> tuple:
        """x: (batch, window, sensors) -> (forecast (B,N), recon (B,w,N))."""
        B, w, N = x.shape
        xt = Tensor(x)
        feat = self.feature_att.aggregate(xt.swapaxes(1, 2)).swapaxes(1, 2)  # (B,w,N)
        tim = self.time_att.aggregate(xt)                                    # (B,w,N)
        h = self.cell.init_state(B)
        for t in range(w):
            step = concat([xt[:, t, :], feat[:, t, :], tim[:, t, :]], axis=1)
            h = self.cell(step, h)
        forecast = self.forecast_head(h)
        recon = self.recon_head(h).reshape(B, w, N)
        return forecast, recon

    def save(self, path: str | Path) -> None:
        arrs = {f"p{i}": a for i, a in enumerate(self.state_arrays())}
        np.savez(
            path, kind="gat", n_sensors=self.n_sensors, window=self.cfg.window,
            hidden=self.cfg.hidden, gamma=self.cfg.gamma, seed=self.cfg.seed,
            std_center=self.standardizer.center, std_scale=self.standardizer.scale,
            err_median=self.error_norm.median, err_iqr=self.error_norm.iqr,
            threshold=self.threshold, **arrs,
        )

    @staticmethod
    def load(path: str | Path) -> "GATModel":
        d = np.load(path)
        cfg = GNNTrainConfig(window=int(d["window"]), hidden=int(d["hidden"]),
                             gamma=float(d["gamma"]), seed=int(d["seed"]))
        model = GATModel(int(d["n_sensors"]), cfg)
        model.set_state_arrays([d[f"p{i}"] for i in range(len(model.parameters()))])
        model.standardizer = Standardizer(d["std_center"], d["std_scale"])
        model.error_norm = RobustNormalizer(d["err_median"], d["err_iqr"])
        model.threshold = float(d["threshold"])
        return model


def _gat_errors(model: GATModel, X: np.ndarray, Y: np.ndarray, batch: int) -> np.ndarray:
    """Combined per-sensor error gamma*forecast + (1-gamma)*recon (last step)."""
    g = model.cfg.gamma
    outs = []
    for i0 in range(0, X.shape[0], batch):
        xb = X[i0:i0 + batch]
        fc, rc = model.forward(xb)
        fe = np.abs(fc.data - Y[i0:i0 + batch])
        re = np.abs(rc.data[:, -1, :] - xb[:, -1, :])
        outs.append(g * fe + (1 - g) * re)
    return np.concatenate(outs, axis=0)


def train_gat(traces: list, cfg: GNNTrainConfig) -> tuple["GATModel", dict]:
    """Joint forecast + reconstruction training on normal traces."""
    n_sensors = traces[0].shape[1]
    model = GATModel(n_sensors, cfg)
    model.standardizer = Standardizer.fit(traces)
    scaled = [model.standardizer.apply(tr) for tr in traces]
    xs, ys = [], []
    for tr in scaled:
        x, y, _ = _window_samples(tr, cfg.window, cfg.train_stride)
        xs.append(np.swapaxes(x, 1, 2))  # (n, window, sensors)
        ys.append(y)
    split = _scenario_split(xs, ys)
    rng = np.random.default_rng(cfg.seed)
    if split is not None:
        X, Y, X_val, Y_val = split
        tr_idx = np.arange(X.shape[0])
    else:
        X = np.concatenate(xs, axis=0)
        Y = np.concatenate(ys, axis=0)
        tr_idx, val_idx = _train_val_split(X.shape[0], cfg.val_fraction, rng)
        X_val, Y_val = X[val_idx], Y[val_idx]

    opt = Adam(model.parameters(), lr=cfg.learning_rate)
    best = np.inf
    best_state = [a.copy() for a in model.state_arrays()]
    since = 0
    hist = {"train_loss": [], "val_loss": []}
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(tr_idx)
        ep = 0.0
        for i0 in range(0, order.size, cfg.batch_size):
            sel = order[i0:i0 + cfg.batch_size]
            opt.zero_grad()
            fc, rc = model.forward(X[sel])
            loss = mse(fc, Y[sel]) + mse(rc, X[sel])
            if not np.isfinite(loss.data):
                raise FloatingPointError("non-finite GAT training loss")
            loss.backward()
            opt.step()
            ep += float(loss.data) * sel.size
        hist["train_loss"].append(ep / tr_idx.size)
        vl = 0.0
        for i0 in range(0, X_val.shape[0], cfg.batch_size):
            xb, yb = X_val[i0:i0 + cfg.batch_size], Y_val[i0:i0 + cfg.batch_size]
            fc, rc = model.forward(xb)
            vl += (float(mse(fc, yb).data) + float(mse(rc, xb).data)) * xb.shape[0]
        vl /= X_val.shape[0]
        hist["val_loss"].append(vl)
        if vl < best - 1e-12:
            best, since = vl, 0
            best_state = [a.copy() for a in model.state_arrays()]
        else:
            since += 1
            if since > cfg.patience:
                break
    model.set_state_arrays(best_state)

    err = _gat_errors(model, X_val, Y_val, cfg.batch_size)
    model.error_norm = RobustNormalizer.fit(err)
    val_overall = model.error_norm.apply(err).max(axis=1)
    model.threshold = select_threshold(val_overall, cfg.threshold_factor)
    hist["val_overall"] = val_overall
    return model, hist


def gat_score(model: GATModel, trace: np.ndarray, t_grid: np.ndarray,
              sensor_ids: tuple) -> AnomalyScoreSeries:
    w = model.cfg.window
    if trace.shape[0] <= w:
        raise ValueError(f"trace shorter than one window ({w} samples)")
    scaled = model.standardizer.apply(trace)
    X, Y, ts = _window_samples(scaled, w, 1)
    X = np.swapaxes(X, 1, 2)
    err = _gat_errors(model, X, Y, 256)
    scores = np.zeros((trace.shape[0], trace.shape[1]))
    scores[ts] = model.error_norm.apply(err)
    return AnomalyScoreSeries(
        t=t_grid, per_sensor=scores, sensor_ids=tuple(sensor_ids),
        threshold=model.threshold,
    )


def adjacency_rows(model: GDNModel) -> list:
    return topk_similarities(model.embeddings.data, model.neighborhoods())
