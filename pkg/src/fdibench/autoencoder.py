"""Dense autoencoder with early stopping, plus the autoencoder+k-means detector.

The detector is progressive: before judging window k it (re)trains on all
samples from windows 0..k, warm-starting from the previous checkpoint.  Mean
per-sensor reconstruction errors of the current window are then clustered
(k=2) and gated on the silhouette score, like the plain windowed k-means
detector.  An optional error threshold, calibrated on attack-free data,
keeps ordinary load-change transients (which also split the error
distribution) from firing the silhouette gate.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Adam, Dense, Module, Tensor, mse
from .clustering import DetectionVerdict, kmeans, silhouette
from .dataset import WindowMatrix


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    max_epochs: int = 200
    batch_size: int = 32
    val_fraction: float = 0.1
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if min(self.learning_rate, self.max_epochs, self.batch_size) <= 0:
            raise ValueError("learning rate, epochs, and batch size must be positive")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("validation fraction must lie in (0, 1)")


class AutoencoderModel(Module):
    """Mirrored dense encoder/decoder; linear output layer."""

    def __init__(self, n_inputs: int, hidden: tuple = (32, 8), seed: int = 0):
        if min(hidden) >= n_inputs:
            raise ValueError("bottleneck must be narrower than the input")
        rng = np.random.default_rng(seed)
        widths = (n_inputs, *hidden)
        self.n_inputs = n_inputs
        self.hidden = tuple(hidden)
        self.seed = seed
        self.layers = []
        for a, b in zip(widths, widths[1:]):
            self.layers.append(Dense(a, b, "tanh", rng))
        rev = tuple(reversed(widths))
        for i, (a, b) in enumerate(zip(rev, rev[1:])):
            act = None if i == len(rev) - 2 else "tanh"
            self.layers.append(Dense(a, b, act, rng))
        # input scaler, refitted on the data seen so far before each training run
        self.in_center = np.zeros(n_inputs)
        self.in_scale = np.ones(n_inputs)

    def fit_scaler(self, data: np.ndarray) -> None:
        self.in_center = data.mean(axis=0)
        self.in_scale = np.maximum(data.std(axis=0), 1e-9)

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x

    def reconstruct(self, data: np.ndarray) -> np.ndarray:
        """Reconstruction in the original (unscaled) units."""
        z = (data - self.in_center) / self.in_scale
        out = self(Tensor(z)).data
        return out * self.in_scale + self.in_center

    def reconstruction_report(self, data: np.ndarray):
        rec = self.reconstruct(data)
        sq = (data - rec) ** 2
        return ReconstructionReport(
            per_sample=sq.sum(axis=1),
            per_sensor_mean=sq.mean(axis=0),
        )

    def save(self, path: str | Path) -> None:
        arrs = {f"p{i}": a for i, a in enumerate(self.state_arrays())}
        np.savez(path, n_inputs=self.n_inputs, hidden=np.array(self.hidden),
                 seed=self.seed, in_center=self.in_center, in_scale=self.in_scale, **arrs)

    @staticmethod
    def load(path: str | Path) -> "AutoencoderModel":
        d = np.load(path)
        model = AutoencoderModel(int(d["n_inputs"]), tuple(int(h) for h in d["hidden"]),
                                 seed=int(d["seed"]))
        model.set_state_arrays([d[f"p{i}"] for i in range(len(model.parameters()))])
        model.in_center = d["in_center"]
        model.in_scale = d["in_scale"]
        return model


@dataclass(frozen=True)
class ReconstructionReport:
    per_sample: np.ndarray      # squared Euclidean distance per sample
    per_sensor_mean: np.ndarray


def train_autoencoder(
    data: np.ndarray,
    cfg: TrainConfig,
    model: AutoencoderModel | None = None,
    refit_scaler: bool = True,
) -> tuple[AutoencoderModel, dict]:
    """Train on ``data`` (samples x sensors) with validation early stopping.

    Returns the model holding the best-validation parameters and a history
    dict.  With ``model`` given, continues from its parameters (warm start).
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ValueError("training data must be 2-D (samples x sensors)")
    if model is None:
        model = AutoencoderModel(data.shape[1], seed=cfg.seed)
    if data.shape[0] == 0:
        return model, {"train_loss": [], "val_loss": [], "best_val": 0.0, "epochs": 0}
    if data.shape[1] != model.n_inputs:
        raise ValueError(f"data width {data.shape[1]} != model input {model.n_inputs}")
    if refit_scaler:
        model.fit_scaler(data)
    scaled = (data - model.in_center) / model.in_scale

    rng = np.random.default_rng(cfg.seed)
    n = scaled.shape[0]
    perm = rng.permutation(n)
    n_val = max(1, int(round(cfg.val_fraction * n))) if n > 1 else 0
    val = scaled[perm[:n_val]]
    train = scaled[perm[n_val:]]
    if train.shape[0] == 0:
        train, val = val, val

    opt = Adam(model.parameters(), lr=cfg.learning_rate)
    best_val = np.inf
    best_state = [a.copy() for a in model.state_arrays()]
    since_best = 0
    hist = {"train_loss": [], "val_loss": []}
    epochs_run = 0
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(train.shape[0])
        ep_loss = 0.0
        for i0 in range(0, train.shape[0], cfg.batch_size):
            batch = train[order[i0:i0 + cfg.batch_size]]
            opt.zero_grad()
            loss = mse(model(Tensor(batch)), batch)
            if not np.isfinite(loss.data):
                raise FloatingPointError("non-finite training loss")
            loss.backward()
            opt.step()
            ep_loss += float(loss.data) * batch.shape[0]
        hist["train_loss"].append(ep_loss / max(train.shape[0], 1))
        vl = float(mse(model(Tensor(val)), val).data) if val.shape[0] else hist["train_loss"][-1]
        if not np.isfinite(vl):
            raise FloatingPointError("non-finite validation loss")
        hist["val_loss"].append(vl)
        epochs_run = epoch + 1
        if vl < best_val - 1e-12:
            best_val = vl
            best_state = [a.copy() for a in model.state_arrays()]
            since_best = 0
        else:
            since_best += 1
            if since_best > cfg.patience:
                break
        if cfg.patience == 0 and epoch == 0:
            break
    model.set_state_arrays(best_state)
    hist["best_val"] = float(best_val)
    hist["epochs"] = epochs_run
    return model, hist


class AutoencoderDetector:
    """Progressive autoencoder + k-means window detector."""

    def __init__(self, n_sensors: int, threshold: float = 0.8,
                 cfg: TrainConfig | None = None, epochs_per_window: int = 30,
                 error_threshold: float | None = None,
                 hidden: tuple | None = None):
        self.cfg = cfg if cfg is not None else TrainConfig()
        self.threshold = threshold
        self.epochs_per_window = epochs_per_window
        # calibrated on an attack-free trace: the largest per-sensor mean
        # reconstruction error a window may show without being anomalous
        self.error_threshold = error_threshold
        if hidden is None:
            # shrink the default 32/8 widths when there are few sensors
            hidden = (max(2, min(32, n_sensors - 1)),
                      max(1, min(8, n_sensors // 2)))
        self.model = AutoencoderModel(n_sensors, hidden=hidden, seed=self.cfg.seed)
        self._seen: list[np.ndarray] = []

    def update(self, window: WindowMatrix) -> DetectionVerdict:
        """Train on windows seen so far (incl. this one), then judge this one."""
        self._seen.append(window.data.T)  # samples x sensors
        data = np.concatenate(self._seen, axis=0)
        cfg = TrainConfig(
            learning_rate=self.cfg.learning_rate,
            max_epochs=self.epochs_per_window,
            batch_size=self.cfg.batch_size,
            val_fraction=self.cfg.val_fraction,
            patience=self.cfg.patience,
            seed=self.cfg.seed + len(self._seen),
        )
        self.model, _ = train_autoencoder(data, cfg, model=self.model)
        errors = self.model.reconstruction_report(window.data.T).per_sensor_mean
        return self._judge(window, errors)

    def _judge(self, window: WindowMatrix, errors: np.ndarray) -> DetectionVerdict:
        if np.allclose(errors, errors[0], rtol=0, atol=0):
            return DetectionVerdict(window.start_time, False, (), 0.0, 0)
        cl = kmeans(errors[:, None], 2, seed=self.cfg.seed)
        rep = silhouette(errors[:, None], cl)
        sizes = np.bincount(cl.assignments, minlength=2)
        tie = sizes[0] == sizes[1]
        if tie:
            minority = int(np.argmax(cl.centroids[:, 0]))
        else:
            minority = int(np.argmin(sizes))
        # anomalies reconstruct worse: only fire when the minority cluster is
        # the high-error cluster
        high_error = cl.centroids[minority, 0] >= cl.centroids[1 - minority, 0]
        above = self.error_threshold is None or errors.max() > self.error_threshold
        fired = bool(rep.mean >= self.threshold and high_error and above)
        flagged = tuple(
            window.sensor_ids[i] for i in np.where(cl.assignments == minority)[0]
        ) if fired else ()
        return DetectionVerdict(
            window_start=window.start_time,
            fired=fired,
            flagged=flagged,
            mean_silhouette=rep.mean,
            minority_size=int(sizes[minority]),
            tie=bool(tie),
        )
