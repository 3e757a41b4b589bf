"""Two-hidden-layer ReLU MLP trained with MSE on fixed-horizon labels.

Everything is plain numpy: forward pass, backprop, Adam. Weights are stored as
``W[l]`` of shape (fan_out, fan_in) so a batch forward is ``X @ W.T + b``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ._seeding import make_rng
from .dataset import N_FEATURES, Standardizer, fit_standardizer
from .errors import ConfigError, DataError, TrainingError

log = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
DEFAULT_HIDDEN = (32, 16)


@dataclass
class TrainConfig:
    batch_size: int = 512
    epochs: int = 25
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def validate(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")


@dataclass
class MlpModel:
    weights: list
    biases: list
    standardizer: Optional[Standardizer] = None
    meta: dict = field(default_factory=dict)

    @property
    def layers(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[1]

    def forward(self, X) -> np.ndarray:
        """Raw risk score for standardized inputs; accepts one row or a batch."""
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X2 = X[None, :] if single else X
        if X2.ndim != 2 or X2.shape[1] != self.n_inputs:
            raise DataError(f"expected {self.n_inputs} features, got shape {X.shape}")
        out = _forward(self.weights, self.biases, X2)[0][:, 0]
        return out[0] if single else out

    def score(self, X_raw) -> np.ndarray:
        """Standardize raw features with the stored statistics, then forward."""
        if self.standardizer is None:
            raise DataError("model has no standardizer; call forward() on standardized input")
        return self.forward(self.standardizer.apply(X_raw))

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self) -> "MlpModel":
        return MlpModel([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.standardizer, dict(self.meta))


def init_model(seed: int, h1: int = DEFAULT_HIDDEN[0], h2: int = DEFAULT_HIDDEN[1], n_inputs: int = N_FEATURES) -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    if min(h1, h2, n_inputs) < 1:
        raise ConfigError("layer sizes must be >= 1")
    rng = make_rng(seed, "init")
    sizes = [n_inputs, h1, h2, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights, biases)


def _forward(weights, biases, X):
    acts = [X]
    pre = []
    a = X
    last = len(weights) - 1
    for i, (W, b) in enumerate(zip(weights, biases)):
        z = a @ W.T + b
        pre.append(z)
        a = z if i == last else np.maximum(z, 0.0)
        acts.append(a)
    return a, acts, pre


def loss_and_grads(weights, biases, X, y):
    """MSE loss and its gradients w.r.t. every weight and bias."""
    out, acts, pre = _forward(weights, biases, X)
    n = X.shape[0]
    err = out[:, 0] - y
    loss = float(np.mean(err**2))
    delta = (2.0 / n) * err[:, None]
    gW = [None] * len(weights)
    gb = [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        gW[i] = delta.T @ acts[i]
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ weights[i]) * (pre[i - 1] > 0)
    return loss, gW, gb


def mse(model: MlpModel, X, y) -> float:
    return float(np.mean((model.forward(X) - np.asarray(y, dtype=np.float64)) ** 2))


def train(model: MlpModel, X, y, config: TrainConfig) -> tuple[MlpModel, list[float]]:
    """Minibatch Adam on MSE. X must already be standardized.

    Returns a new model and the per-epoch training MSE (evaluated on the full
    training set after each epoch).
    """
    config.validate()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != len(y) or X.shape[0] == 0:
        raise DataError(f"X {X.shape} and y {y.shape} are not aligned")
    model = model.copy()
    params = model.params()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    rng = make_rng(config.seed, "batches")
    b1, b2 = config.beta1, config.beta2
    step = 0
    history = []
    n = X.shape[0]
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, gW, gb = loss_and_grads(model.weights, model.biases, X[idx], y[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}", epoch=epoch)
            step += 1
            grads = [g for pair in zip(gW, gb) for g in pair]
            lr_t = config.learning_rate * np.sqrt(1 - b2**step) / (1 - b1**step)
            for p, g, mi, vi in zip(params, grads, m, v):
                mi *= b1
                mi += (1 - b1) * g
                vi *= b2
                vi += (1 - b2) * g * g
                p -= lr_t * mi / (np.sqrt(vi) + config.eps)
        epoch_loss = mse(model, X, y)
        if not np.isfinite(epoch_loss):
            raise TrainingError(f"non-finite loss at epoch {epoch}", epoch=epoch)
        history.append(epoch_loss)
        log.debug("epoch %d mse %.6f", epoch, epoch_loss)
    return model, history


def fit_risk_model(X_raw, y, horizon: int, config: Optional[TrainConfig] = None, hidden=DEFAULT_HIDDEN):
    """Fit standardizer, initialise and train. Returns (model, loss history)."""
    config = config or TrainConfig()
    stats = fit_standardizer(X_raw)
    model = init_model(config.seed, *hidden, n_inputs=np.asarray(X_raw).shape[1])
    model, history = train(model, stats.apply(X_raw), y, config)
    model.standardizer = stats
    model.meta = {"H": int(horizon), "seed": int(config.seed), "epochs": config.epochs, "batch_size": config.batch_size}
    return model, history


def save_model(model: MlpModel, path) -> Path:
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "layers": model.layers,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "standardizer": model.standardizer.to_dict() if model.standardizer else None,
        "meta": model.meta,
    }
    path = Path(path)
    # repr-precision floats make the round trip exact.
    path.write_text(json.dumps(doc))
    return path


def load_model(path) -> MlpModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed model file ({exc})") from exc
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise DataError(f"{path}: incompatible model version {doc.get('version')!r}, expected {MODEL_FORMAT_VERSION}")
    try:
        weights = [np.asarray(w, dtype=np.float64) for w in doc["weights"]]
        biases = [np.asarray(b, dtype=np.float64) for b in doc["biases"]]
        stats = Standardizer.from_dict(doc["standardizer"]) if doc.get("standardizer") else None
        model = MlpModel(weights, biases, stats, dict(doc.get("meta", {})))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed model file ({exc})") from exc
    if model.layers != list(doc["layers"]):
        raise DataError(f"{path}: layer sizes do not match weight shapes")
    return model
