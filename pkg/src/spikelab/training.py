"""Optimizer, training loop, evaluation, and the spike-count MLP baseline.

Training is deterministic for a fixed config: batch order comes from the
config seed, parameter init from the model seed, and all reductions are
plain numpy sums. The loop keeps the parameter state of the epoch with
the best test accuracy and restores it before returning.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, asdict

import numpy as np

from .core import SpikeDataset, TrainingError, bin_dataset, count_matrix
from .snn import SnnModel, _decode_array, _encode_array, _softmax, backprop_through_time, load_checkpoint


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    surrogate_alpha: float = 100.0

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0 or self.lr <= 0 or self.surrogate_alpha <= 0:
            raise ValueError("epochs, batch_size, lr, and surrogate_alpha must be positive")


class Adam:
    """Adaptive-moment SGD updating parameter arrays in place."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads) -> None:
        self.t += 1
        b1t = 1.0 - self.b1 ** self.t
        b2t = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def _as_grid_arrays(data, dt_ms: float):
    if isinstance(data, SpikeDataset):
        return bin_dataset(data, dt_ms)
    X, y = data
    return np.asarray(X), np.asarray(y, dtype=np.int64)


def evaluate(model: SnnModel, data, batch_size: int = 256):
    """Accuracy and per-class confusion matrix (rows true, cols predicted)."""
    X, y = _as_grid_arrays(data, model.dt_ms)
    C = model.num_classes
    confusion = np.zeros((C, C), dtype=np.int64)
    for lo in range(0, len(X), batch_size):
        xb = X[lo:lo + batch_size]
        logits = model.forward(xb)
        pred = np.argmax(logits, axis=1)
        for t, p in zip(y[lo:lo + batch_size], pred):
            confusion[t, p] += 1
    model.clear_caches()
    accuracy = float(np.trace(confusion) / max(1, confusion.sum()))
    return accuracy, confusion


def train(model: SnnModel, train_data, test_data, config: TrainConfig):
    """Mini-batch surrogate-gradient training; returns per-epoch metrics.

    The model is left holding the parameters of its best test epoch.
    Raises TrainingError with the epoch index if the loss goes non-finite.
    """
    Xtr, ytr = _as_grid_arrays(train_data, model.dt_ms)
    Xte, yte = _as_grid_arrays(test_data, model.dt_ms)
    model.surrogate_alpha = config.surrogate_alpha
    opt = Adam(model.parameters(), lr=config.lr, beta1=config.beta1,
               beta2=config.beta2, eps=config.adam_eps)
    rng = np.random.default_rng(config.seed)
    metrics = []
    best_acc, best_state = -1.0, None
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(len(Xtr))
        losses = []
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo:lo + config.batch_size]
            try:
                loss, grads = backprop_through_time(model, Xtr[idx], ytr[idx])
            except TrainingError as e:
                raise TrainingError(f"epoch {epoch}: {e}") from e
            opt.step(grads)
            losses.append(loss)
        model.clear_caches()
        acc, _ = evaluate(model, (Xte, yte))
        if acc > best_acc:
            best_acc, best_state = acc, model.param_state()
        metrics.append({
            "epoch": epoch,
            "train_loss": float(np.mean(losses)),
            "test_accuracy": acc,
            "wall_s": time.perf_counter() - t0,
        })
    if best_state is not None:
        model.set_param_state(best_state)
    return metrics


# --------------------------------------------------------------------------
# spike-count MLP baseline
# --------------------------------------------------------------------------

class CountMlp:
    """One-hidden-layer rectifier network over per-neuron spike counts.

    Counts are standardized with training-set statistics; a feature with
    zero variance keeps unit scale (and therefore carries no information,
    which is the whole point of the count-normalized datasets).
    """

    def __init__(self, n_inputs: int, n_classes: int, hidden: int = 128, seed: int = 0):
        rng = np.random.default_rng(seed)
        k1, k2 = n_inputs ** -0.5, hidden ** -0.5
        self.W1 = rng.uniform(-k1, k1, size=(hidden, n_inputs))
        self.b1 = np.zeros(hidden)
        self.W2 = rng.uniform(-k2, k2, size=(n_classes, hidden))
        self.b2 = np.zeros(n_classes)
        self.mean = np.zeros(n_inputs)
        self.scale = np.ones(n_inputs)

    def fit_scaler(self, counts: np.ndarray) -> None:
        self.mean = counts.mean(axis=0)
        std = counts.std(axis=0)
        self.scale = np.where(std > 1e-9, std, 1.0)

    def logits(self, counts: np.ndarray) -> np.ndarray:
        z = (counts - self.mean) / self.scale
        h = np.maximum(z @ self.W1.T + self.b1, 0.0)
        return h @ self.W2.T + self.b2

    def loss_and_grads(self, counts: np.ndarray, labels: np.ndarray):
        B = counts.shape[0]
        z = (counts - self.mean) / self.scale
        pre = z @ self.W1.T + self.b1
        h = np.maximum(pre, 0.0)
        logits = h @ self.W2.T + self.b2
        p = _softmax(logits)
        nll = -np.log(np.maximum(p[np.arange(B), labels], 1e-300))
        g = p.copy()
        g[np.arange(B), labels] -= 1.0
        g /= B
        gW2 = g.T @ h
        gb2 = g.sum(axis=0)
        gh = (g @ self.W2) * (pre > 0)
        gW1 = gh.T @ z
        gb1 = gh.sum(axis=0)
        return float(nll.mean()), [gW1, gb1, gW2, gb2]

    def parameters(self) -> list:
        return [self.W1, self.b1, self.W2, self.b2]

    def predict(self, counts: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(counts), axis=1)

    def to_dict(self) -> dict:
        return {
            "kind": "mlp",
            "n_inputs": self.W1.shape[1],
            "n_classes": self.W2.shape[0],
            "hidden": self.W1.shape[0],
            "arrays": {name: _encode_array(getattr(self, name))
                       for name in ("W1", "b1", "W2", "b2", "mean", "scale")},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CountMlp":
        mlp = cls(d["n_inputs"], d["n_classes"], hidden=d["hidden"])
        for name, enc in d["arrays"].items():
            setattr(mlp, name, _decode_array(enc))
        return mlp


def dataset_counts(dataset: SpikeDataset):
    return count_matrix(dataset).astype(np.float64), dataset.labels()


def train_count_mlp(train_data, test_data, config: TrainConfig, n_classes: int,
                    hidden: int = 128):
    """Train the count baseline; returns (best test accuracy, fitted mlp)."""
    Ctr, ytr = train_data
    Cte, yte = test_data
    mlp = CountMlp(Ctr.shape[1], n_classes, hidden=hidden, seed=config.seed)
    mlp.fit_scaler(Ctr)
    opt = Adam(mlp.parameters(), lr=config.lr, beta1=config.beta1,
               beta2=config.beta2, eps=config.adam_eps)
    rng = np.random.default_rng(config.seed)
    best_acc, best_state = -1.0, None
    for epoch in range(config.epochs):
        order = rng.permutation(len(Ctr))
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo:lo + config.batch_size]
            loss, grads = mlp.loss_and_grads(Ctr[idx], ytr[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"count baseline diverged at epoch {epoch}")
            opt.step(grads)
        acc = float(np.mean(mlp.predict(Cte) == yte))
        if acc > best_acc:
            best_acc = acc
            best_state = [p.copy() for p in mlp.parameters()]
    if best_state is not None:
        for p, v in zip(mlp.parameters(), best_state):
            p[...] = v
    return best_acc, mlp


def mlp_count_baseline(train_ds: SpikeDataset, test_ds: SpikeDataset,
                       config: TrainConfig, hidden: int = 128):
    """Accuracy of a rate-only classifier: per-neuron spike counts in, softmax out."""
    acc, _ = train_count_mlp(dataset_counts(train_ds), dataset_counts(test_ds),
                             config, train_ds.num_classes, hidden=hidden)
    return acc


def save_mlp_checkpoint(mlp: CountMlp, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(mlp.to_dict(), fh)


def load_any_checkpoint(path):
    """Load either an SNN or a count-MLP checkpoint, dispatching on its kind."""
    with open(path, "r", encoding="utf-8") as fh:
        d = json.load(fh)
    if d.get("kind") == "mlp":
        return CountMlp.from_dict(d)
    if d.get("kind") == "snn":
        return load_checkpoint(path)
    raise ValueError(f"unknown checkpoint kind {d.get('kind')!r}")


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
