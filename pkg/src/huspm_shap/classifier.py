"""Binary sequence classifier: embedding -> tanh RNN -> last state -> softmax.

Parameters are plain float64 numpy arrays and gradients are derived by hand
(backpropagation through time), so the whole model can be checked against
finite differences.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .sequences import ALPHABET, WindowedInstance, symbol_matrix

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
DIVERGENCE_FACTOR = 1e3
PARAM_NAMES = ("embedding", "w_input", "w_hidden", "b_hidden", "w_out", "b_out")


class TrainingDivergedError(RuntimeError):
    pass


class SequenceClassifier(Protocol):
    """What the attribution and active-learning code needs from a model."""

    window_length: int

    def predict_proba(self, symbols: np.ndarray) -> np.ndarray:
        """(n, W) int symbols -> (n, 2) class probabilities."""


@dataclass(frozen=True)
class ArchitectureConfig:
    embedding_dim: int = 8
    hidden_dim: int = 16
    window_length: int = 5

    def __post_init__(self):
        for name in ("embedding_dim", "hidden_dim", "window_length"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 32
    learning_rate: float = 0.3
    momentum: float = 0.0
    seed: int = 0
    class_weighting: float | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")


@dataclass
class RNNClassifier:
    arch: ArchitectureConfig
    params: dict[str, np.ndarray]
    seed: int = 0

    @property
    def window_length(self) -> int:
        return self.arch.window_length

    @property
    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self) -> "RNNClassifier":
        return RNNClassifier(self.arch, {k: v.copy() for k, v in self.params.items()}, self.seed)

    def _check_input(self, symbols) -> np.ndarray:
        x = np.asarray(symbols, dtype=np.int64)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != self.window_length:
            raise ValueError(f"model expects sequences of length {self.window_length}, got {x.shape[1]}")
        if x.size and (x.min() < 1 or x.max() > len(ALPHABET)):
            raise ValueError("symbols must lie in the alphabet")
        return x

    def _forward(self, x: np.ndarray, with_logits: bool = False):
        p = self.params
        n, W = x.shape
        emb = p["embedding"][x - 1]                      # (n, W, E)
        hs = np.zeros((W + 1, n, self.arch.hidden_dim))
        for t in range(W):
            hs[t + 1] = np.tanh(emb[:, t] @ p["w_input"] + hs[t] @ p["w_hidden"] + p["b_hidden"])
        logits = hs[W] @ p["w_out"] + p["b_out"]
        if with_logits:
            return emb, hs, _softmax(logits), logits
        return emb, hs, _softmax(logits)

    def predict_proba(self, symbols) -> np.ndarray:
        x = self._check_input(symbols)
        return self._forward(x)[2]

    def forward(self, instance: WindowedInstance | Sequence[int]) -> np.ndarray:
        """Probability vector (p0, p1) for a single instance."""
        symbols = instance.symbols if isinstance(instance, WindowedInstance) else instance
        return self.predict_proba(np.asarray(symbols)[None, :])[0]

    def loss_and_grad(self, x: np.ndarray, y: np.ndarray, weights: np.ndarray | None = None):
        """Weighted mean cross-entropy and its gradient w.r.t. every parameter."""
        x = self._check_input(x)
        y = np.asarray(y, dtype=np.int64)
        n, W = x.shape
        w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
        norm = w.sum()
        p = self.params
        emb, hs, probs, logits = self._forward(x, with_logits=True)
        z = logits - logits.max(axis=1, keepdims=True)
        log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        loss = float(-(w * log_probs[np.arange(n), y]).sum() / norm)

        d_logits = probs.copy()
        d_logits[np.arange(n), y] -= 1.0
        d_logits *= (w / norm)[:, None]
        g = {k: np.zeros_like(v) for k, v in p.items()}
        g["w_out"] = hs[W].T @ d_logits
        g["b_out"] = d_logits.sum(axis=0)
        d_h = d_logits @ p["w_out"].T
        d_emb = np.zeros_like(emb)
        for t in range(W - 1, -1, -1):
            d_pre = d_h * (1.0 - hs[t + 1] ** 2)
            g["w_input"] += emb[:, t].T @ d_pre
            g["w_hidden"] += hs[t].T @ d_pre
            g["b_hidden"] += d_pre.sum(axis=0)
            d_emb[:, t] = d_pre @ p["w_input"].T
            d_h = d_pre @ p["w_hidden"].T
        np.add.at(g["embedding"], x - 1, d_emb)
        return loss, g

    # -- checkpoints -------------------------------------------------------
    def to_json(self) -> str:
        doc = {
            "format": "huspm_shap.rnn",
            "version": CHECKPOINT_VERSION,
            "arch": asdict(self.arch),
            "seed": self.seed,
            "params": {k: {"shape": list(self.params[k].shape), "values": self.params[k].ravel().tolist()}
                       for k in PARAM_NAMES},
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "RNNClassifier":
        doc = json.loads(text)
        if doc.get("format") != "huspm_shap.rnn" or doc.get("version") != CHECKPOINT_VERSION:
            raise ValueError("not a recognised model checkpoint")
        params = {k: np.array(v["values"], dtype=np.float64).reshape(v["shape"]) for k, v in doc["params"].items()}
        return cls(ArchitectureConfig(**doc["arch"]), params, doc.get("seed", 0))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "RNNClassifier":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def initialize(arch: ArchitectureConfig, seed: int) -> RNNClassifier:
    """Scaled-uniform initialization, fully determined by ``seed``."""
    rng = np.random.default_rng(seed)
    E, H = arch.embedding_dim, arch.hidden_dim

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    params = {
        "embedding": rng.uniform(-1.0, 1.0, size=(len(ALPHABET), E)),
        "w_input": uniform((E, H), E),
        "w_hidden": uniform((H, H), H),
        "b_hidden": np.zeros(H),
        "w_out": uniform((H, 2), H),
        "b_out": np.zeros(2),
    }
    return RNNClassifier(arch, params, seed)


def class_weights(y: np.ndarray, exponent: float | None) -> np.ndarray:
    """Per-instance loss weights ``(n / (2 n_c)) ** exponent``; all ones when disabled."""
    if exponent is None:
        return np.ones(len(y))
    counts = np.bincount(y, minlength=2).astype(float)
    per_class = np.where(counts > 0, (len(y) / (2.0 * np.maximum(counts, 1))) ** exponent, 0.0)
    return per_class[y]


def train(model: RNNClassifier, instances: Sequence[WindowedInstance] | tuple[np.ndarray, np.ndarray],
          cfg: TrainConfig) -> tuple[RNNClassifier, list[float]]:
    """Mini-batch gradient descent (optional heavy-ball momentum) on mean cross-entropy.

    Returns a new model and the full-data loss before training and after
    every epoch. The input model is left untouched.
    """
    if isinstance(instances, tuple):
        x, y = (np.asarray(a) for a in instances)
    else:
        x = symbol_matrix(instances)
        y = np.array([inst.label for inst in instances], dtype=np.int64)
    if len(y) == 0:
        raise ValueError("cannot train on an empty set")
    if len(np.unique(y)) < 2 and cfg.class_weighting is None:
        raise ValueError("training set holds a single class; enable class_weighting to train anyway")
    model = model.copy()
    w = class_weights(y, cfg.class_weighting)
    rng = np.random.default_rng(cfg.seed)
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}

    loss, _ = model.loss_and_grad(x, y, w)
    history = [loss]
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch_loss, grads = model.loss_and_grad(x[idx], y[idx], w[idx])
            if not np.isfinite(batch_loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}; learning rate {cfg.learning_rate} is likely too high")
            for k, g in grads.items():
                velocity[k] = cfg.momentum * velocity[k] - cfg.learning_rate * g
                model.params[k] += velocity[k]
        loss, _ = model.loss_and_grad(x, y, w)
        # Saturating tanh keeps the loss finite long after the run has blown up.
        if not np.isfinite(loss) or loss > DIVERGENCE_FACTOR * max(history[0], 1.0):
            raise TrainingDivergedError(
                f"loss diverged to {loss:.3g} at epoch {epoch}; learning rate {cfg.learning_rate} is likely too high")
        history.append(loss)
    log.debug("trained %d epochs on %d instances, loss %.4f -> %.4f", cfg.epochs, len(y), history[0], history[-1])
    return model, history


@dataclass
class GradientCheck:
    max_relative_error: float
    max_absolute_error: float
    worst_parameter: str
    checked: int


def gradient_check(model: RNNClassifier, symbols, label: int, eps: float = 1e-5,
                   floor: float = 1e-7) -> GradientCheck:
    """Compare analytic gradients with central finite differences, entry by entry.

    Entries where both gradients are below ``floor`` in magnitude are scored
    by their absolute difference instead of the relative one.
    """
    if not eps > 0:
        raise ValueError("finite-difference step must be > 0")
    x = model._check_input(symbols)
    y = np.array([label] * len(x), dtype=np.int64)
    _, analytic = model.loss_and_grad(x, y)
    probe = model.copy()
    worst = (0.0, "")
    max_abs = 0.0
    checked = 0
    for name, values in probe.params.items():
        flat = values.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up, _ = probe.loss_and_grad(x, y)
            flat[i] = orig - eps
            down, _ = probe.loss_and_grad(x, y)
            flat[i] = orig
            numeric = (up - down) / (2 * eps)
            a = analytic[name].reshape(-1)[i]
            diff = abs(a - numeric)
            scale = max(abs(a), abs(numeric))
            err = diff if scale < floor else diff / scale
            max_abs = max(max_abs, diff)
            if err > worst[0]:
                worst = (err, f"{name}[{i}]")
            checked += 1
    return GradientCheck(worst[0], max_abs, worst[1], checked)
