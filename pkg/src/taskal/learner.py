"""Two-stage toy learners: a tanh encoder producing the latent ``z`` and a
task head (softmax classifier or linear dense regressor).

Parameters are kept in a fixed order, ``W1, b1, W2, b2``:

* ``W1`` (input_dim, h), ``b1`` (h,) for the encoder ``z = tanh(x W1 + b1)``
* ``W2`` (h, out), ``b2`` (out,) for the head ``z W2 + b2``

The same order is used by the ``ALMD`` snapshot format.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import FormatError, TrainingError
from .pool import EmbeddingMatrix

TASKS = ("classifier", "dense_regressor")
PARAM_NAMES = ("W1", "b1", "W2", "b2")

ALMD_MAGIC = b"ALMD"
ALMD_VERSION = 1
_ALMD_HEADER = struct.Struct("<4sIIQQQ")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.05
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise TrainingError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise TrainingError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise TrainingError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True, eq=False)
class LearnerModel:
    task: str
    params: dict

    @property
    def input_dim(self) -> int:
        return self.params["W1"].shape[0]

    @property
    def h(self) -> int:
        return self.params["W1"].shape[1]

    @property
    def output_dim(self) -> int:
        return self.params["W2"].shape[1]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in PARAM_NAMES])

    def with_flat(self, vec) -> "LearnerModel":
        vec = np.asarray(vec, dtype=np.float64)
        params, k = {}, 0
        for name in PARAM_NAMES:
            shape = self.params[name].shape
            size = int(np.prod(shape))
            params[name] = vec[k:k + size].reshape(shape).copy()
            k += size
        return replace(self, params=params)


def init_model(task: str, input_dim: int, h: int, output_dim: int, seed: int = 0) -> LearnerModel:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases start at zero."""
    if task not in TASKS:
        raise TrainingError(f"unknown task {task!r}")
    if min(input_dim, h, output_dim) < 1:
        raise TrainingError(f"dimensions must be >= 1, got ({input_dim}, {h}, {output_dim})")
    if task == "classifier" and output_dim < 2:
        raise TrainingError("classifier needs at least 2 classes")
    rng = np.random.default_rng(seed)
    lim1, lim2 = 1.0 / np.sqrt(input_dim), 1.0 / np.sqrt(h)
    params = {
        "W1": rng.uniform(-lim1, lim1, size=(input_dim, h)),
        "b1": np.zeros(h),
        "W2": rng.uniform(-lim2, lim2, size=(h, output_dim)),
        "b2": np.zeros(output_dim),
    }
    return LearnerModel(task, params)


def _as_array(X):
    return X.data if isinstance(X, EmbeddingMatrix) else np.asarray(X, dtype=np.float64)


def _check_input(model, X):
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise TrainingError(f"expected inputs with {model.input_dim} columns, got shape {X.shape}")


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _encode(params, X):
    return np.tanh(X @ params["W1"] + params["b1"])


def encode(model: LearnerModel, X):
    """Encoder activations; returns an EmbeddingMatrix when given one."""
    arr = _as_array(X)
    _check_input(model, arr)
    Z = _encode(model.params, arr)
    if isinstance(X, EmbeddingMatrix):
        return EmbeddingMatrix(Z, X.ids)
    return Z


def head(model: LearnerModel, Z) -> np.ndarray:
    out = np.asarray(Z) @ model.params["W2"] + model.params["b2"]
    return _softmax(out) if model.task == "classifier" else out


def predict(model: LearnerModel, X) -> np.ndarray:
    """Class probabilities (classifier) or regression outputs."""
    arr = _as_array(X)
    _check_input(model, arr)
    return head(model, _encode(model.params, arr))


def _check_targets(model, X, y):
    if model.task == "classifier":
        y = np.asarray(y, dtype=np.int64).reshape(-1)
        if len(y) != len(X):
            raise TrainingError(f"{len(X)} inputs but {len(y)} labels")
        if len(y) and (y.min() < 0 or y.max() >= model.output_dim):
            raise TrainingError(f"class labels must lie in [0, {model.output_dim})")
    else:
        y = np.asarray(y, dtype=np.float64)
        if y.ndim == 1:
            y = y.reshape(-1, 1)
        if y.shape != (len(X), model.output_dim):
            raise TrainingError(f"targets must have shape {(len(X), model.output_dim)}, got {y.shape}")
    return y


def loss_and_grad(model: LearnerModel, X, y) -> tuple[float, dict]:
    """Mean task loss over the batch and its analytic gradient.

    Cross-entropy for the classifier; for the regressor the mean of squared
    errors over every output entry.
    """
    X = _as_array(X)
    _check_input(model, X)
    y = _check_targets(model, X, y)
    if len(X) == 0:
        raise TrainingError("empty batch")
    return _loss_and_grad(model.task, model.params, X, y)


def _loss_and_grad(task, p, X, y):
    n = len(X)
    Z = _encode(p, X)
    out = Z @ p["W2"] + p["b2"]
    if task == "classifier":
        probs = _softmax(out)
        picked = probs[np.arange(n), y]
        loss = float(-np.mean(np.log(np.maximum(picked, 1e-300))))
        d_out = probs.copy()
        d_out[np.arange(n), y] -= 1.0
        d_out /= n
    else:
        diff = out - y
        loss = float(np.mean(diff ** 2))
        d_out = 2.0 * diff / diff.size
    d_z = d_out @ p["W2"].T
    d_pre = d_z * (1.0 - Z ** 2)
    grad = {
        "W1": X.T @ d_pre,
        "b1": d_pre.sum(axis=0),
        "W2": Z.T @ d_out,
        "b2": d_out.sum(axis=0),
    }
    return loss, grad


def train(model: LearnerModel, X, y, cfg: TrainConfig) -> LearnerModel:
    """Mini-batch gradient descent for ``cfg.epochs`` passes over (X, y).

    Batches are reshuffled each epoch from ``cfg.seed``; the input model is
    left untouched.
    """
    X = _as_array(X)
    _check_input(model, X)
    y = _check_targets(model, X, y)
    if len(X) == 0:
        raise TrainingError("no training examples")
    rng = np.random.default_rng(cfg.seed)
    params = {k: v.copy() for k, v in model.params.items()}
    n = len(X)
    # overflow surfaces as a non-finite loss, reported below
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.epochs):
            order = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                loss, grad = _loss_and_grad(model.task, params, X[idx], y[idx])
                if not np.isfinite(loss):
                    raise TrainingError(f"non-finite loss at epoch {epoch}")
                for k in PARAM_NAMES:
                    params[k] -= cfg.learning_rate * grad[k]
            if not all(np.all(np.isfinite(v)) for v in params.values()):
                raise TrainingError(f"non-finite parameters at epoch {epoch}")
    return replace(model, params=params)


def full_loss(model: LearnerModel, X, y) -> float:
    return loss_and_grad(model, X, y)[0]


def save_model(model: LearnerModel, path) -> None:
    """``ALMD`` magic, uint32 version, uint32 task tag (0 classifier, 1 dense),
    uint64 input_dim, h, output_dim, then float64 parameters W1, b1, W2, b2
    row-major, all little-endian."""
    with open(path, "wb") as fh:
        fh.write(_ALMD_HEADER.pack(ALMD_MAGIC, ALMD_VERSION, TASKS.index(model.task),
                                   model.input_dim, model.h, model.output_dim))
        fh.write(model.flat().astype("<f8").tobytes())


def load_model(path) -> LearnerModel:
    raw = Path(path).read_bytes()
    if len(raw) < _ALMD_HEADER.size:
        raise FormatError("truncated model header")
    magic, version, tag, input_dim, h, output_dim = _ALMD_HEADER.unpack_from(raw)
    if magic != ALMD_MAGIC:
        raise FormatError("bad magic, expected ALMD")
    if version != ALMD_VERSION:
        raise FormatError(f"unsupported model version {version}")
    if tag >= len(TASKS):
        raise FormatError(f"unknown task tag {tag}")
    size = input_dim * h + h + h * output_dim + output_dim
    body = raw[_ALMD_HEADER.size:]
    if len(body) != 8 * size:
        raise FormatError(f"expected {size} parameters, found {len(body) / 8:g}")
    skeleton = LearnerModel(TASKS[tag], {
        "W1": np.empty((input_dim, h)), "b1": np.empty(h),
        "W2": np.empty((h, output_dim)), "b2": np.empty(output_dim),
    })
    return skeleton.with_flat(np.frombuffer(body, dtype="<f8"))
