"""Feed-forward ReLU classifier with inverted dropout, trained with AdamW.

Everything here is plain numpy in float64.  Weights are stored out x in, so a
layer computes ``a @ W.T + b``.  A dropout mask follows every hidden ReLU.
"""
from __future__ import annotations

import copy
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._validation import check_finite, check_labels, check_positive_int

LOG = logging.getLogger(__name__)

MODES = ("train_with_dropout", "eval_deterministic", "eval_with_dropout")

MODEL_MAGIC = b"MLPW"
MODEL_FORMAT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass
class MlpModel:
    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    dropout_rate: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        self.layer_dims = [int(d) for d in self.layer_dims]
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("need one weight matrix and one bias per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_dims[i + 1], self.layer_dims[i])
            if w.shape != shape or b.shape != (shape[0],):
                raise ValueError(f"layer {i}: expected weight {shape}, got {w.shape}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")

    @property
    def n_features(self) -> int:
        return self.layer_dims[0]

    @property
    def n_classes(self) -> int:
        return self.layer_dims[-1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[np.ndarray]:
        """Weights then biases, in layer order. Arrays are live references."""
        return [*self.weights, *self.biases]

    def copy(self) -> "MlpModel":
        return copy.deepcopy(self)

    def to_bytes(self) -> bytes:
        return model_to_bytes(self)


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 256
    learning_rate: float = 5e-4
    weight_decay: float = 0.01
    seed: int = 0
    dropout_rate: float = 0.0

    def __post_init__(self):
        check_positive_int(self.epochs, "epochs")
        check_positive_int(self.batch_size, "batch_size")
        if not self.learning_rate >= 0 or not math.isfinite(self.learning_rate):
            raise ValueError("learning_rate must be a finite non-negative number")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")


@dataclass
class AdamWState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, params, **kwargs) -> "AdamWState":
        if isinstance(params, MlpModel):
            params = params.parameters()
        return cls(
            first_moment=[np.zeros_like(p) for p in params],
            second_moment=[np.zeros_like(p) for p in params],
            **kwargs,
        )


def init_model(layer_dims, dropout_rate=0.0, seed=0) -> MlpModel:
    """He-uniform weights (bound sqrt(6 / fan_in)), zero biases."""
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2:
        raise ValueError("need at least an input and an output dimension")
    if any(d < 1 for d in dims):
        raise ValueError(f"layer dims must be positive, got {dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(dims, weights, biases, float(dropout_rate), seed)


def _as_rng(rng_seed):
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    return np.random.default_rng(rng_seed)


def dropout_masks(model: MlpModel, n_rows: int, rng_seed) -> list[np.ndarray]:
    """Inverted-dropout masks for each hidden layer, shape (n_rows, width)."""
    p = model.dropout_rate
    rng = _as_rng(rng_seed)
    keep = 1.0 - p
    return [
        (rng.random((n_rows, width)) >= p) / keep
        for width in model.layer_dims[1:-1]
    ]


def forward(model: MlpModel, x, mode="eval_deterministic", rng_seed=None, masks=None):
    """Run the network on one feature vector or a batch of rows.

    Returns ``(logits, cache)``; the cache holds what :func:`backward` needs.
    Dropout masks are drawn from ``rng_seed`` (an int or a Generator) unless
    ``masks`` is given explicitly.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    x = check_finite(x, "x")
    single = x.ndim == 1
    a = np.atleast_2d(x)
    if a.ndim != 2 or a.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got shape {x.shape}")

    use_dropout = mode != "eval_deterministic" and model.dropout_rate > 0
    if use_dropout and masks is None:
        masks = dropout_masks(model, len(a), rng_seed)
    if not use_dropout:
        masks = None

    inputs, pre = [], []
    last = model.n_layers - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        inputs.append(a)
        z = a @ w.T + b
        pre.append(z)
        if i < last:
            a = np.maximum(z, 0.0)
            if masks is not None:
                a = a * masks[i]
    logits = z[0] if single else z
    return logits, {"inputs": inputs, "pre": pre, "masks": masks, "single": single}


def backward(model: MlpModel, cache, grad_logits):
    """Backpropagate ``grad_logits`` through a cached forward pass.

    Returns gradients in :meth:`MlpModel.parameters` order.
    """
    g = np.atleast_2d(np.asarray(grad_logits, dtype=np.float64))
    masks = cache["masks"]
    grad_w = [None] * model.n_layers
    grad_b = [None] * model.n_layers
    for i in range(model.n_layers - 1, -1, -1):
        grad_w[i] = g.T @ cache["inputs"][i]
        grad_b[i] = g.sum(axis=0)
        if i > 0:
            g = g @ model.weights[i]
            if masks is not None:
                g = g * masks[i - 1]
            g = g * (cache["pre"][i - 1] > 0)
    return [*grad_w, *grad_b]


def log_softmax(logits):
    z = check_finite(logits, "logits")
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits):
    z = check_finite(logits, "logits")
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_and_grad(logits, label):
    """Cross-entropy of softmax(logits) against integer label(s).

    For a batch the loss is the mean and the gradient is scaled to match.
    """
    z = check_finite(logits, "logits")
    single = z.ndim == 1
    z2 = np.atleast_2d(z)
    labels = check_labels(np.atleast_1d(label), z2.shape[1])
    if labels.shape != (len(z2),):
        raise ValueError("need exactly one label per logit row")
    logp = log_softmax(z2)
    rows = np.arange(len(z2))
    loss = -logp[rows, labels].mean()
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    grad /= len(z2)
    return float(loss), (grad[0] if single else grad)


def adamw_step(model: MlpModel, state: AdamWState, grads, lr_t: float, weight_decay: float):
    """One AdamW update with decoupled weight decay. Updates in place and returns both."""
    params = model.parameters()
    if len(grads) != len(params):
        raise ValueError(f"expected {len(params)} gradient arrays, got {len(grads)}")
    if lr_t < 0 or not math.isfinite(lr_t):
        raise ValueError("lr_t must be finite and non-negative")
    for p, g in zip(params, grads):
        if np.shape(g) != p.shape:
            raise ValueError(f"gradient shape {np.shape(g)} does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite gradient")

    state.step_count += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step_count
    c2 = 1.0 - b2 ** state.step_count
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = (m / c1) / (np.sqrt(v / c2) + state.epsilon)
        p -= lr_t * (update + weight_decay * p)
    return model, state


def cosine_lr(epoch: int, total_epochs: int, base_lr: float) -> float:
    """Per-epoch cosine annealing without warmup or restarts."""
    if not 0 <= epoch < total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs})")
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * epoch / total_epochs))


def train(model: MlpModel, X, y, cfg: TrainConfig):
    """Minibatch AdamW training on single frames.

    Shuffling and dropout masks come from one generator seeded with
    ``cfg.seed``. The input model is not modified.

    Returns
    -------
    model : MlpModel
        Trained copy.
    losses : list of float
        Mean training loss per epoch.
    """
    X = check_finite(X, "X")
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("training set must be a non-empty 2-D array")
    y = check_labels(y, model.n_classes, "y")
    if len(y) != len(X):
        raise ValueError("X and y have different lengths")

    model = model.copy()
    model.dropout_rate = cfg.dropout_rate
    state = AdamWState.zeros_like(model)
    rng = np.random.default_rng(cfg.seed)
    mode = "train_with_dropout" if cfg.dropout_rate > 0 else "eval_deterministic"
    n = len(X)
    losses = []
    for epoch in range(cfg.epochs):
        lr = cosine_lr(epoch, cfg.epochs, cfg.learning_rate)
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            logits, cache = forward(model, X[idx], mode, rng_seed=rng)
            loss, grad = cross_entropy_and_grad(logits, y[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch starting {start} (lr={lr:g})"
                )
            total += loss * len(idx)
            adamw_step(model, state, backward(model, cache, grad), lr, cfg.weight_decay)
        losses.append(total / n)
        LOG.debug("seed %s epoch %d lr %.3g loss %.4f", cfg.seed, epoch, lr, losses[-1])
    return model, losses


def predict_logits(model: MlpModel, X) -> np.ndarray:
    return forward(model, X, "eval_deterministic")[0]


# -- weight files -----------------------------------------------------------

def model_to_bytes(model: MlpModel) -> bytes:
    parts = [MODEL_MAGIC, struct.pack("<II", MODEL_FORMAT_VERSION, model.n_layers)]
    for i in range(model.n_layers):
        parts.append(struct.pack("<II", model.layer_dims[i], model.layer_dims[i + 1]))
    parts.append(struct.pack("<d", model.dropout_rate))
    for w in model.weights:
        parts.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
    for b in model.biases:
        parts.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    return b"".join(parts)


def model_from_bytes(data: bytes) -> MlpModel:
    if data[:4] != MODEL_MAGIC:
        raise ValueError("bad magic: not an MLPW weight file")
    try:
        version, n_layers = struct.unpack_from("<II", data, 4)
        if version != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported MLPW version {version}")
        offset = 12
        shapes = []
        for _ in range(n_layers):
            shapes.append(struct.unpack_from("<II", data, offset))
            offset += 8
        (dropout_rate,) = struct.unpack_from("<d", data, offset)
        offset += 8
    except struct.error as exc:
        raise ValueError("truncated MLPW header") from exc
    for (_, fan_out), (fan_in, _) in zip(shapes[:-1], shapes[1:]):
        if fan_out != fan_in:
            raise ValueError("inconsistent layer dimensions in MLPW header")

    def take(count):
        nonlocal offset
        end = offset + 4 * count
        if end > len(data):
            raise ValueError("truncated MLPW payload")
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset).astype(np.float64)
        offset = end
        return arr

    weights = [take(i * o).reshape(o, i) for i, o in shapes]
    biases = [take(o) for _, o in shapes]
    if offset != len(data):
        raise ValueError("trailing bytes after MLPW payload")
    dims = [shapes[0][0]] + [o for _, o in shapes]
    model = MlpModel(dims, weights, biases, dropout_rate, None)
    if not all(np.all(np.isfinite(p)) for p in model.parameters()):
        raise ValueError("non-finite parameter in MLPW file")
    return model


def save_model(model: MlpModel, path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path) -> MlpModel:
    return model_from_bytes(Path(path).read_bytes())
