"""The pseudo-sign classifier: a small MLP trained from scratch.

Architecture: 32 inputs, two 1024-wide hidden layers with leaky ReLU, and
either a 128-way softmax head (one class per anchor-normalized sign
configuration) or the 7-way sigmoid multi-label variant used for ablation.
Forward, backward and the Adam update are written directly against numpy so
gradients are exact and checkable against finite differences.
"""

from __future__ import annotations

import time
import struct
import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dataset import CellDataset, GridCellSample, NoiseSpec, augment_batch, class_weights, split_train_val
from .signconfig import CONVENTION_TAG, NUM_CONFIGS, from_multilabel_batch

HEADS = ("softmax-128", "sigmoid-7")
DEFAULT_DIMS = (32, 1024, 1024, 128)
MULTILABEL_DIMS = (32, 1024, 1024, 7)


@dataclass
class MlpModel:
    dims: tuple[int, ...]
    head: str
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    negative_slope: float = 0.01

    def __post_init__(self) -> None:
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        expected_out = NUM_CONFIGS if self.head == "softmax-128" else 7
        if self.dims[-1] != expected_out:
            raise ValueError(f"head {self.head} needs {expected_out} outputs, dims={self.dims}")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.dims[k], self.dims[k + 1]) or b.shape != (self.dims[k + 1],):
                raise ValueError("parameter shapes do not match dims")

    @property
    def dtype(self):
        return self.weights[0].dtype

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "MlpModel":
        return MlpModel(
            self.dims,
            self.head,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.negative_slope,
        )


def init_model(
    dims: tuple[int, ...] = DEFAULT_DIMS,
    head: str = "softmax-128",
    seed: int = 0,
    dtype=np.float32,
) -> MlpModel:
    """Glorot-uniform weights, zero biases, deterministic in the seed."""
    if any(d <= 0 for d in dims):
        raise ValueError("layer sizes must be positive")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return MlpModel(tuple(dims), head, weights, biases)


def _leaky(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0, x, slope * x)


def _leaky_grad(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0, x.dtype.type(1), x.dtype.type(slope))


def forward(model: MlpModel, inputs: np.ndarray) -> np.ndarray:
    """Logits for a batch; leaky ReLU after the two hidden layers only."""
    logits, _ = _forward_cached(model, inputs)
    return logits


def _forward_cached(model: MlpModel, inputs: np.ndarray):
    x = np.ascontiguousarray(inputs, dtype=model.dtype)
    if x.ndim != 2 or x.shape[1] != model.dims[0]:
        raise ValueError(f"expected (batch, {model.dims[0]}) inputs, got {x.shape}")
    pre, act = [], [x]
    h = x
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        pre.append(z)
        if k < len(model.weights) - 1:
            h = _leaky(z, model.negative_slope)
            act.append(h)
    return pre[-1], (pre, act)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grads(
    model: MlpModel,
    inputs: np.ndarray,
    labels: np.ndarray,
    weights: Optional[np.ndarray] = None,
):
    """Mean weighted cross-entropy over the batch plus exact parameter grads.

    Softmax head: per-example loss is ``w[label] * CE(softmax(logits), label)``.
    Sigmoid head: the label's 7 bits each contribute a binary cross-entropy,
    averaged over bits and weighted the same way.  Returns
    ``(loss, ([dW...], [db...]))``.
    """
    loss, grads, _ = _loss_grads_predictions(model, inputs, labels, weights)
    return loss, grads


def _loss_grads_predictions(model, inputs, labels, weights=None):
    labels = np.asarray(labels)
    if weights is None:
        weights = np.ones(NUM_CONFIGS)
    weights = np.asarray(weights, dtype=np.float64)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= NUM_CONFIGS:
        raise ValueError("labels must be configuration codes in 0..127")

    logits, (pre, act) = _forward_cached(model, inputs)
    batch = len(labels)
    w_ex = weights[labels.astype(np.int64)].astype(model.dtype)

    if model.head == "softmax-128":
        predictions = logits.argmax(axis=1)
        probs = _softmax(logits)
        rows = np.arange(batch)
        picked = np.maximum(probs[rows, labels], np.finfo(model.dtype).tiny)
        loss = float((w_ex * -np.log(picked.astype(np.float64))).mean())
        dlogits = probs
        dlogits[rows, labels] -= 1
        dlogits *= (w_ex / batch)[:, None]
    else:
        predictions = from_multilabel_batch(logits >= 0.0)
        bits = ((labels[:, None].astype(np.int64) >> np.arange(7)) & 1).astype(model.dtype)
        p = 1.0 / (1.0 + np.exp(-logits))
        eps = np.finfo(model.dtype).tiny
        bce = -(bits * np.log(np.maximum(p, eps)) + (1 - bits) * np.log(np.maximum(1 - p, eps)))
        loss = float((w_ex.astype(np.float64) * bce.astype(np.float64).mean(axis=1)).mean())
        dlogits = (p - bits) * (w_ex / (7 * batch))[:, None]

    dweights: list[np.ndarray] = [None] * len(model.weights)
    dbiases: list[np.ndarray] = [None] * len(model.biases)
    grad = dlogits.astype(model.dtype)
    for k in range(len(model.weights) - 1, -1, -1):
        dweights[k] = act[k].T @ grad
        dbiases[k] = grad.sum(axis=0)
        if k > 0:
            grad = (grad @ model.weights[k].T) * _leaky_grad(pre[k - 1], model.negative_slope)
    return loss, (dweights, dbiases), predictions


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @staticmethod
    def for_model(model: MlpModel) -> "AdamState":
        params = model.parameters()
        return AdamState([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-3
    epochs: int = 10
    batch_size: int = 4096
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    noise: NoiseSpec = NoiseSpec(kind="scale", sigma=1.0, seed=0)
    weight_mode: str = "uniform"
    seed: int = 0
    val_fraction: float = 0.1
    head: str = "softmax-128"

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("learning rate, epochs and batch size must be positive")


def adam_step(model: MlpModel, grads, state: AdamState, config: TrainConfig) -> AdamState:
    """Standard bias-corrected Adam update, applied in place."""
    dws, dbs = grads
    flat_grads = []
    for dw, db in zip(dws, dbs):
        flat_grads.extend((dw, db))
    params = model.parameters()
    if len(flat_grads) != len(params):
        raise ValueError("gradient list does not match parameter list")
    state.step += 1
    t = state.step
    lr = model.dtype.type(config.learning_rate)
    b1 = model.dtype.type(config.beta1)
    b2 = model.dtype.type(config.beta2)
    eps = model.dtype.type(config.eps)
    c1 = model.dtype.type(1.0 - config.beta1**t)
    c2 = model.dtype.type(1.0 - config.beta2**t)
    for p, g, m, v in zip(params, flat_grads, state.m, state.v):
        if g.shape != p.shape:
            raise ValueError("gradient shape mismatch")
        g = g.astype(model.dtype, copy=False)
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


@dataclass
class TrainReport:
    epoch_loss: list[float] = field(default_factory=list)
    epoch_train_accuracy: list[float] = field(default_factory=list)
    epoch_val_accuracy: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    train_examples: int = 0
    val_examples: int = 0

    def to_dict(self) -> dict:
        return {
            "epoch_loss": self.epoch_loss,
            "epoch_train_accuracy": self.epoch_train_accuracy,
            "epoch_val_accuracy": self.epoch_val_accuracy,
            "epoch_seconds": self.epoch_seconds,
            "train_examples": self.train_examples,
            "val_examples": self.val_examples,
        }


def predict_config_batch(model: MlpModel, inputs: np.ndarray, batch_size: int = 16384) -> np.ndarray:
    """Configuration codes for many samples; argmax ties go to the lowest class."""
    inputs = np.asarray(inputs, dtype=np.float32).reshape(-1, model.dims[0])
    out = np.empty(len(inputs), dtype=np.uint8)
    for s in range(0, len(inputs), batch_size):
        logits = forward(model, inputs[s : s + batch_size])
        if model.head == "softmax-128":
            out[s : s + batch_size] = logits.argmax(axis=1)
        else:
            out[s : s + batch_size] = from_multilabel_batch(logits >= 0.0)
    return out


def predict_config(model: MlpModel, sample: GridCellSample) -> int:
    return int(predict_config_batch(model, sample.inputs[None, :])[0])


def _accuracy(model: MlpModel, inputs: np.ndarray, labels: np.ndarray) -> float:
    if len(labels) == 0:
        return float("nan")
    return float((predict_config_batch(model, inputs) == labels).mean())


def train(dataset: CellDataset, config: TrainConfig = TrainConfig()) -> tuple[MlpModel, TrainReport]:
    """Train on a cell dataset with a deterministic hash-based held-out split.

    Noise is drawn fresh per epoch from per-example substreams, so results do
    not depend on shuffling or scheduling; minibatches are index-sorted to
    pin the floating-point reduction order.
    """
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    dims = DEFAULT_DIMS if config.head == "softmax-128" else MULTILABEL_DIMS
    model = init_model(dims, config.head, seed=config.seed)
    state = AdamState.for_model(model)
    weights = class_weights(dataset.labels, config.weight_mode)

    train_idx, val_idx = split_train_val(len(dataset), config.val_fraction)
    report = TrainReport(train_examples=len(train_idx), val_examples=len(val_idx))
    vx, vy = dataset.inputs[val_idx], dataset.labels[val_idx]

    rng = np.random.default_rng(config.seed)
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        perm = rng.permutation(train_idx)
        losses = []
        hits = 0
        for s in range(0, len(perm), config.batch_size):
            batch = np.sort(perm[s : s + config.batch_size])
            x = augment_batch(dataset.inputs[batch], config.noise, epoch, batch)
            y = dataset.labels[batch]
            loss, grads, preds = _loss_grads_predictions(model, x, y, weights)
            adam_step(model, grads, state, config)
            losses.append(loss * len(batch))
            hits += int((preds == y).sum())
        report.epoch_loss.append(float(np.sum(losses) / len(perm)))
        report.epoch_train_accuracy.append(hits / len(perm))
        report.epoch_val_accuracy.append(_accuracy(model, vx, vy))
        report.epoch_seconds.append(time.perf_counter() - t0)
    return model, report


# ---------------------------------------------------------------------------
# model files

_MODEL_MAGIC = b"UDFM"
_MODEL_VERSION = 1
_HEAD_TAGS = {"softmax-128": 0, "sigmoid-7": 1}
_HEAD_NAMES = {v: k for k, v in _HEAD_TAGS.items()}


def save_model(model: MlpModel, path) -> None:
    """UDFM little-endian layout with a trailing CRC32 of everything before it."""
    blob = b"".join(p.astype("<f4").tobytes() for p in model.parameters())
    header = _MODEL_MAGIC + struct.pack(
        "<IIII", _MODEL_VERSION, _HEAD_TAGS[model.head], CONVENTION_TAG, len(model.dims)
    )
    header += struct.pack(f"<{len(model.dims)}I", *model.dims)
    header += struct.pack("<d", model.negative_slope)
    payload = header + blob
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def load_model(path) -> MlpModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MODEL_MAGIC:
        raise ValueError(f"{path}: not a UDFM model file")
    (stored_crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != stored_crc:
        raise ValueError(f"{path}: checksum failure, file corrupted")
    version, head_tag, tag, ndims = struct.unpack_from("<IIII", data, 4)
    if version != _MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {version}")
    if tag != CONVENTION_TAG:
        raise ValueError(f"{path}: convention tag mismatch")
    if head_tag not in _HEAD_NAMES:
        raise ValueError(f"{path}: unknown head tag {head_tag}")
    off = 20
    dims = struct.unpack_from(f"<{ndims}I", data, off)
    off += 4 * ndims
    (slope,) = struct.unpack_from("<d", data, off)
    off += 8
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        n = fan_in * fan_out
        weights.append(
            np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(fan_in, fan_out).copy()
        )
        off += 4 * n
        biases.append(np.frombuffer(data, dtype="<f4", count=fan_out, offset=off).copy())
        off += 4 * fan_out
    if off != len(data) - 4:
        raise ValueError(f"{path}: parameter blob has the wrong size")
    return MlpModel(tuple(int(d) for d in dims), _HEAD_NAMES[head_tag], weights, biases, slope)
