"""Minimal feedforward MLP with per-layer dropout driven by pluggable mask sources.

The training harness is strategy-agnostic: a dropout site only needs an
object with ``next_masks(count) -> (count, width) uint8 array``, one fresh
mask per training sample.  Inverted dropout is used throughout -- kept
activations are scaled by 1/p during training and inference runs mask-free,
which keeps the inference datapath identical to a no-dropout network.

Shapes: batches are (B, d) row-major; a weight matrix is (out, in).
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass

import numpy as np


class TrainingDiverged(RuntimeError):
    """Loss or parameters became non-finite during training."""


def relu(z):
    return np.maximum(z, 0.0)


def _relu_grad(z, a):
    return (z > 0.0).astype(z.dtype)


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _sigmoid_grad(z, a):
    return a * (1.0 - a)


ACTIVATIONS = {
    "relu": (relu, _relu_grad),
    "sigmoid": (sigmoid, _sigmoid_grad),
    "identity": (lambda z: z, lambda z, a: np.ones_like(z)),
}


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray     # (out,)
    activation: str = "relu"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError(f"weights must be 2-D (out, in), got {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ValueError(
                f"bias shape {self.bias.shape} does not match {self.weights.shape[0]} outputs")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


class Mlp:
    """Fully connected layers; dropout sites sit after each hidden activation."""

    def __init__(self, layers):
        layers = list(layers)
        if not layers:
            raise ValueError("need at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ValueError(
                    f"layer dims do not chain: {prev.out_dim} -> {nxt.in_dim}")
        self.layers = layers

    @classmethod
    def create(cls, dims, seed: int = 0, hidden_activation: str = "relu",
               output_activation: str = "identity") -> "Mlp":
        """Glorot-uniform initialized network with the given layer sizes."""
        if len(dims) < 2:
            raise ValueError(f"need at least input and output dims, got {dims}")
        rng = np.random.default_rng(seed)
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
            act = output_activation if i == len(dims) - 2 else hidden_activation
            layers.append(DenseLayer(w, np.zeros(fan_out), act))
        return cls(layers)

    @property
    def dims(self) -> tuple:
        return (self.layers[0].in_dim, *(l.out_dim for l in self.layers))

    @property
    def hidden_widths(self) -> tuple:
        """Widths of the dropout sites (outputs of all non-final layers)."""
        return tuple(l.out_dim for l in self.layers[:-1])

    def forward_infer(self, x) -> np.ndarray:
        """Mask-free forward pass; accepts (d,) or (B, d)."""
        a = np.atleast_2d(np.asarray(x, dtype=np.float64))
        for layer in self.layers:
            f, _ = ACTIVATIONS[layer.activation]
            a = f(a @ layer.weights.T + layer.bias)
        return a[0] if np.asarray(x).ndim == 1 else a


def _site_keep_p(keep_p, num_sites: int) -> list:
    ps = [keep_p] * num_sites if np.isscalar(keep_p) else list(keep_p)
    if len(ps) != num_sites:
        raise ValueError(f"need keep p for {num_sites} dropout sites, got {len(ps)}")
    for p in ps:
        if not (0.0 < p <= 1.0):
            raise ValueError(f"keep probability must be in (0, 1] for training, got {p!r}")
    return ps


def forward_train(mlp: Mlp, x, masks, keep_p, input_mask=None, input_p: float = 1.0):
    """Forward pass with per-sample dropout masks at each hidden site.

    ``masks`` is one (B, width) array (or None for an all-keep site) per
    hidden layer; kept units are scaled by 1/p.  Input-layer dropout is
    off by default; pass ``input_mask`` (B, in_dim) with its own keep
    probability to enable it.  Returns (scores, cache) where the cache
    carries what backward() needs.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    num_sites = len(mlp.layers) - 1
    if len(masks) != num_sites:
        raise ValueError(f"need masks for {num_sites} dropout sites, got {len(masks)}")
    if input_mask is not None:
        m = np.asarray(input_mask, dtype=np.float64)
        if m.shape != x.shape:
            raise ValueError(f"input mask shape {m.shape} does not match input {x.shape}")
        if not (0.0 < input_p <= 1.0):
            raise ValueError(f"input keep probability must be in (0, 1], got {input_p!r}")
        x = x * m / input_p
    ps = _site_keep_p(keep_p, num_sites)
    cache = {"inputs": [], "z": [], "act": [], "scale": []}
    a = x
    for i, layer in enumerate(mlp.layers):
        cache["inputs"].append(a)
        f, _ = ACTIVATIONS[layer.activation]
        z = a @ layer.weights.T + layer.bias
        a = f(z)
        cache["z"].append(z)
        cache["act"].append(a)
        if i < num_sites and masks[i] is not None:
            m = np.asarray(masks[i], dtype=np.float64)
            if m.shape != a.shape:
                raise ValueError(
                    f"mask shape {m.shape} does not match activations {a.shape} at site {i}")
            scale = m / ps[i]
            a = a * scale
            cache["scale"].append(scale)
        else:
            cache["scale"].append(None)
    cache["scores"] = a
    return a, cache


def softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mean softmax cross-entropy of (B, c) scores against integer labels."""
    shifted = scores - scores.max(axis=-1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    return float(-log_probs[np.arange(len(labels)), labels].mean())


def backward(mlp: Mlp, cache, labels) -> list:
    """Gradients of mean softmax cross-entropy w.r.t. every weight and bias.

    Masked positions contribute exactly zero gradient: the same mask/p
    scaling applied in the forward pass gates the backward flow.
    """
    scores = cache["scores"]
    batch = scores.shape[0]
    delta = softmax(scores)
    delta[np.arange(batch), labels] -= 1.0
    delta /= batch  # dLoss/dA_last before activation grad
    grads = [None] * len(mlp.layers)
    for i in reversed(range(len(mlp.layers))):
        layer = mlp.layers[i]
        if cache["scale"][i] is not None:
            delta = delta * cache["scale"][i]
        _, df = ACTIVATIONS[layer.activation]
        dz = delta * df(cache["z"][i], cache["act"][i])
        grads[i] = (dz.T @ cache["inputs"][i], dz.sum(axis=0))
        if i:
            delta = dz @ layer.weights
    return grads


def train_step(mlp: Mlp, x, labels, masks, keep_p, lr: float,
               input_mask=None, input_p: float = 1.0) -> float:
    """One SGD update on a batch; returns the pre-update batch loss."""
    scores, cache = forward_train(mlp, x, masks, keep_p, input_mask, input_p)
    loss = cross_entropy(scores, labels)
    if not np.isfinite(loss):
        raise TrainingDiverged(f"non-finite loss {loss}")
    for layer, (dw, db) in zip(mlp.layers, backward(mlp, cache, labels)):
        layer.weights -= lr * dw
        layer.bias -= lr * db
        if not np.all(np.isfinite(layer.weights)):
            raise TrainingDiverged("non-finite weights after update")
    return loss


@dataclass
class TrainConfig:
    batch_size: int = 100
    learning_rate: float = 0.1
    epochs: int = 30
    seed: int = 0
    keep_p: float = 0.5

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be > 0, got {self.learning_rate}")


@dataclass
class EpochMetrics:
    epoch: int
    train_accuracy: float
    test_accuracy: float
    train_loss: float
    test_loss: float


def evaluate(mlp: Mlp, dataset) -> tuple:
    """(accuracy, mean loss) of the inference path over a dataset."""
    scores = mlp.forward_infer(dataset.images)
    acc = float((scores.argmax(axis=1) == dataset.labels).mean())
    return acc, cross_entropy(scores, dataset.labels)


def train(mlp: Mlp, train_set, test_set, config: TrainConfig,
          mask_sources=None, input_source=None) -> list:
    """Mini-batch SGD with one fresh mask per sample per dropout site.

    ``mask_sources`` is None for a no-dropout run, else one generator (or
    None) per hidden site; ``input_source`` optionally adds input-layer
    dropout (off by default) at the same keep probability.  The shuffle
    stream is seeded by config.seed, so identical seeds reproduce
    identical metric trajectories.
    """
    num_sites = len(mlp.layers) - 1
    if mask_sources is None:
        mask_sources = [None] * num_sites
    if len(mask_sources) != num_sites:
        raise ValueError(f"need {num_sites} mask sources, got {len(mask_sources)}")
    if input_source is not None and not np.isscalar(config.keep_p):
        raise ValueError("input-layer dropout requires a scalar keep_p")
    shuffle_rng = np.random.default_rng(config.seed)
    history = []
    n = len(train_set)
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            masks = [src.next_masks(len(idx)) if src is not None else None
                     for src in mask_sources]
            input_mask = (input_source.next_masks(len(idx))
                          if input_source is not None else None)
            train_step(mlp, train_set.images[idx], train_set.labels[idx],
                       masks, config.keep_p, config.learning_rate,
                       input_mask, config.keep_p if input_source else 1.0)
        train_acc, train_loss = evaluate(mlp, train_set)
        test_acc, test_loss = evaluate(mlp, test_set)
        history.append(EpochMetrics(epoch, train_acc, test_acc, train_loss, test_loss))
    return history


def history_to_csv(history, trial: int = 0) -> str:
    """One trial's metrics in the trial,epoch,split,accuracy,loss schema."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trial", "epoch", "split", "accuracy", "loss"])
    for m in history:
        w.writerow([trial, m.epoch, "train", repr(m.train_accuracy), repr(m.train_loss)])
        w.writerow([trial, m.epoch, "test", repr(m.test_accuracy), repr(m.test_loss)])
    return buf.getvalue()


# -- checkpointing -------------------------------------------------------------
#
# Flat little-endian binary dump, self-compatible only:
#   magic "RDMLP", version u16, layer count u32, then per layer:
#   out u32, in u32, activation (u8 length + ascii), weights float64
#   row-major, bias float64.

_MAGIC = b"RDMLP"
_VERSION = 1


def save_model(mlp: Mlp, path) -> None:
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<HI", _VERSION, len(mlp.layers)))
        for layer in mlp.layers:
            name = layer.activation.encode("ascii")
            f.write(struct.pack("<IIB", layer.out_dim, layer.in_dim, len(name)))
            f.write(name)
            f.write(layer.weights.astype("<f8").tobytes())
            f.write(layer.bias.astype("<f8").tobytes())


def load_model(path) -> Mlp:
    with open(path, "rb") as f:
        magic = f.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a model checkpoint (magic {magic!r})")
        version, count = struct.unpack("<HI", f.read(6))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        layers = []
        for _ in range(count):
            out_dim, in_dim, name_len = struct.unpack("<IIB", f.read(9))
            act = f.read(name_len).decode("ascii")
            w = np.frombuffer(f.read(8 * out_dim * in_dim), dtype="<f8")
            b = np.frombuffer(f.read(8 * out_dim), dtype="<f8")
            layers.append(DenseLayer(w.reshape(out_dim, in_dim).copy(), b.copy(), act))
    return Mlp(layers)
