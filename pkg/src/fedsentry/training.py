"""Local client training: small dense classifiers trained by minibatch SGD.

The global model is a flat float64 parameter vector; clients copy it,
train on their shard, and report the difference (trained minus global) as
their weight update. Every client's shuffling comes from its own seed
stream so training order across clients can never perturb results.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .data import DataShard
from .gradients import GradientUpdate


class DivergenceError(RuntimeError):
    """Local training produced a non-finite loss."""

    def __init__(self, message: str, client_id: int | None = None):
        super().__init__(message)
        self.client_id = client_id


@dataclass(frozen=True)
class TrainingConfig:
    lr: float
    epochs: int
    batch_size: int
    seed: int

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError(f"learning rate must be >= 0, got {self.lr}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


def derive_round_seed(base_seed: int, client_id: int, round_index: int) -> int:
    """Stable per-(client, round) seed stream from one experiment seed.

    Hash-based so the stream is independent of training order and identical
    across platforms and processes.
    """
    tag = f"{base_seed}/{client_id}/{round_index}".encode()
    return int.from_bytes(hashlib.blake2b(tag, digest_size=8).digest(), "big")


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _cross_entropy(probs: np.ndarray, y: np.ndarray) -> float:
    eps = 1e-12
    return float(-np.log(probs[np.arange(len(y)), y] + eps).mean())


class SoftmaxClassifier:
    """Multinomial logistic regression on flat parameter vectors.

    Parameter layout: weight matrix (input_dim x num_classes) row-major,
    then the bias vector.
    """

    def __init__(self, input_dim: int, num_classes: int):
        self.input_dim = input_dim
        self.num_classes = num_classes

    @property
    def num_params(self) -> int:
        return self.input_dim * self.num_classes + self.num_classes

    def init_params(self, seed: int) -> np.ndarray:
        del seed  # the objective is convex; zeros are a fine start
        return np.zeros(self.num_params, dtype=np.float64)

    def _unpack(self, params: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        split = self.input_dim * self.num_classes
        w = params[:split].reshape(self.input_dim, self.num_classes)
        b = params[split:]
        return w, b

    def logits(self, params: np.ndarray, x: np.ndarray) -> np.ndarray:
        w, b = self._unpack(params)
        return x @ w + b

    def predict(self, params: np.ndarray, x: np.ndarray) -> np.ndarray:
        return self.logits(params, x).argmax(axis=1)

    def loss(self, params: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
        return _cross_entropy(_softmax(self.logits(params, x)), y)

    def loss_and_grad(
        self, params: np.ndarray, x: np.ndarray, y: np.ndarray
    ) -> tuple[float, np.ndarray]:
        probs = _softmax(self.logits(params, x))
        loss = _cross_entropy(probs, y)
        dlogits = probs.copy()
        dlogits[np.arange(len(y)), y] -= 1.0
        dlogits /= len(y)
        grad = np.concatenate([(x.T @ dlogits).ravel(), dlogits.sum(axis=0)])
        return loss, grad


class OneHiddenLayerClassifier:
    """ReLU network with one hidden layer, for image-scale runs.

    Parameter layout: W1 (input_dim x hidden) row-major, b1, W2
    (hidden x num_classes) row-major, b2.
    """

    def __init__(self, input_dim: int, hidden: int, num_classes: int):
        self.input_dim = input_dim
        self.hidden = hidden
        self.num_classes = num_classes

    @property
    def num_params(self) -> int:
        return (
            self.input_dim * self.hidden
            + self.hidden
            + self.hidden * self.num_classes
            + self.num_classes
        )

    def init_params(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        w1 = rng.standard_normal((self.input_dim, self.hidden)) * np.sqrt(2.0 / self.input_dim)
        w2 = rng.standard_normal((self.hidden, self.num_classes)) * np.sqrt(1.0 / self.hidden)
        return np.concatenate(
            [w1.ravel(), np.zeros(self.hidden), w2.ravel(), np.zeros(self.num_classes)]
        )

    def _unpack(self, params: np.ndarray):
        i, h, c = self.input_dim, self.hidden, self.num_classes
        pos = 0
        w1 = params[pos : pos + i * h].reshape(i, h)
        pos += i * h
        b1 = params[pos : pos + h]
        pos += h
        w2 = params[pos : pos + h * c].reshape(h, c)
        pos += h * c
        b2 = params[pos:]
        return w1, b1, w2, b2

    def logits(self, params: np.ndarray, x: np.ndarray) -> np.ndarray:
        w1, b1, w2, b2 = self._unpack(params)
        hidden = np.maximum(x @ w1 + b1, 0.0)
        return hidden @ w2 + b2

    def predict(self, params: np.ndarray, x: np.ndarray) -> np.ndarray:
        return self.logits(params, x).argmax(axis=1)

    def loss(self, params: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
        return _cross_entropy(_softmax(self.logits(params, x)), y)

    def loss_and_grad(
        self, params: np.ndarray, x: np.ndarray, y: np.ndarray
    ) -> tuple[float, np.ndarray]:
        w1, b1, w2, b2 = self._unpack(params)
        pre = x @ w1 + b1
        hidden = np.maximum(pre, 0.0)
        probs = _softmax(hidden @ w2 + b2)
        loss = _cross_entropy(probs, y)

        dlogits = probs.copy()
        dlogits[np.arange(len(y)), y] -= 1.0
        dlogits /= len(y)
        dw2 = hidden.T @ dlogits
        db2 = dlogits.sum(axis=0)
        dhidden = (dlogits @ w2.T) * (pre > 0.0)
        dw1 = x.T @ dhidden
        db1 = dhidden.sum(axis=0)
        grad = np.concatenate([dw1.ravel(), db1, dw2.ravel(), db2])
        return loss, grad


def local_train(
    model,
    global_params: np.ndarray,
    shard: DataShard,
    hyper: TrainingConfig,
) -> GradientUpdate:
    """Run minibatch SGD on one shard and report the weight update.

    The update is trained params minus the broadcast global params, so the
    server's weighted sum of updates is plain parameter averaging. Fully
    deterministic for a given (global_params, shard, hyper).

    Raises:
        DivergenceError: when the loss stops being finite.
    """
    rng = np.random.default_rng(hyper.seed)
    params = global_params.copy()
    k = len(shard)
    for _ in range(hyper.epochs):
        order = rng.permutation(k)
        for start in range(0, k, hyper.batch_size):
            batch = order[start : start + hyper.batch_size]
            loss, grad = model.loss_and_grad(
                params, shard.features[batch], shard.labels[batch]
            )
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"client {shard.owner}: non-finite training loss", client_id=shard.owner
                )
            params -= hyper.lr * grad
    return GradientUpdate(
        client_id=shard.owner, delta=params - global_params, num_samples=k
    )
