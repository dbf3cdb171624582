"""Softmax cross-entropy training with SGD or Adam."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import DataError, ParameterError, TrainingError

OPTIMIZERS = ("sgd", "adam")
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    batch_size: int = 100
    total_batches: int = 10_000
    eval_interval: int = 250
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ParameterError(f"optimizer must be one of {OPTIMIZERS}")
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ParameterError("learning_rate and weight_decay must be non-negative")
        if self.batch_size < 1 or self.total_batches < 0 or self.eval_interval < 1:
            raise ParameterError("batch_size and eval_interval must be >= 1")

    def to_dict(self):
        return asdict(self)


@dataclass
class History:
    """Metrics recorded every ``eval_interval`` batches."""

    batches: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    test_loss: list = field(default_factory=list)
    test_acc: list = field(default_factory=list)

    COLUMNS = ("batch", "train_loss", "train_acc", "test_loss", "test_acc")

    def append(self, batch, train, test):
        self.batches.append(batch)
        self.train_loss.append(train[0])
        self.train_acc.append(train[1])
        self.test_loss.append(test[0])
        self.test_acc.append(test[1])

    def rows(self):
        return list(zip(self.batches, self.train_loss, self.train_acc, self.test_loss, self.test_acc))


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient with respect to the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = logits.shape[0]
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


def evaluate(net, x, y, batch_size=1000):
    """(mean loss, accuracy) of ``net`` on a labeled set; NaNs when empty."""
    if x is None or len(x) == 0:
        return float("nan"), float("nan")
    total, correct = 0.0, 0
    for start in range(0, len(x), batch_size):
        logits, _, _ = net.run(x[start:start + batch_size])
        yb = y[start:start + batch_size]
        loss, _ = softmax_cross_entropy(logits, yb)
        total += loss * len(yb)
        correct += int((logits.argmax(axis=1) == yb).sum())
    return total / len(x), correct / len(x)


def accuracy(net, x, y) -> float:
    logits, _, _ = net.run(x)
    return float((logits.argmax(axis=1) == np.asarray(y)).mean())


def loss_and_grads(net, x, y):
    logits, _, caches = net.run(x, keep_cache=True)
    loss, dlogits = softmax_cross_entropy(logits, y)
    return loss, net.backward(caches, dlogits)


class _Adam:
    def __init__(self, params):
        self.m = [{k: np.zeros_like(v) for k, v in p.items()} for p in params]
        self.v = [{k: np.zeros_like(v) for k, v in p.items()} for p in params]
        self.t = 0

    def step(self, params, grads, lr):
        self.t += 1
        c1 = 1.0 - ADAM_BETA1 ** self.t
        c2 = 1.0 - ADAM_BETA2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            for k in p:
                m[k] = ADAM_BETA1 * m[k] + (1 - ADAM_BETA1) * g[k]
                v[k] = ADAM_BETA2 * v[k] + (1 - ADAM_BETA2) * g[k] ** 2
                p[k] -= lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + ADAM_EPS)


def train(net, data, cfg: TrainConfig, callback=None):
    """Train a copy of ``net`` and return ``(trained, history)``.

    ``data`` is ``(x_train, y_train)`` or ``(x_train, y_train, x_test, y_test)``.
    Weight decay is an L2 penalty on weight tensors (biases are exempt).
    ``callback(batch_index, net)`` runs at every evaluation point, including
    batch 0 before any update.
    """
    x, y = np.asarray(data[0], dtype=np.float64), np.asarray(data[1])
    x_test, y_test = (data[2], data[3]) if len(data) > 2 else (None, None)
    n = len(x)
    if n == 0 or len(y) != n:
        raise DataError("training set is empty or labels do not match samples")
    net = net.copy()
    rng = np.random.default_rng(cfg.seed)
    adam = _Adam(net.params) if cfg.optimizer == "adam" else None
    history = History()

    def record(b):
        history.append(b, evaluate(net, x, y), evaluate(net, x_test, y_test))
        if callback is not None:
            callback(b, net)

    record(0)
    order = rng.permutation(n)
    pos = 0
    for b in range(1, cfg.total_batches + 1):
        if pos + cfg.batch_size > n:
            order = rng.permutation(n)
            pos = 0
        idx = order[pos:pos + cfg.batch_size]
        pos += cfg.batch_size
        loss, grads = loss_and_grads(net, x[idx], y[idx])
        if not np.isfinite(loss):
            raise TrainingError("non-finite training loss", b)
        if cfg.weight_decay:
            for p, g in zip(net.params, grads):
                if "W" in p:
                    g["W"] = g["W"] + cfg.weight_decay * p["W"]
        if adam is not None:
            adam.step(net.params, grads, cfg.learning_rate)
        else:
            for p, g in zip(net.params, grads):
                for k in p:
                    p[k] -= cfg.learning_rate * g[k]
        if b % cfg.eval_interval == 0:
            record(b)
    return net, history


def randomize_labels(labels, p: float, num_classes: int, seed=0) -> np.ndarray:
    """Replace each label, with probability ``p``, by a uniform class draw."""
    labels = np.asarray(labels)
    if not 0.0 <= p <= 1.0:
        raise ParameterError("p must lie in [0, 1]")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise DataError(f"labels must lie in [0, {num_classes})")
    rng = np.random.default_rng(seed)
    flip = rng.random(labels.shape) < p
    draws = rng.integers(0, num_classes, size=labels.shape)
    return np.where(flip, draws, labels).astype(labels.dtype)


def gradient_check(net, x, labels, step=1e-6, floor=1e-10) -> float:
    """Worst relative error between backprop and central finite differences.

    The error of a tensor is ``|g - f| / (|g| + |f|)`` in Frobenius norm;
    tensors whose gradients both vanish (below ``floor``) are skipped. The
    small default ``step`` keeps perturbations from straddling ReLU and
    max-pool kinks, which otherwise show up as spurious 1e-3 errors.
    """
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    _, grads = loss_and_grads(net, x, labels)
    worst = 0.0
    for i, p in enumerate(net.params):
        for name, t in p.items():
            numeric = np.zeros_like(t)
            flat = t.reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + step
                up, _ = softmax_cross_entropy(net.run(x)[0], labels)
                flat[j] = orig - step
                down, _ = softmax_cross_entropy(net.run(x)[0], labels)
                flat[j] = orig
                numeric.reshape(-1)[j] = (up - down) / (2 * step)
            analytic = grads[i][name]
            scale = np.linalg.norm(analytic) + np.linalg.norm(numeric)
            if scale < floor:
                continue
            worst = max(worst, float(np.linalg.norm(analytic - numeric) / scale))
    return worst
