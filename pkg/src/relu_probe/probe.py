"""Compression sweeps over layer activations and the statistics built on them.

A sweep replaces one or more layer activations with a rank-``k``
approximation (NMF, PCA), a random column ablation keeping ``k`` columns, or
the residual left after removing the top-``k`` NMF/PCA part, and records the
network's accuracy on the probe batch for every ``k``. The normalized area
under that curve (AuC) summarizes how robust, and hence how close to linear,
the layer is with respect to the batch.
"""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, DomainError, ParameterError
from .linalg import pca_compress, pearson, trapezoid_auc
from .nmf import NMFOptions, nmf_compress
from .nn.network import Network, forward_inject

METHODS = ("nmf", "pca", "random_ablation", "nmf_residual", "pca_residual")
CURVE_COLUMNS = ("network_id", "layer", "method", "batch", "k", "accuracy", "baseline")
PROFILE_COLUMNS = ("network_id", "layer", "method", "auc", "auc_std", "n_curves")
BLOCK_DEPTH = 3


@dataclass(frozen=True)
class CompressionMethod:
    kind: str
    nmf: NMFOptions = field(default_factory=NMFOptions)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in METHODS:
            raise ParameterError(f"unknown compression method {self.kind!r}; choose from {METHODS}")

    @property
    def is_ablation(self) -> bool:
        return self.kind == "random_ablation"


def as_method(m) -> CompressionMethod:
    return m if isinstance(m, CompressionMethod) else CompressionMethod(m)


@dataclass
class SweepCurve:
    layers: tuple
    method: str
    ks: list
    accuracies: list
    baseline_accuracy: float

    def __post_init__(self):
        if len(self.ks) != len(self.accuracies):
            raise ParameterError("ks and accuracies differ in length")
        if any(b <= a for a, b in zip(self.ks, self.ks[1:])):
            raise ParameterError("ks must be strictly increasing")

    @property
    def auc(self) -> float:
        return trapezoid_auc(self.ks, self.accuracies)

    @property
    def layer_label(self) -> str:
        return "+".join(str(i) for i in self.layers)


@dataclass
class CurveSummary:
    auc: float
    layer: object
    method: str
    auc_std: float = 0.0
    n_curves: int = 1


@dataclass
class EpochSignal:
    epochs: list
    values: list

    def __post_init__(self):
        if len(self.epochs) != len(self.values):
            raise ParameterError("epochs and values differ in length")
        if any(b <= a for a, b in zip(self.epochs, self.epochs[1:])):
            raise ParameterError("epochs must be increasing")


# -- batches -----------------------------------------------------------------

def single_class_batches(x, y, per_class, classes=None, seed=0):
    """One ``(x, y)`` batch per class, ``per_class`` samples each, no replacement."""
    y = np.asarray(y)
    if classes is None:
        classes = np.unique(y)
    rng = np.random.default_rng(seed)
    batches = []
    for c in classes:
        idx = np.flatnonzero(y == c)
        if len(idx) < per_class:
            raise DataError(f"class {c} has {len(idx)} samples, {per_class} requested")
        pick = rng.choice(idx, size=per_class, replace=False)
        batches.append((x[pick], y[pick]))
    return batches


def multi_class_batch(x, y, size, seed=0):
    if size > len(y):
        raise DataError(f"batch of {size} requested from {len(y)} samples")
    pick = np.random.default_rng(seed).permutation(len(y))[:size]
    return x[pick], np.asarray(y)[pick]


# -- compression ---------------------------------------------------------------

def compress_activation(a, method, k, rng=None) -> np.ndarray:
    """Apply ``method`` at dimension ``k`` to an activation matrix."""
    method = as_method(method)
    a = np.asarray(a, dtype=np.float64)
    if method.is_ablation:
        cols = a.shape[1]
        if not 0 <= k <= cols:
            raise ParameterError(f"cannot keep {k} of {cols} columns")
        rng = np.random.default_rng(method.seed) if rng is None else rng
        out = a.copy()
        out[:, rng.permutation(cols)[k:]] = 0.0
        return out
    if method.kind.startswith("nmf"):
        if np.any(a < 0):
            raise DomainError("NMF compression needs a non-negative activation")
        approx = nmf_compress(a, k, method.nmf)
    else:
        approx = pca_compress(a, k)
    return a - approx if method.kind.endswith("_residual") else approx


def activation_limit(net: Network, layer, n, method) -> int:
    """Largest meaningful ``k`` for layer activations of an ``n``-sample batch."""
    shape = net.layers[layer].out_shape
    cols = shape[0]
    rows = n * int(np.prod(shape[1:]))
    return cols if as_method(method).is_ablation else min(rows, cols)


def default_k_grid(limit) -> list:
    """1, 2, 4, ... below ``limit``, then ``limit`` itself."""
    if limit < 1:
        raise ParameterError("k-grid limit must be positive")
    ks, k = [], 1
    while k < limit:
        ks.append(k)
        k *= 2
    ks.append(limit)
    return ks


def _accuracy(logits, y):
    return float((logits.argmax(axis=1) == y).mean())


def k_sweep(net: Network, batch, layers, method, ks=None) -> SweepCurve:
    """Accuracy on ``batch`` with the activations of ``layers`` compressed at each k.

    Layers are compressed in forward order, each on the activation produced
    by the already-compressed upstream layers. ``k`` is clipped per layer to
    its largest valid value; the default grid runs up to the smallest layer's
    full rank (NMF/PCA limit) so the last point reconstructs exactly.
    """
    method = as_method(method)
    x, y = batch
    y = np.asarray(y)
    layers = tuple(sorted({int(i) for i in np.atleast_1d(layers)}))
    n = len(y)
    rank_limits = {i: activation_limit(net, i, n, "nmf") for i in layers}
    limits = {i: activation_limit(net, i, n, method) for i in layers}
    if ks is None:
        ks = default_k_grid(min(rank_limits.values()))
    ks = [int(k) for k in ks]

    baseline = _accuracy(forward_inject(net, x, steps=[]), y)
    accs = []
    for k in ks:
        steps = []
        for i in layers:
            kk = min(k, limits[i])
            rng = np.random.default_rng([method.seed, i, k]) if method.is_ablation else None
            steps.append((i, lambda a, kk=kk, rng=rng: compress_activation(a, method, kk, rng)))
        accs.append(_accuracy(forward_inject(net, x, steps=steps), y))
    return SweepCurve(layers, method.kind, ks, accs, baseline)


def _map(fn, items, jobs):
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def batch_sweeps(net, batches, layers, method, ks=None, jobs=1) -> list:
    """One :func:`k_sweep` per batch; ablation masks differ per batch."""
    method = as_method(method)

    def one(ib):
        i, b = ib
        m = replace(method, seed=method.seed + 1000 * i) if method.is_ablation else method
        return k_sweep(net, b, layers, m, ks)

    return _map(one, list(enumerate(batches)), jobs)


def mean_auc(net, batches, layers, method, ks=None, jobs=1) -> CurveSummary:
    curves = batch_sweeps(net, batches, layers, method, ks, jobs)
    aucs = np.array([c.auc for c in curves])
    layer = curves[0].layers if len(curves[0].layers) > 1 else curves[0].layers[0]
    return CurveSummary(float(aucs.mean()), layer, as_method(method).kind,
                        float(aucs.std()), len(aucs))


def mean_curve(curves) -> SweepCurve:
    """Pointwise mean of curves sharing a k-grid."""
    ks = curves[0].ks
    if any(c.ks != ks for c in curves):
        raise ParameterError("curves do not share a k-grid")
    accs = np.mean([c.accuracies for c in curves], axis=0)
    base = float(np.mean([c.baseline_accuracy for c in curves]))
    return SweepCurve(curves[0].layers, curves[0].method, list(ks), [float(a) for a in accs], base)


def deep_block(net: Network) -> list[int]:
    """Layers compressed together when probing a whole network.

    The last three ReLU conv layers for convolutional nets, every ReLU layer
    for fully-connected ones.
    """
    conv = [i for i in net.relu_layers if net.specs[i].is_conv]
    return conv[-BLOCK_DEPTH:] if conv else list(net.relu_layers)


def resolve_layers(net: Network, layers) -> list[int]:
    """``"deep"``, ``"all"`` or an explicit list of ReLU layer indices."""
    if layers == "deep":
        return deep_block(net)
    if layers == "all":
        return list(net.relu_layers)
    if isinstance(layers, int):
        layers = [layers]
    out = [int(i) for i in layers]
    bad = [i for i in out if i not in net.relu_layers]
    if bad or not out:
        raise ParameterError(f"layers {bad or out} are not ReLU layers; choose from {net.relu_layers}")
    return out


def layer_profile(net, batches, method, ks=None, layers=None, jobs=1) -> list:
    """Mean single-layer AuC for every ReLU layer (or the given ``layers``)."""
    layers = net.relu_layers if layers is None else list(layers)
    return [mean_auc(net, batches, [i], method, ks, jobs) for i in layers]


def generalization_correlation(aucs, gen_errors) -> float:
    if len(aucs) < 3:
        raise ParameterError("need at least 3 networks to correlate")
    return pearson(aucs, gen_errors)


# -- epoch signals -----------------------------------------------------------

def smooth(signal: EpochSignal, radius: int) -> EpochSignal:
    """Centered moving average over ``[i - radius, i + radius]``, clipped at the ends."""
    if radius < 0:
        raise ParameterError("radius must be non-negative")
    v = np.asarray(signal.values, dtype=np.float64)
    n = len(v)
    csum = np.concatenate([[0.0], np.cumsum(v)])
    out = []
    for i in range(n):
        lo, hi = max(0, i - radius), min(n, i + radius + 1)
        out.append(float((csum[hi] - csum[lo]) / (hi - lo)) if radius else float(v[i]))
    return EpochSignal(list(signal.epochs), out)


def first_local_max(values) -> int | None:
    """Index of the first strict interior local maximum; plateaus report their start."""
    v = list(values)
    i = 1
    while i < len(v) - 1:
        j = i
        while j + 1 < len(v) and v[j + 1] == v[i]:
            j += 1
        if v[i - 1] < v[i] and j + 1 < len(v) and v[j + 1] < v[i]:
            return i
        i = j + 1
    return None


def early_stop_epoch(auc_signal: EpochSignal, radius: int = 2):
    """Epoch of the first local maximum of the smoothed signal (global max if none)."""
    if len(auc_signal.values) < 3:
        raise ParameterError("early stopping needs at least 3 recorded points")
    s = smooth(auc_signal, radius)
    i = first_local_max(s.values)
    if i is None:
        i = int(np.argmax(s.values))
    return s.epochs[i]


def min_epoch(signal: EpochSignal, radius: int = 2):
    """Epoch of the global minimum of the smoothed signal (earliest on ties)."""
    s = smooth(signal, radius)
    return s.epochs[int(np.argmin(s.values))]


# -- export ------------------------------------------------------------------

def curves_to_csv(curves, network_id="net") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for b, c in enumerate(curves):
        for k, acc in zip(c.ks, c.accuracies):
            w.writerow([network_id, c.layer_label, c.method, b, k, repr(float(acc)),
                        repr(float(c.baseline_accuracy))])
    return buf.getvalue()


def profile_to_csv(summaries, network_id="net") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PROFILE_COLUMNS)
    for s in summaries:
        layer = "+".join(map(str, s.layer)) if isinstance(s.layer, tuple) else s.layer
        w.writerow([network_id, layer, s.method, repr(s.auc), repr(s.auc_std), s.n_curves])
    return buf.getvalue()


def summaries_to_json(summaries, network_id="net") -> str:
    rows = [{"network_id": network_id, "layer": s.layer if not isinstance(s.layer, tuple) else list(s.layer),
             "method": s.method, "auc": s.auc, "auc_std": s.auc_std, "n_curves": s.n_curves}
            for s in summaries]
    return json.dumps(rows, indent=2, sort_keys=True) + "\n"
