"""Sequential ReLU network with activation capture and injection points."""
from __future__ import annotations

import numpy as np

from ..errors import ContractError, ParameterError, SpecError
from ..linalg import conv_to_matrix, matrix_to_conv
from .layers import LayerSpec, make_layer


class Network:
    """An ordered stack of layers plus their parameter tensors.

    ``params[i]`` maps tensor names (``"W"``, ``"b"``) to arrays for layer ``i``;
    pooling layers have an empty dict.
    """

    def __init__(self, specs, input_shape, params=None):
        self.specs = [s if isinstance(s, LayerSpec) else LayerSpec.from_dict(s) for s in specs]
        self.input_shape = tuple(int(d) for d in input_shape)
        if not self.specs:
            raise SpecError("a network needs at least one layer")
        if self.specs[-1].kind != "linear":
            raise SpecError("the last layer must be a plain linear layer")
        self.layers = []
        shape = self.input_shape
        for spec in self.specs:
            layer = make_layer(spec, shape)
            self.layers.append(layer)
            shape = layer.out_shape
        self.params = params if params is not None else [
            {name: np.zeros(s) for name, s in layer.param_shapes.items()} for layer in self.layers
        ]
        for layer, p in zip(self.layers, self.params):
            for name, s in layer.param_shapes.items():
                if p[name].shape != tuple(s):
                    raise SpecError(f"parameter {name} has shape {p[name].shape}, expected {s}")

    @property
    def num_classes(self) -> int:
        return self.specs[-1].out_dim

    @property
    def relu_layers(self) -> list[int]:
        return [i for i, s in enumerate(self.specs) if s.relu]

    def layer_width(self, i) -> int:
        """Columns of layer ``i``'s activation matrix (channels or units)."""
        return self.layers[i].out_shape[0]

    def copy(self) -> "Network":
        return Network(self.specs, self.input_shape,
                       [{k: v.copy() for k, v in p.items()} for p in self.params])

    def tensors(self):
        for i, p in enumerate(self.params):
            for name in sorted(p):
                yield i, name, p[name]

    def num_parameters(self) -> int:
        return sum(t.size for _, _, t in self.tensors())

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.input_shape:
            if x.ndim >= 2 and int(np.prod(x.shape[1:])) == int(np.prod(self.input_shape)):
                return x.reshape((x.shape[0],) + self.input_shape)
            raise ParameterError(f"input of shape {x.shape[1:]} does not match {self.input_shape}")
        return x

    def run(self, x, capture=(), inject=(), keep_cache=False):
        """Forward pass returning ``(logits, captured, caches)``.

        ``inject`` is a sequence of ``(layer, transform)`` pairs; each
        transform receives the layer's activation matrix (conv maps are
        reshaped to ``(n*h*w, q)`` first) and must return one of equal shape.
        """
        x = self._check_input(x)
        n_layers = len(self.layers)
        capture = set(capture)
        for i in capture:
            if not 0 <= i < n_layers:
                raise ParameterError(f"layer index {i} out of range")
        transforms = {}
        for i, fn in inject:
            if not 0 <= i < n_layers:
                raise ParameterError(f"layer index {i} out of range")
            transforms.setdefault(i, []).append(fn)

        captured, caches = {}, []
        for i, (layer, p) in enumerate(zip(self.layers, self.params)):
            x, cache = layer.forward(p, x)
            if keep_cache:
                caches.append(cache)
            for fn in transforms.get(i, ()):
                x = _apply(fn, x)
            if i in capture:
                captured[i] = x
        return x, captured, caches

    def backward(self, caches, dlogits):
        grads = [None] * len(self.layers)
        d = dlogits
        for i in range(len(self.layers) - 1, -1, -1):
            d, grads[i] = self.layers[i].backward(self.params[i], caches[i], d)
        return grads


def _apply(fn, act):
    mat = conv_to_matrix(act) if act.ndim == 4 else act
    out = np.asarray(fn(mat), dtype=np.float64)
    if out.shape != mat.shape:
        raise ContractError(f"transform changed activation shape {mat.shape} -> {out.shape}")
    return matrix_to_conv(out, act.shape) if act.ndim == 4 else out


def build_network(specs, input_shape, seed=0) -> Network:
    """Instantiate ``specs`` on ``input_shape`` with seeded initialization.

    ReLU-followed layers are He-uniform, the rest Xavier-uniform; biases start at 0.
    """
    net = Network(specs, input_shape)
    rng = np.random.default_rng(seed)
    for layer, p in zip(net.layers, net.params):
        if "W" not in p:
            continue
        w = p["W"]
        fan_in = layer.fan_in
        if layer.spec.relu:
            bound = np.sqrt(6.0 / fan_in)
        else:
            fan_out = w.shape[1] if w.ndim == 2 else w.shape[0] * w.shape[2] * w.shape[3]
            bound = np.sqrt(6.0 / (fan_in + fan_out))
        p["W"] = rng.uniform(-bound, bound, size=w.shape)
    return net


def forward_collect(net: Network, x, capture=()):
    """Logits plus post-activation outputs of the layers in ``capture``.

    Conv activations are returned as ``(n, q, h, w)`` tensors; use
    :func:`relu_probe.linalg.conv_to_matrix` for the matrix form.
    """
    logits, captured, _ = net.run(x, capture=capture)
    return logits, captured


def forward_inject(net: Network, x, layer=None, replace=None, steps=None):
    """Logits with one or more layer activations replaced on the fly.

    Either pass a single ``layer``/``replace`` pair or ``steps``, a list of
    ``(layer, transform)`` pairs applied in forward order.
    """
    if steps is None:
        if layer is None or replace is None:
            raise ParameterError("forward_inject needs layer and replace, or steps")
        steps = [(layer, replace)]
    steps = sorted(steps, key=lambda s: s[0])
    logits, _, _ = net.run(x, inject=steps)
    return logits
