"""Layer specs and their forward/backward kernels."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import SpecError
from ..linalg import conv_to_matrix

KINDS = ("linear", "linear+relu", "conv", "conv+relu", "maxpool")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    out_dim: int | None = None
    kernel: int | None = None
    padding: int | None = None
    stride: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown layer kind {self.kind!r}")
        spatial = (self.kernel, self.padding, self.stride)
        if self.is_conv:
            if None in spatial or self.out_dim is None:
                raise SpecError(f"{self.kind} needs out_dim, kernel, padding and stride")
        elif self.is_pool:
            if self.kernel is None or self.stride is None or self.out_dim is not None:
                raise SpecError("maxpool needs kernel and stride and no out_dim")
        else:
            if any(v is not None for v in spatial):
                raise SpecError(f"{self.kind} takes no kernel/padding/stride")
            if self.out_dim is None:
                raise SpecError(f"{self.kind} needs out_dim")
        if self.out_dim is not None and self.out_dim < 1:
            raise SpecError("out_dim must be positive")
        if self.kernel is not None and (self.kernel < 1 or self.stride < 1):
            raise SpecError("kernel and stride must be positive")

    @property
    def relu(self) -> bool:
        return self.kind.endswith("+relu")

    @property
    def is_conv(self) -> bool:
        return self.kind.startswith("conv")

    @property
    def is_pool(self) -> bool:
        return self.kind == "maxpool"

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, d) -> "LayerSpec":
        return cls(**d)


def _windows(x, k, stride):
    # (n, c, oh, ow, k, k) view, no copy
    return sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]


def conv_out_size(size, k, pad, stride):
    return (size + 2 * pad - k) // stride + 1


class Dense:
    def __init__(self, spec, in_shape):
        self.spec = spec
        self.in_shape = tuple(in_shape)
        self.fan_in = int(np.prod(in_shape))
        self.out_shape = (spec.out_dim,)
        self.param_shapes = {"W": (self.fan_in, spec.out_dim), "b": (spec.out_dim,)}

    def forward(self, params, x):
        xf = x.reshape(x.shape[0], -1)
        z = xf @ params["W"] + params["b"]
        if self.spec.relu:
            z = np.maximum(z, 0.0)
        return z, (xf, z)

    def backward(self, params, cache, dout):
        xf, out = cache
        if self.spec.relu:
            dout = dout * (out > 0)
        grads = {"W": xf.T @ dout, "b": dout.sum(axis=0)}
        dx = (dout @ params["W"].T).reshape((xf.shape[0],) + self.in_shape)
        return dx, grads


class Conv2d:
    def __init__(self, spec, in_shape):
        if len(in_shape) != 3:
            raise SpecError(f"conv layer needs a (channels, h, w) input, got {in_shape}")
        c, h, w = in_shape
        k, p, s = spec.kernel, spec.padding, spec.stride
        oh, ow = conv_out_size(h, k, p, s), conv_out_size(w, k, p, s)
        if oh < 1 or ow < 1:
            raise SpecError(f"conv kernel {k} does not fit input {in_shape}")
        self.spec = spec
        self.in_shape = tuple(in_shape)
        self.out_shape = (spec.out_dim, oh, ow)
        self.fan_in = c * k * k
        self.param_shapes = {"W": (spec.out_dim, c, k, k), "b": (spec.out_dim,)}

    def _cols(self, x):
        p, k, s = self.spec.padding, self.spec.kernel, self.spec.stride
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        win = _windows(xp, k, s)
        n, c, oh, ow = win.shape[:4]
        return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * k * k)

    def forward(self, params, x):
        n = x.shape[0]
        cols = self._cols(x)
        w = params["W"].reshape(self.spec.out_dim, -1)
        # rows of z are already in (n*h*w, q) activation-matrix order
        z = cols @ w.T + params["b"]
        if self.spec.relu:
            z = np.maximum(z, 0.0)
        q, oh, ow = self.out_shape
        out = z.reshape(n, oh, ow, q).transpose(0, 3, 1, 2)
        return out, (cols, z, n)

    def backward(self, params, cache, dout):
        cols, z, n = cache
        dz = conv_to_matrix(dout)
        if self.spec.relu:
            dz = dz * (z > 0)
        w = params["W"].reshape(self.spec.out_dim, -1)
        grads = {"W": (dz.T @ cols).reshape(params["W"].shape), "b": dz.sum(axis=0)}
        dcols = dz @ w

        c, h, wd = self.in_shape
        k, p, s = self.spec.kernel, self.spec.padding, self.spec.stride
        _, oh, ow = self.out_shape
        dcols = dcols.reshape(n, oh, ow, c, k, k)
        dxp = np.zeros((n, c, h + 2 * p, wd + 2 * p))
        for ky in range(k):
            for kx in range(k):
                dxp[:, :, ky:ky + s * oh:s, kx:kx + s * ow:s] += dcols[:, :, :, :, ky, kx].transpose(0, 3, 1, 2)
        return dxp[:, :, p:p + h, p:p + wd], grads


class MaxPool2d:
    def __init__(self, spec, in_shape):
        if len(in_shape) != 3:
            raise SpecError(f"maxpool needs a (channels, h, w) input, got {in_shape}")
        c, h, w = in_shape
        k, s = spec.kernel, spec.stride
        p = spec.padding or 0
        if p:
            raise SpecError("padded max-pooling is not supported")
        oh, ow = conv_out_size(h, k, 0, s), conv_out_size(w, k, 0, s)
        if oh < 1 or ow < 1:
            raise SpecError(f"pool kernel {k} does not fit input {in_shape}")
        self.spec = spec
        self.in_shape = tuple(in_shape)
        self.out_shape = (c, oh, ow)
        self.param_shapes = {}

    def forward(self, params, x):
        k, s = self.spec.kernel, self.spec.stride
        win = _windows(x, k, s)
        flat = win.reshape(win.shape[:4] + (k * k,))
        arg = flat.argmax(axis=-1)
        out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
        return out, arg

    def backward(self, params, arg, dout):
        k, s = self.spec.kernel, self.spec.stride
        _, oh, ow = self.out_shape
        dx = np.zeros((dout.shape[0],) + self.in_shape)
        for idx in range(k * k):
            ky, kx = divmod(idx, k)
            dx[:, :, ky:ky + s * oh:s, kx:kx + s * ow:s] += dout * (arg == idx)
        return dx, {}


def make_layer(spec, in_shape):
    if spec.is_conv:
        return Conv2d(spec, in_shape)
    if spec.is_pool:
        return MaxPool2d(spec, in_shape)
    return Dense(spec, in_shape)
