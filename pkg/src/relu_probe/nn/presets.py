"""Reference architectures (conv/linear widths per dataset).

``width_divisor`` shrinks every hidden width while keeping depth and layer
kinds, which is how desk-scale runs stay fast.
"""
from __future__ import annotations

from ..errors import SpecError
from .layers import LayerSpec

_C = "conv+relu"
_L = "linear+relu"

# (kind, out_dim, kernel, padding, stride)
PRESETS = {
    "cifar10": [
        (_C, 64, 3, 1, 1), (_C, 64, 3, 1, 1), (_C, 128, 3, 1, 2), (_C, 128, 3, 1, 1),
        (_C, 128, 3, 1, 1), (_C, 256, 3, 1, 2), (_C, 256, 3, 1, 1), (_C, 256, 3, 1, 1),
        (_C, 512, 3, 1, 2), (_C, 512, 3, 1, 1), ("conv", 512, 3, 1, 1),
    ],
    "svhn": [
        (_C, 64, 3, 1, 1), (_C, 64, 3, 1, 1), (_C, 128, 3, 1, 2), (_C, 128, 3, 1, 1),
        (_C, 256, 3, 1, 2), (_C, 256, 3, 1, 1), (_C, 512, 3, 1, 2), ("conv", 512, 3, 1, 1),
    ],
    "urban_sounds": [
        (_C, 64, 3, 1, 1), ("maxpool", None, 2, None, 1),
        (_C, 128, 3, 1, 1), (_C, 128, 3, 1, 1), ("maxpool", None, 2, None, 1),
        (_C, 256, 3, 1, 1), (_C, 256, 3, 1, 1), ("maxpool", None, 2, None, 1),
        (_C, 512, 3, 1, 1), (_C, 512, 3, 1, 1), ("maxpool", None, 2, None, 1),
        (_L, 4096, None, None, None), (_L, 4096, None, None, None),
    ],
    "fashion_mnist": [
        (_L, 128, None, None, None), (_L, 512, None, None, None),
        (_L, 2048, None, None, None), (_L, 2048, None, None, None),
    ],
}

INPUT_SHAPES = {
    "cifar10": (3, 32, 32),
    "svhn": (3, 32, 32),
    "fashion_mnist": (784,),
}


def preset(name: str, num_classes: int = 10, width_divisor: int = 1) -> list[LayerSpec]:
    """Layer specs for a named architecture, ending in a ``num_classes`` linear layer."""
    if name not in PRESETS:
        raise SpecError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    if width_divisor < 1:
        raise SpecError("width_divisor must be >= 1")
    specs = []
    for kind, out, k, p, s in PRESETS[name]:
        if out is not None:
            out = max(1, out // width_divisor)
        specs.append(LayerSpec(kind, out, k, p, s))
    specs.append(LayerSpec("linear", num_classes))
    return specs
