"""Binary checkpoint container for trained networks.

Layout (all integers little-endian)::

    b"RPNN" | u32 version | u32 header length | header JSON (utf-8) | float64 tensors

The JSON header lists the input shape, the layer specs and the shape of every
tensor, in the order the tensors appear in the body.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .._io import atomic_write
from ..errors import FormatError
from .layers import LayerSpec
from .network import Network

MAGIC = b"RPNN"
VERSION = 1
_PREFIX = struct.Struct("<4sII")


def dumps(net: Network) -> bytes:
    tensors = list(net.tensors())
    header = {
        "input_shape": list(net.input_shape),
        "layers": [s.to_dict() for s in net.specs],
        "tensors": [{"layer": i, "name": name, "shape": list(t.shape)} for i, name, t in tensors],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    body = b"".join(np.ascontiguousarray(t, dtype="<f8").tobytes() for _, _, t in tensors)
    return _PREFIX.pack(MAGIC, VERSION, len(blob)) + blob + body


def loads(data: bytes, path=None) -> Network:
    if len(data) < _PREFIX.size:
        raise FormatError("truncated checkpoint prefix", offset=len(data), path=path)
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0, path=path)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4, path=path)
    start = _PREFIX.size
    if len(data) < start + hlen:
        raise FormatError("truncated checkpoint header", offset=len(data), path=path)
    try:
        header = json.loads(data[start:start + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable checkpoint header: {exc}", offset=start, path=path) from None

    specs = [LayerSpec.from_dict(d) for d in header["layers"]]
    params = [{} for _ in specs]
    offset = start + hlen
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        nbytes = 8 * int(np.prod(shape))
        if len(data) < offset + nbytes:
            raise FormatError(f"truncated tensor {entry['name']} of layer {entry['layer']}",
                              offset=len(data), path=path)
        arr = np.frombuffer(data, dtype="<f8", count=nbytes // 8, offset=offset)
        params[entry["layer"]][entry["name"]] = arr.astype(np.float64).reshape(shape)
        offset += nbytes
    if offset != len(data):
        raise FormatError("trailing bytes after last tensor", offset=offset, path=path)
    return Network(specs, header["input_shape"], params)


def save_checkpoint(net: Network, path) -> None:
    atomic_write(path, dumps(net))


def load_checkpoint(path) -> Network:
    return loads(Path(path).read_bytes(), path=path)
