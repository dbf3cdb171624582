"""Dataset loading (IDX, CSV, CIFAR-10 binary) and synthetic cluster data."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, ParameterError

FORMATS = ("idx", "csv", "cifar-binary", "synthetic")

IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049
_IDX_DTYPES = {
    0x08: np.dtype(">u1"), 0x09: np.dtype(">i1"), 0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"), 0x0D: np.dtype(">f4"), 0x0E: np.dtype(">f8"),
}
CIFAR_RECORD = 1 + 3 * 32 * 32


@dataclass
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    num_classes: int

    def __post_init__(self):
        if len(self.x_train) != len(self.y_train) or len(self.x_test) != len(self.y_test):
            raise DataError("sample and label counts differ")
        for y in (self.y_train, self.y_test):
            if y.size and (y.min() < 0 or y.max() >= self.num_classes):
                raise DataError(f"labels must lie in [0, {self.num_classes})")

    def subset(self, train_size=None, test_size=None, seed=0) -> "Dataset":
        """Deterministic random subsets of the train and test splits."""
        rng = np.random.default_rng(seed)

        def pick(x, y, size):
            if size is None or size >= len(x):
                return x, y
            idx = np.sort(rng.choice(len(x), size=size, replace=False))
            return x[idx], y[idx]

        xtr, ytr = pick(self.x_train, self.y_train, train_size)
        xte, yte = pick(self.x_test, self.y_test, test_size)
        return Dataset(xtr, ytr, xte, yte, self.num_classes)

    def with_train_labels(self, labels) -> "Dataset":
        return Dataset(self.x_train, np.asarray(labels), self.x_test, self.y_test, self.num_classes)


@dataclass
class DatasetSource:
    """Where a dataset comes from.

    ``train``/``test`` map roles to file paths: ``images``/``labels`` for IDX,
    ``path`` for CSV, ``paths`` (a list) for CIFAR batches. ``params`` holds
    the generator arguments for ``synthetic``.
    """

    format: str
    train: dict = field(default_factory=dict)
    test: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    num_classes: int | None = None
    train_size: int | None = None
    test_size: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ParameterError(f"dataset format must be one of {FORMATS}")


def _read_bytes(path):
    path = Path(path)
    data = path.read_bytes()
    if path.suffix == ".gz":
        data = gzip.decompress(data)
    return data


def read_idx(path) -> np.ndarray:
    """Parse an IDX file (big-endian header, magic ``0x0000TTDD``)."""
    data = _read_bytes(path)
    if len(data) < 4:
        raise FormatError("truncated IDX magic", offset=len(data), path=path)
    zero, dtype_code, ndim = struct.unpack_from(">HBB", data)
    if zero != 0 or dtype_code not in _IDX_DTYPES or ndim == 0:
        raise FormatError(f"bad IDX magic {data[:4].hex()}", offset=0, path=path)
    head = 4 + 4 * ndim
    if len(data) < head:
        raise FormatError("truncated IDX dimension header", offset=len(data), path=path)
    dims = struct.unpack_from(f">{ndim}I", data, 4)
    dtype = _IDX_DTYPES[dtype_code]
    need = head + int(np.prod(dims)) * dtype.itemsize
    if len(data) != need:
        raise FormatError(f"IDX body is {len(data) - head} bytes, dims {dims} need {need - head}",
                          offset=min(len(data), need), path=path)
    return np.frombuffer(data, dtype=dtype, offset=head).reshape(dims).astype(dtype.newbyteorder("="))


def write_idx(path, array) -> None:
    array = np.asarray(array)
    code = {np.dtype(v).newbyteorder("="): k for k, v in _IDX_DTYPES.items()}[array.dtype]
    header = struct.pack(">HBB", 0, code, array.ndim) + struct.pack(f">{array.ndim}I", *array.shape)
    Path(path).write_bytes(header + array.astype(array.dtype.newbyteorder(">")).tobytes())


def load_idx_pair(images, labels):
    """Images scaled to [0, 1] as ``(n, 1, h, w)`` and int64 labels."""
    img_data = _read_bytes(images)
    magic = struct.unpack_from(">I", img_data)[0] if len(img_data) >= 4 else None
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(f"expected image magic {IDX_IMAGES_MAGIC}, got {magic}", offset=0, path=images)
    lab_data = _read_bytes(labels)
    magic = struct.unpack_from(">I", lab_data)[0] if len(lab_data) >= 4 else None
    if magic != IDX_LABELS_MAGIC:
        raise FormatError(f"expected label magic {IDX_LABELS_MAGIC}, got {magic}", offset=0, path=labels)
    x = read_idx(images)
    y = read_idx(labels).astype(np.int64)
    if len(x) != len(y):
        raise DataError(f"{len(x)} images but {len(y)} labels")
    return (x.astype(np.float64) / 255.0)[:, None, :, :], y


def load_csv(path, image_shape=None):
    """CSV with header ``label,f0,f1,...``; features are kept as written."""
    raw = Path(path).read_bytes()
    lines = raw.split(b"\n")
    header = lines[0].decode().strip().split(",")
    if not header or header[0] != "label" or len(header) < 2:
        raise FormatError("CSV header must start with 'label' followed by features", offset=0, path=path)
    width = len(header)
    xs, ys = [], []
    offset = len(lines[0]) + 1
    for line in lines[1:]:
        text = line.decode().strip()
        if text:
            cells = text.split(",")
            if len(cells) != width:
                raise FormatError(f"row has {len(cells)} fields, header has {width}", offset=offset, path=path)
            try:
                ys.append(int(cells[0]))
                xs.append([float(c) for c in cells[1:]])
            except ValueError:
                raise FormatError("non-numeric CSV field", offset=offset, path=path) from None
        offset += len(line) + 1
    x = np.array(xs, dtype=np.float64).reshape(len(xs), width - 1)
    if image_shape is not None:
        x = x.reshape((len(xs),) + tuple(image_shape))
    return x, np.array(ys, dtype=np.int64)


def load_cifar_binary(paths):
    """CIFAR-10 binary batches: 1 label byte + 3072 channel-major pixel bytes."""
    xs, ys = [], []
    for path in paths:
        data = _read_bytes(path)
        if len(data) % CIFAR_RECORD:
            whole = len(data) // CIFAR_RECORD * CIFAR_RECORD
            raise FormatError(f"incomplete record ({len(data) - whole} of {CIFAR_RECORD} bytes)",
                              offset=whole, path=path)
        rec = np.frombuffer(data, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
        ys.append(rec[:, 0].astype(np.int64))
        xs.append(rec[:, 1:].reshape(-1, 3, 32, 32).astype(np.float64) / 255.0)
    if not xs:
        return np.zeros((0, 3, 32, 32)), np.zeros(0, dtype=np.int64)
    return np.concatenate(xs), np.concatenate(ys)


def _class_means(classes, dim, separation, rng):
    if dim < classes - 1:
        raise ParameterError(f"{classes} equidistant class means need dim >= {classes - 1}")
    # centred simplex vertices are pairwise sqrt(2) apart in a (C-1)-dim subspace
    simplex = np.eye(classes) - 1.0 / classes
    _, _, vt = np.linalg.svd(simplex)
    coords = simplex @ vt[:classes - 1].T
    basis, _ = np.linalg.qr(rng.standard_normal((dim, classes - 1)))
    return (separation / np.sqrt(2.0)) * coords @ basis.T


def generate_synthetic(classes, per_class, dim, separation, seed=0, sigma=1.0, embed_dim=None):
    """Isotropic Gaussian clusters whose means are pairwise ``separation`` apart.

    With ``embed_dim`` the ``dim``-dimensional clusters are mapped into that
    many features by a random orthonormal embedding (low intrinsic dimension,
    like images). Returns ``(x, y)`` with samples shuffled.
    """
    if classes < 2 or dim < 1 or per_class < 1:
        raise ParameterError("need classes >= 2, dim >= 1 and per_class >= 1")
    if embed_dim is not None and embed_dim < dim:
        raise ParameterError("embed_dim must be at least dim")
    rng = np.random.default_rng(seed)
    means = _class_means(classes, dim, separation, rng)
    y = np.repeat(np.arange(classes), per_class)
    x = means[y] + sigma * rng.standard_normal((len(y), dim))
    if embed_dim is not None:
        basis, _ = np.linalg.qr(rng.standard_normal((embed_dim, dim)))
        x = x @ basis.T
    order = rng.permutation(len(y))
    return x[order], y[order]


def _synthetic_dataset(params, seed):
    params = dict(params)
    test_per_class = int(params.pop("test_per_class", 0))
    per_class = int(params.pop("per_class"))
    classes = int(params["classes"])
    x, y = generate_synthetic(per_class=per_class + test_per_class, seed=seed, **params)
    is_test = np.zeros(len(y), dtype=bool)
    for c in range(classes):
        is_test[np.flatnonzero(y == c)[:test_per_class]] = True
    return Dataset(x[~is_test], y[~is_test], x[is_test], y[is_test], classes)


def load_dataset(src: DatasetSource) -> Dataset:
    """Load ``src`` and apply its train/test subsetting."""
    if src.format == "synthetic":
        data = _synthetic_dataset(src.params, src.seed)
    else:
        if src.format == "idx":
            xtr, ytr = load_idx_pair(src.train["images"], src.train["labels"])
            xte, yte = load_idx_pair(src.test["images"], src.test["labels"]) if src.test else (None, None)
        elif src.format == "csv":
            shape = src.params.get("image_shape")
            xtr, ytr = load_csv(src.train["path"], shape)
            xte, yte = load_csv(src.test["path"], shape) if src.test else (None, None)
        else:
            xtr, ytr = load_cifar_binary(src.train["paths"])
            xte, yte = load_cifar_binary(src.test["paths"]) if src.test else (None, None)
        if xte is None:
            xte, yte = xtr[:0], ytr[:0]
        num_classes = src.num_classes or int(max(ytr.max(initial=0), yte.max(initial=0))) + 1
        data = Dataset(xtr, ytr, xte, yte, num_classes)
    if src.train_size is not None or src.test_size is not None:
        data = data.subset(src.train_size, src.test_size, seed=src.seed)
    return data
