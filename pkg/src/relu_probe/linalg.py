"""Dense matrix helpers used throughout the package.

Matrices are plain 2-D ``float64`` numpy arrays; convolutional feature maps are
4-D arrays laid out as ``(n, channels, height, width)``.
"""
from __future__ import annotations

import numpy as np

from .errors import ParameterError, UndefinedCorrelationError

# Up to this min-dimension the truncated SVD just calls LAPACK directly. The
# randomized sketch is measurably suboptimal at small k on flat spectra, which
# would let NMF beat PCA; dense SVD of a 1024-wide matrix is still cheap.
DENSE_SVD_CUTOFF = 1024
OVERSAMPLING = 8
POWER_ITERATIONS = 4


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ParameterError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def relu(m) -> np.ndarray:
    return np.maximum(np.asarray(m, dtype=np.float64), 0.0)


def conv_to_matrix(t) -> np.ndarray:
    """Flatten an ``(n, q, h, w)`` tensor into an ``(n*h*w, q)`` matrix.

    Entry ``(s, c, y, x)`` lands on row ``s*h*w + y*w + x``, column ``c``.
    """
    t = np.asarray(t)
    if t.ndim != 4:
        raise ParameterError(f"expected an (n, q, h, w) tensor, got shape {t.shape}")
    n, q, h, w = t.shape
    return np.ascontiguousarray(t.transpose(0, 2, 3, 1).reshape(n * h * w, q))


def matrix_to_conv(m, shape) -> np.ndarray:
    """Inverse of :func:`conv_to_matrix` for a target ``(n, q, h, w)`` shape."""
    n, q, h, w = shape
    m = np.asarray(m)
    if m.shape != (n * h * w, q):
        raise ParameterError(f"matrix of shape {m.shape} cannot be reshaped to {tuple(shape)}")
    return np.ascontiguousarray(m.reshape(n, h, w, q).transpose(0, 3, 1, 2))


def _check_rank(a, k):
    if not 1 <= k <= min(a.shape):
        raise ParameterError(f"rank k={k} outside [1, {min(a.shape)}] for shape {a.shape}")


def truncated_svd(a, k, rng=None):
    """Leading ``k`` singular triplets of ``a``.

    Uses a randomized range finder with power iterations once the smaller
    dimension exceeds ``DENSE_SVD_CUTOFF``; otherwise a full LAPACK SVD.
    """
    a = as_matrix(a)
    _check_rank(a, k)
    if min(a.shape) <= DENSE_SVD_CUTOFF or k + OVERSAMPLING >= min(a.shape):
        u, s, vt = np.linalg.svd(a, full_matrices=False)
        return u[:, :k], s[:k], vt[:k]

    rng = np.random.default_rng(0) if rng is None else rng
    omega = rng.standard_normal((a.shape[1], k + OVERSAMPLING))
    q, _ = np.linalg.qr(a @ omega)
    for _ in range(POWER_ITERATIONS):
        # re-orthonormalize between products to keep small singular directions
        z, _ = np.linalg.qr(a.T @ q)
        q, _ = np.linalg.qr(a @ z)
    ub, s, vt = np.linalg.svd(q.T @ a, full_matrices=False)
    return (q @ ub)[:, :k], s[:k], vt[:k]


def pca_compress(a, k, rng=None) -> np.ndarray:
    """Best rank-``k`` Frobenius approximation of the (uncentered) matrix ``a``."""
    u, s, vt = truncated_svd(a, k, rng=rng)
    return (u * s) @ vt


def frobenius(a) -> float:
    return float(np.linalg.norm(a))


def relative_residual(a, approx) -> float:
    norm = np.linalg.norm(a)
    if norm == 0.0:
        return float(np.linalg.norm(approx))
    return float(np.linalg.norm(a - approx) / norm)


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape or x.size < 2:
        raise ParameterError("pearson needs two sequences of equal length >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt(np.dot(dx, dx))
    sy = np.sqrt(np.dot(dy, dy))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("correlation is undefined for a constant sequence")
    return float(np.clip(np.dot(dx, dy) / (sx * sy), -1.0, 1.0))


def trapezoid_auc(ks, ys) -> float:
    """Trapezoidal area under ``ys(ks)`` divided by the width of the k-range."""
    ks = np.asarray(ks, dtype=np.float64).ravel()
    ys = np.asarray(ys, dtype=np.float64).ravel()
    if ks.size < 2 or ks.shape != ys.shape:
        raise ParameterError("trapezoid_auc needs >= 2 points and equal lengths")
    if np.any(np.diff(ks) <= 0):
        raise ParameterError("ks must be strictly increasing")
    area = np.sum(np.diff(ks) * (ys[1:] + ys[:-1]) / 2.0)
    return float(area / (ks[-1] - ks[0]))
