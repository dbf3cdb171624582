"""Support patterns and exact Boolean rank (rectangle cover number).

The Boolean rank of a 0/1 matrix is the fewest all-ones combinatorial
rectangles whose union is exactly its set of ones. It lower-bounds the
non-negative rank of any matrix with that support, so it serves as an exact
oracle on tiny matrices. The search is exponential and capped at 6x6.
"""
from __future__ import annotations

import numpy as np

from .errors import ParameterError, SizeError
from .linalg import as_matrix

MAX_SIDE = 6


def default_eps(a) -> float:
    a = np.asarray(a, dtype=np.float64)
    return 1e-6 * float(a.max()) if a.size and a.max() > 0 else 0.0


def support(a, eps: float | None = None) -> np.ndarray:
    """0/1 matrix marking entries of ``a`` strictly above ``eps``.

    ``eps`` defaults to ``1e-6 * max(a)``.
    """
    a = as_matrix(a)
    if eps is None:
        eps = default_eps(a)
    if eps < 0:
        raise ParameterError("eps must be non-negative")
    return (a > eps).astype(np.uint8)


def _row_masks(m):
    return [int(sum(1 << j for j in np.flatnonzero(row))) for row in m]


def maximal_rectangles(m) -> list[tuple[int, int]]:
    """All maximal all-ones rectangles as ``(row_mask, col_mask)`` bit pairs."""
    m = np.asarray(m)
    rows = _row_masks(m)
    q = m.shape[1]
    rects = set()
    for cols in range(1, 1 << q):
        rmask = 0
        closure = (1 << q) - 1
        for i, r in enumerate(rows):
            if r & cols == cols:
                rmask |= 1 << i
                closure &= r
        if rmask and closure == cols:
            rects.add((rmask, cols))
    return sorted(rects)


def _cells(rmask, cmask, q):
    out = 0
    i = 0
    while rmask:
        if rmask & 1:
            out |= cmask << (i * q)
        rmask >>= 1
        i += 1
    return out


def boolean_rank_exact(m, max_r: int | None = None) -> int | None:
    """Exact rectangle cover number of a binary matrix of at most 6x6.

    Returns ``None`` when no cover with at most ``max_r`` rectangles exists.
    """
    m = np.asarray(m)
    if m.ndim != 2:
        raise ParameterError("expected a 2-D 0/1 matrix")
    n, q = m.shape
    if n > MAX_SIDE or q > MAX_SIDE:
        raise SizeError(f"boolean_rank_exact supports at most {MAX_SIDE}x{MAX_SIDE}, got {n}x{q}")
    m = (m != 0).astype(np.uint8)
    if max_r is None:
        max_r = min(n, q)

    target = 0
    for i, r in enumerate(_row_masks(m)):
        target |= r << (i * q)
    if target == 0:
        return 0

    covers = [_cells(r, c, q) for r, c in maximal_rectangles(m)]
    by_cell = {}
    for bit in range(n * q):
        if target >> bit & 1:
            by_cell[bit] = [c for c in covers if c >> bit & 1]

    def search(covered, budget):
        remaining = target & ~covered
        if remaining == 0:
            return True
        if budget == 0:
            return False
        cell = (remaining & -remaining).bit_length() - 1
        return any(search(covered | c, budget - 1) for c in by_cell[cell])

    for r in range(1, max_r + 1):
        if search(0, r):
            return r
    return None

