"""Frobenius-norm NMF by Lee-Seung multiplicative updates."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParameterError
from .linalg import as_matrix

EPS = 1e-12
WINDOW = 10


@dataclass(frozen=True)
class NMFOptions:
    max_iters: int = 300
    tol: float = 1e-5
    restarts: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1 or self.restarts < 1 or self.tol < 0:
            raise ParameterError(f"invalid NMF options: {self}")


@dataclass
class NMFResult:
    U: np.ndarray
    V: np.ndarray
    objective_trace: list = field(default_factory=list)
    iterations: int = 0

    @property
    def objective(self) -> float:
        return self.objective_trace[-1] if self.objective_trace else 0.0

    def reconstruct(self) -> np.ndarray:
        return self.U @ self.V


def _objective(a, u, v):
    r = a - u @ v
    return float(np.vdot(r, r))


def _validate(a, k):
    a = as_matrix(a)
    if np.any(a < 0):
        raise DomainError("NMF input has negative entries")
    if not np.all(np.isfinite(a)):
        raise DomainError("NMF input has non-finite entries")
    if not 1 <= k <= min(a.shape):
        raise ParameterError(f"rank k={k} outside [1, {min(a.shape)}] for shape {a.shape}")
    return a


def _run(a, k, opts):
    """All restarts at once as stacked ``(R, n, k)`` / ``(R, k, q)`` factors.

    A restart that meets the stopping rule is frozen while the others continue.
    """
    n, q = a.shape
    R = opts.restarts
    # uniform on (0, s] with E[(UV)_ij] = k * (s/2)^2 = mean(A)
    scale = 2.0 * np.sqrt(a.mean() / k)
    u = np.empty((R, n, k))
    v = np.empty((R, k, q))
    for r in range(R):
        rng = np.random.default_rng([opts.seed, r])
        u[r] = scale * (1.0 - rng.random((n, k)))
        v[r] = scale * (1.0 - rng.random((k, q)))
    a_sq = float(np.vdot(a, a))
    traces = [[_objective(a, u[r], v[r])] for r in range(R)]
    iters = np.zeros(R, dtype=int)
    active = np.ones(R, dtype=bool)
    at = a.T
    while active.any():
        idx = np.flatnonzero(active)
        ua, va = u[idx], v[idx]
        ut = ua.transpose(0, 2, 1)
        va *= (ut @ a) / ((ut @ ua) @ va + EPS)
        avt = (va @ at).transpose(0, 2, 1)
        vvt = va @ va.transpose(0, 2, 1)
        ua *= avt / (ua @ vvt + EPS)
        utu = ua.transpose(0, 2, 1) @ ua
        # ||A - UV||^2 = ||A||^2 - 2<U, A V^T> + <U^T U, V V^T>
        obj = a_sq - 2.0 * np.einsum("rij,rij->r", ua, avt) + np.einsum("rij,rij->r", utu, vvt)
        u[idx], v[idx] = ua, va
        for j, r in enumerate(idx):
            trace = traces[r]
            trace.append(max(float(obj[j]), 0.0))
            iters[r] += 1
            done = iters[r] >= opts.max_iters or trace[-1] == 0.0
            if not done and iters[r] >= WINDOW:
                past = trace[-1 - WINDOW]
                done = past > 0 and (past - trace[-1]) / past < opts.tol
            if done:
                active[r] = False
    return u, v, traces, iters


def _exact_full_rank(a):
    # k == min(n, q): A = A @ I or I @ A is already an exact non-negative factorization
    n, q = a.shape
    if q <= n:
        return a.copy(), np.eye(q)
    return np.eye(n), a.copy()


def nmf_factorize(a, k: int, opts: NMFOptions | None = None) -> NMFResult:
    """Rank-``k`` non-negative factorization ``A ~ U V`` (best of ``opts.restarts``).

    All-zero rows of ``A`` get all-zero rows in ``U`` (likewise zero columns
    and ``V``), so dead units never receive mass. When ``k`` equals the
    smaller dimension the trivial exact factorization is returned.
    """
    opts = opts or NMFOptions()
    a = _validate(a, k)
    n, q = a.shape

    if k == min(n, q):
        u, v = _exact_full_rank(a)
        return NMFResult(u, v, [_objective(a, u, v)], 0)

    rows = np.flatnonzero(a.any(axis=1))
    cols = np.flatnonzero(a.any(axis=0))
    u_full = np.zeros((n, k))
    v_full = np.zeros((k, q))
    if rows.size == 0:
        return NMFResult(u_full, v_full, [0.0], 0)
    sub = a[np.ix_(rows, cols)]

    u, v, traces, iters = _run(sub, k, opts)
    best = min(range(opts.restarts), key=lambda r: traces[r][-1])
    u_full[rows] = u[best]
    v_full[:, cols] = v[best]
    return NMFResult(u_full, v_full, traces[best], int(iters[best]))


def nmf_compress(a, k: int, opts: NMFOptions | None = None) -> np.ndarray:
    return nmf_factorize(a, k, opts).reconstruct()
