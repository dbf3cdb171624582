import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relu_probe.boolrank import boolean_rank_exact, support
from relu_probe.errors import DomainError, ParameterError
from relu_probe.linalg import pca_compress, relative_residual
from relu_probe.nmf import NMFOptions, nmf_compress, nmf_factorize

LONG = NMFOptions(max_iters=5000, tol=0.0, restarts=5)


def test_rank_one_recovery():
    rng = np.random.default_rng(0)
    a = np.outer(rng.random(5) + 0.1, rng.random(4) + 0.1)
    res = nmf_factorize(a, 1, NMFOptions(max_iters=2000, tol=0.0))
    assert relative_residual(a, res.reconstruct()) < 1e-6


def test_identity_full_rank():
    res = nmf_factorize(np.eye(2), 2)
    assert np.linalg.norm(np.eye(2) - res.reconstruct()) < 1e-6


def test_identity_rank_one_optimum():
    # Eckart-Young bounds any rank-1 fit of I2 by sigma_2 = 1, and U=[1,0]^T, V=[1,0]
    # attains it while staying non-negative, so 1.0 is the optimum
    res = nmf_factorize(np.eye(2), 1, NMFOptions(max_iters=2000, tol=0.0))
    assert np.linalg.norm(np.eye(2) - res.reconstruct()) == pytest.approx(1.0, abs=1e-6)


def test_factors_nonnegative_and_shapes():
    a = np.random.default_rng(1).random((9, 7))
    res = nmf_factorize(a, 3)
    assert res.U.shape == (9, 3) and res.V.shape == (3, 7)
    assert (res.U >= 0).all() and (res.V >= 0).all()
    assert res.objective_trace[-1] <= res.objective_trace[0]
    assert 1 <= res.iterations <= 300


def test_exact_rank_k_reconstruction():
    rng = np.random.default_rng(2)
    a = rng.random((10, 3)) @ rng.random((3, 8))
    assert relative_residual(a, nmf_compress(a, 3, LONG)) < 1e-5


@pytest.mark.parametrize("shape", [(6, 4), (4, 6), (5, 5)])
def test_full_rank_is_exact(shape):
    a = np.random.default_rng(3).random(shape)
    k = min(shape)
    approx = nmf_compress(a, k)
    assert relative_residual(a, approx) < 1e-6
    assert (approx >= 0).all()


def test_zero_matrix_stays_zero():
    for k in (1, 2, 3):
        np.testing.assert_array_equal(nmf_compress(np.zeros((4, 3)), k), np.zeros((4, 3)))


def test_zero_rows_carried_through():
    a = np.random.default_rng(4).random((6, 5))
    a[[1, 4]] = 0.0
    a[:, 2] = 0.0
    res = nmf_factorize(a, 2)
    assert not res.U[[1, 4]].any()
    assert not res.V[:, 2].any()


def test_negative_input_rejected():
    with pytest.raises(DomainError):
        nmf_factorize(np.array([[1.0, -0.1], [0.0, 1.0]]), 1)


@pytest.mark.parametrize("k", [0, 4])
def test_rank_out_of_range(k):
    with pytest.raises(ParameterError):
        nmf_factorize(np.ones((3, 5)), k)


def test_invalid_options():
    with pytest.raises(ParameterError):
        NMFOptions(max_iters=0)
    with pytest.raises(ParameterError):
        NMFOptions(restarts=0)
    with pytest.raises(ParameterError):
        NMFOptions(tol=-1)


def test_deterministic_given_seed():
    a = np.random.default_rng(5).random((8, 6))
    r1 = nmf_factorize(a, 2, NMFOptions(seed=11))
    r2 = nmf_factorize(a, 2, NMFOptions(seed=11))
    assert r1.U.tobytes() == r2.U.tobytes() and r1.objective_trace == r2.objective_trace


def test_trace_matches_direct_objective():
    a = np.random.default_rng(6).random((20, 10))
    res = nmf_factorize(a, 4)
    direct = np.linalg.norm(a - res.reconstruct()) ** 2
    assert res.objective == pytest.approx(direct, rel=1e-9)


@given(st.integers(0, 10_000), st.integers(1, 5))
@settings(max_examples=30, deadline=None)
def test_updates_are_monotone(seed, k):
    a = np.random.default_rng(seed).random((15, 9))
    res = nmf_factorize(a, k, NMFOptions(restarts=1, seed=seed, max_iters=200, tol=0.0))
    assert np.all(np.diff(res.objective_trace) <= 1e-10)


@given(st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_pca_dominates_nmf(seed):
    a = np.random.default_rng(seed).random((12, 7))
    for k in range(1, 8):
        assert np.linalg.norm(a - pca_compress(a, k)) <= np.linalg.norm(a - nmf_compress(a, k)) + 1e-8


def test_residual_non_increasing_in_k():
    for seed in range(5):
        a = np.random.default_rng(seed).random((20, 12))
        res = [np.linalg.norm(a - nmf_compress(a, k, NMFOptions(max_iters=1000, seed=seed)))
               for k in range(1, 13)]
        assert all(r2 <= r1 * (1 + 1e-3) for r1, r2 in zip(res, res[1:])), res


@given(st.integers(0, 10_000), st.integers(2, 6), st.integers(2, 6), st.integers(1, 3))
@settings(max_examples=30, deadline=None)
def test_exact_nmf_certifies_boolean_rank(seed, n, m, k):
    rng = np.random.default_rng(seed)
    # sparse non-negative factors give supports with non-trivial structure
    u = rng.random((n, k)) * (rng.random((n, k)) < 0.6)
    v = rng.random((k, m)) * (rng.random((k, m)) < 0.6)
    a = u @ v
    approx = nmf_compress(a, min(k, n, m), LONG)
    if relative_residual(a, approx) < 1e-4:
        assert boolean_rank_exact(support(a)) <= k
