"""Randomized invariants of the linear-algebra and identification layers."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from quantid.bound import check_robust_pe
from quantid.linalg import CostWeights, factorize_cost, pinv_times, svd_extremes
from quantid.quantizer import ChannelQuantizers, budget_from_resolution, quantize_dataset, scale_dataset
from quantid.sysid import DataMatrices, identify

finite = st.floats(-10, 10, allow_nan=False, allow_subnormal=False)


@settings(max_examples=200, deadline=None)
@given(arrays(float, st.tuples(st.integers(1, 4), st.integers(1, 6)), elements=finite))
def test_gram_eigenvalues_lie_between_extreme_singular_values(M):
    smax, smin = svd_extremes(M)
    lam = np.linalg.eigvalsh(M @ M.T)
    tol = 1e-9 * max(1.0, smax**2)
    if M.shape[0] <= M.shape[1]:
        assert np.all(lam >= smin**2 - tol)
    assert np.all(lam <= smax**2 + tol)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 5), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_pinv_times_reproduces_rhs(k, rows, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((k, k))
    W = A @ A.T + 0.5 * np.eye(k)
    Y = rng.standard_normal((rows, k))
    assert np.linalg.norm(pinv_times(Y, W) @ W - Y) <= 1e-9 * max(np.linalg.norm(Y), 1e-300)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_cost_factorization_round_trip(n, m, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((n, n)), rng.standard_normal((m, m))
    Q, R = a @ a.T + 0.1 * np.eye(n), b @ b.T + 0.1 * np.eye(m)
    f = factorize_cost(CostWeights(Q, R))
    L = np.hstack([f.C_c, f.D_cu])
    expected = np.block([[Q, np.zeros((n, m))], [np.zeros((m, n)), R]])
    np.testing.assert_allclose(L.T @ L, expected, atol=1e-10 * max(1.0, np.abs(expected).max()))


def _random_data(seed, n=2, m=1, T=40):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    A *= 0.9 / max(abs(np.linalg.eigvals(A)))
    B = rng.standard_normal((n, m))
    X, U = rng.uniform(-1, 1, (n, T)), rng.uniform(-1, 1, (m, T))
    return A, B, DataMatrices(X, A @ X + B @ U, U)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_identification_is_scale_invariant(seed, c):
    _, _, d = _random_data(seed)
    np.testing.assert_allclose(identify(scale_dataset(d, c)).G_hat, identify(d).G_hat, rtol=1e-8, atol=1e-10)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_exact_recovery_without_quantization(seed):
    A, B, d = _random_data(seed)
    np.testing.assert_allclose(identify(d).G_hat, np.hstack([A, B]), atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(4, 16))
def test_robust_margin_is_below_quantized_singular_value(seed, bits):
    # Weyl step: the margin subtracts sqrt(T)*eps from sigma_min of the quantized data
    _, _, d = _random_data(seed)
    peak = float(np.abs(np.hstack([d.X, d.Xplus])).max()) * 1.01
    ch = ChannelQuantizers.uniform(bits, [(-peak, peak)] * 2, [(-1.0, 1.0)])
    q = quantize_dataset(d, ch, budget="full")
    _, margin = check_robust_pe(q.data, q.budget)
    true_smin = svd_extremes(d.Psi)[1]
    assert margin <= svd_extremes(q.data.Psi)[1]
    # with the full (sup) budget ||E_Psi||_2 <= sqrt(T) eps, so Weyl gives a lower bound on the truth
    assert true_smin >= margin - 1e-12
    assert np.linalg.norm(q.E_Psi, 2) <= np.sqrt(d.T) * budget_from_resolution(ch, "full").eps + 1e-12
