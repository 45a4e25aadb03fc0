import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from firkrylov.kernels import KernelFactor, kernel_matrix, make_kernel


def test_tc_two_by_two():
    kf = make_kernel("tc", 2, 0.5)
    np.testing.assert_allclose(kernel_matrix("tc", 2, 0.5), [[0.5, 0.25], [0.25, 0.25]])
    np.testing.assert_allclose(kf.apply_L(kf.apply_Lt(np.ones(2))), [0.75, 0.5], rtol=1e-14)


def test_dc_exact_entries():
    # exact rational values for beta=1/4, rho=1/2, c=2
    ref = np.array([[1 / 2, 1 / 8, 1 / 32], [1 / 8, 1 / 8, 1 / 32], [1 / 32, 1 / 32, 1 / 32]])
    np.testing.assert_allclose(kernel_matrix("dc", 3, 0.25, rho=0.5, c=2.0), ref, rtol=1e-15)
    kf = make_kernel("dc", 3, 0.25, rho=0.5, c=2.0)
    np.testing.assert_allclose(kf.apply_K(np.eye(3)), ref, rtol=1e-13)


def test_ss_exact_entries():
    ref = np.array([[1 / 24, 5 / 384, 11 / 3072], [5 / 384, 1 / 192, 5 / 3072], [11 / 3072, 5 / 3072, 1 / 1536]])
    np.testing.assert_allclose(kernel_matrix("ss", 3, 0.5), ref, rtol=1e-15)
    np.testing.assert_allclose(make_kernel("ss", 3, 0.5).apply_K(np.eye(3)), ref, rtol=1e-12)


@pytest.mark.parametrize("kind", ["tc", "dc", "ss"])
def test_zero_input(kind):
    kf = make_kernel(kind, 7, 0.6)
    assert not np.any(kf.apply_L(np.zeros(7)))
    assert not np.any(kf.apply_Lt(np.zeros((7, 2))))


def test_tc_n30_against_dense_cholesky():
    x = np.random.default_rng(0).standard_normal(30)
    L = np.linalg.cholesky(kernel_matrix("tc", 30, 0.9))
    kf = make_kernel("tc", 30, 0.9)
    assert np.linalg.norm(kf.apply_L(x) - L @ x) <= 1e-10 * np.linalg.norm(L @ x)
    assert np.linalg.norm(kf.apply_Lt(x) - L.T @ x) <= 1e-10 * np.linalg.norm(L.T @ x)


@settings(max_examples=60, deadline=None)
@given(kind=st.sampled_from(["tc", "dc", "ss"]), n=st.integers(1, 64), beta=st.floats(0.05, 0.95),
       seed=st.integers(0, 2**31))
def test_structured_matches_dense(kind, n, beta, seed):
    K = kernel_matrix(kind, n, beta)
    kf = make_kernel(kind, n, beta)
    x = np.random.default_rng(seed).standard_normal(n)
    ref = K @ x
    assert np.linalg.norm(kf.apply_L(kf.apply_Lt(x)) - ref) <= 1e-10 * np.linalg.norm(K) * np.linalg.norm(x)


@settings(max_examples=40, deadline=None)
@given(kind=st.sampled_from(["tc", "dc", "ss"]), n=st.integers(1, 80), seed=st.integers(0, 2**31))
def test_factor_adjoint(kind, n, seed):
    rng = np.random.default_rng(seed)
    kf = make_kernel(kind, n, float(rng.uniform(0.1, 0.95)))
    x, z = rng.standard_normal(n), rng.standard_normal(n)
    lhs, rhs = kf.apply_L(x) @ z, x @ kf.apply_Lt(z)
    assert abs(lhs - rhs) <= 1e-12 * np.linalg.norm(kf.apply_L(x)) * np.linalg.norm(z) + 1e-300


def test_factor_is_lower_triangular():
    L = make_kernel("ss", 10, 0.7).to_dense()
    assert not np.any(np.triu(L, 1))


@pytest.mark.parametrize("kind", ["tc", "dc", "ss"])
def test_op_count_linear(kind):
    counts = []
    for n in (1000, 10000, 100000):
        kf = make_kernel(kind, n, 0.99)
        kf.apply_L(np.ones(n))
        counts.append(kf.op_count / n)
    assert max(counts) / min(counts) <= 1.3


def test_dense_custom():
    L = np.tril(np.random.default_rng(3).standard_normal((5, 5)))
    kf = KernelFactor.dense(L)
    x = np.arange(5.0)
    np.testing.assert_allclose(kf.apply_L(x), L @ x)
    np.testing.assert_allclose(kf.apply_Lt(x), L.T @ x)
    with pytest.raises(ValueError):
        KernelFactor.dense(L.T)


@pytest.mark.parametrize("kind,kw", [("tc", {"beta": 1.0}), ("tc", {"beta": 0.0}), ("ss", {"beta": -0.1}),
                                     ("dc", {"beta": 0.5, "rho": 1.0}), ("dc", {"beta": 0.5, "c": 0.0})])
def test_parameter_ranges(kind, kw):
    beta = kw.pop("beta")
    with pytest.raises(ValueError):
        make_kernel(kind, 4, beta, **kw)


def test_bad_rows_and_kind():
    kf = make_kernel("tc", 4, 0.5)
    with pytest.raises(ValueError):
        kf.apply_L(np.ones(3))
    with pytest.raises(ValueError):
        kf.apply_Lt(np.array([1.0, np.nan, 0.0, 0.0]))
    with pytest.raises(ValueError):
        make_kernel("matern", 4, 0.5)
