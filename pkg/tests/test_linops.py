import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from firkrylov.kernels import make_kernel
from firkrylov.linops import (
    CompositeOperator,
    SystemData,
    ToeplitzOperator,
    dense_materialize,
    operator_apply,
    toeplitz_apply,
    toeplitz_apply_transpose,
)

from conftest import dense_A, random_system


def test_toeplitz_hand_example():
    op = ToeplitzOperator([2.0, 3.0, 5.0], 2)
    np.testing.assert_allclose(op.apply([7.0, 11.0]), [0.0, 14.0, 3 * 7 + 2 * 11])


def test_toeplitz_zero_input():
    op = ToeplitzOperator(np.arange(1.0, 9.0), 4)
    assert not np.any(op.apply(np.zeros(4)))
    assert not np.any(op.apply_transpose(np.zeros((8, 3))))


def test_toeplitz_matches_dense_m50():
    rng = np.random.default_rng(0)
    op = ToeplitzOperator(rng.standard_normal(50), 20)
    x = rng.standard_normal(20)
    ref = op.to_dense() @ x
    assert np.linalg.norm(toeplitz_apply(op, x) - ref) <= 1e-12 * np.linalg.norm(ref)


def test_toeplitz_dense_rule():
    u = np.array([1.0, 2.0, 3.0, 4.0])
    D = ToeplitzOperator(u, 3).to_dense()
    np.testing.assert_array_equal(D, [[0, 0, 0], [1, 0, 0], [2, 1, 0], [3, 2, 1]])


def test_fft_length_power_of_two():
    # m + n - 1 = 129 rounds up to 256; 128 would alias
    assert ToeplitzOperator(np.ones(100), 30).nfft == 256
    assert ToeplitzOperator(np.ones(100), 29).nfft == 128


@pytest.mark.parametrize("bad", [np.array([1.0, np.nan, 2.0]), np.array([np.inf, 1.0, 1.0])])
def test_toeplitz_rejects_non_finite(bad):
    op = ToeplitzOperator(np.ones(3), 2)
    with pytest.raises(ValueError):
        op.apply_transpose(bad)
    with pytest.raises(ValueError):
        ToeplitzOperator(bad, 2)


def test_toeplitz_dimension_mismatch():
    op = ToeplitzOperator(np.ones(5), 3)
    with pytest.raises(ValueError):
        op.apply(np.ones(4))
    with pytest.raises(ValueError):
        op.apply_transpose(np.ones(3))


def test_m_equals_one():
    op = ToeplitzOperator([4.0], 1)
    assert op.apply([2.0]).tolist() == [0.0]
    assert op.apply_transpose([3.0]).tolist() == [0.0]


@settings(max_examples=120, deadline=None)
@given(m=st.integers(1, 64), data=st.data())
def test_fft_equals_dense(m, data):
    n = data.draw(st.integers(1, m))
    seed = data.draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    op = ToeplitzOperator(rng.standard_normal(m), n)
    D = op.to_dense()
    X = rng.standard_normal((n, 3))
    Z = rng.standard_normal((m, 2))
    scale = np.linalg.norm(D) + 1e-300
    assert np.linalg.norm(op.apply(X) - D @ X) <= 1e-12 * scale * np.linalg.norm(X) + 1e-300
    assert np.linalg.norm(op.apply_transpose(Z) - D.T @ Z) <= 1e-12 * scale * np.linalg.norm(Z) + 1e-300


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(2, 200))
def test_adjoint_consistency(seed, m):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, m + 1))
    op = ToeplitzOperator(rng.standard_normal(m), n)
    x, z = rng.standard_normal(n), rng.standard_normal(m)
    lhs, rhs = op.apply(x) @ z, x @ op.apply_transpose(z)
    assert abs(lhs - rhs) <= 1e-12 * np.linalg.norm(op.apply(x)) * np.linalg.norm(z) + 1e-12 * abs(lhs) + 1e-300


def test_system_data_validation():
    with pytest.raises(ValueError):
        SystemData(u=np.ones(3), y=np.ones(4), n=2)
    with pytest.raises(ValueError):
        SystemData(u=np.ones(3), y=np.ones(3), n=4)
    with pytest.raises(ValueError):
        SystemData(u=np.array([1.0, np.nan]), y=np.ones(2), n=1)
    assert SystemData(u=np.ones(3), y=np.ones(3), n=3).m == 3


def test_operator_zero_input_signal():
    data = SystemData(u=np.zeros(20), y=np.ones(20), n=5)
    A = CompositeOperator.from_data(data, make_kernel("tc", 5, 0.5))
    assert not np.any(A.apply(np.random.default_rng(0).standard_normal((20, 2))))


def test_operator_matches_dense_m40():
    data = random_system(40, 10, seed=5)
    kernel = make_kernel("tc", 10, 0.7)
    A = CompositeOperator.from_data(data, kernel)
    x = np.random.default_rng(1).standard_normal(40)
    ref = dense_A(data, kernel) @ x
    assert np.linalg.norm(operator_apply(A, x) - ref) <= 1e-10 * np.linalg.norm(ref)
    assert not np.any(A.apply(np.zeros(40)))


def test_matvec_counting():
    data = random_system(30, 6)
    A = CompositeOperator.from_data(data, make_kernel("dc", 6, 0.6))
    A.apply(np.ones(30))
    assert A.matvec_count == 1
    A.apply(np.ones((30, 4)))
    assert A.matvec_count == 5
    A.apply_factor(np.ones(6))
    A.apply_factor_t(np.ones(30))
    A.phi.apply(np.ones(6))
    assert A.matvec_count == 5
    assert A.factor_count == 2
    with pytest.raises(ValueError):
        A.apply(np.ones(29))


def test_matvec_counter_thread_safe():
    data = random_system(64, 8)
    A = CompositeOperator.from_data(data, make_kernel("tc", 8, 0.5))
    X = np.ones((64, 2))

    def work():
        for _ in range(25):
            A.apply(X)

    threads = [threading.Thread(target=work) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert A.matvec_count == 4 * 25 * 2


def test_dense_materialize_properties():
    data = random_system(50, 12, seed=2)
    A = CompositeOperator.from_data(data, make_kernel("ss", 12, 0.8))
    D = dense_materialize(A)
    assert A.matvec_count == 50
    assert np.linalg.norm(D - D.T) <= 1e-12 * np.linalg.norm(D)
    ev = np.linalg.eigvalsh((D + D.T) / 2)
    assert ev[0] >= -1e-10 * ev[-1]


def test_dense_materialize_shift_structure():
    u = np.zeros(6)
    u[1] = 1.0
    data = SystemData(u=u, y=np.ones(6), n=1)
    A = CompositeOperator.from_data(data, make_kernel("tc", 1, 0.5))
    D = dense_materialize(A)
    # Phi is the single column e_3 (lag-2 shift of u), so A = 0.5 e_3 e_3^T
    expected = np.zeros((6, 6))
    expected[2, 2] = 0.5
    np.testing.assert_allclose(D, expected, atol=1e-15)


def test_dense_materialize_cap():
    data = random_system(30, 3)
    A = CompositeOperator.from_data(data, make_kernel("tc", 3, 0.5))
    with pytest.raises(ValueError):
        dense_materialize(A, cap=20)


@pytest.mark.parametrize("seed", range(20))
def test_psd_random_draws(seed):
    rng = np.random.default_rng(100 + seed)
    m = int(rng.integers(5, 101))
    n = int(rng.integers(1, m + 1))
    kind = ["tc", "dc", "ss"][seed % 3]
    beta = float(rng.uniform(0.05, 0.98))
    data = random_system(m, n, seed=seed)
    D = dense_materialize(CompositeOperator.from_data(data, make_kernel(kind, n, beta)))
    ev = np.linalg.eigvalsh((D + D.T) / 2)
    assert ev[0] >= -1e-10 * max(ev[-1], 1e-300)


def test_transpose_helper():
    op = ToeplitzOperator(np.arange(1.0, 6.0), 2)
    z = np.arange(5.0)
    np.testing.assert_allclose(toeplitz_apply_transpose(op, z), op.to_dense().T @ z)


def test_kernel_order_mismatch():
    data = random_system(10, 4)
    with pytest.raises(ValueError):
        CompositeOperator.from_data(data, make_kernel("tc", 5, 0.5))
