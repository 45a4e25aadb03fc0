import numpy as np
import pytest

from firkrylov.kernels import make_kernel
from firkrylov.linops import CompositeOperator, SystemData, ToeplitzOperator


def random_system(m, n, seed=0):
    rng = np.random.default_rng(seed)
    return SystemData(u=rng.standard_normal(m), y=rng.standard_normal(m), n=n)


def dense_A(data, kernel):
    Phi = ToeplitzOperator(data.u, data.n).to_dense()
    L = kernel.to_dense()
    return Phi @ L @ L.T @ Phi.T


def dense_terms(A, y, lam):
    S = lam * np.eye(len(y)) + A
    return float(y @ np.linalg.solve(S, y)), float(np.linalg.slogdet(S)[1])


@pytest.fixture
def small_tc():
    data = random_system(60, 15, seed=11)
    kernel = make_kernel("tc", 15, 0.8)
    return data, kernel, CompositeOperator.from_data(data, kernel)
