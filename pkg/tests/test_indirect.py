import numpy as np
import pytest

from firkrylov.indirect import IndirectConfig, IndirectError, indirect_terms, pml_indirect_eval
from firkrylov.kernels import make_kernel
from firkrylov.linops import CompositeOperator, SystemData

from conftest import dense_A, dense_terms, random_system


def test_zero_factor_is_exact():
    data = SystemData(u=np.zeros(12), y=np.arange(12.0), n=3)
    A = CompositeOperator.from_data(data, make_kernel("tc", 3, 0.5))
    res = indirect_terms(A, data.y, 2.0)
    assert res.quad == pytest.approx(data.y @ data.y / 2.0, rel=1e-14)
    assert res.trace == pytest.approx(12 * np.log(2.0), rel=1e-9)


@pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
def test_accuracy_m60(small_tc, lam):
    data, kernel, A = small_tc
    quad, trace = dense_terms(dense_A(data, kernel), data.y, lam)
    res = indirect_terms(A, data.y, lam)
    assert res.quad == pytest.approx(quad, rel=1e-7)
    assert res.trace == pytest.approx(trace, rel=1e-3)


def test_determinism(small_tc):
    data, _, A = small_tc
    cfg = IndirectConfig(seed=3)
    assert pml_indirect_eval(A, data.y, 1.0, cfg).psi == pml_indirect_eval(A, data.y, 1.0, cfg).psi


def test_fixed_rank_divergence_reported():
    data = random_system(300, 60, seed=1)
    A = CompositeOperator.from_data(data, make_kernel("tc", 60, 0.95))
    cfg = IndirectConfig(nystrom_rank=1, adaptive_rank=False, mercator_maxit=5)
    with pytest.raises(IndirectError, match="nystrom_rank"):
        indirect_terms(A, data.y, 1e-3, cfg)


def test_bad_lambda(small_tc):
    data, _, A = small_tc
    with pytest.raises(ValueError):
        indirect_terms(A, data.y, 0.0)
