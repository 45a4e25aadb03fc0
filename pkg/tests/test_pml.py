import math

import numpy as np
import pytest

from firkrylov.evaluators import DirectPml, IndirectPml, KrylovPml
from firkrylov.kernels import KernelFactor, make_kernel
from firkrylov.linops import CompositeOperator, SystemData
from firkrylov.pml import (
    PmlError,
    PmlSpectrum,
    make_evaluation,
    pml_direct_precompute,
    pml_eval_from_spectrum,
    pml_krylov_eval,
    pml_krylov_precompute,
    residual_trace_eval,
    residual_trace_precompute,
)

from conftest import dense_A, dense_terms, random_system

# m=3, n=2 system solved in exact rational arithmetic
TINY_QUAD = 1.3116883116883116883  # 101/77
TINY_TRACE = 1.5712166996139026115  # log(77/16)
TINY_PSI = 0.79505399485887647222
TINY_NU = 0.43722943722943722944


def tiny_system():
    return SystemData(u=np.array([1.0, 2.0, 3.0]), y=np.array([1.0, 0.0, -1.0]), n=2), make_kernel("tc", 2, 0.5)


def test_tiny_system_frozen():
    data, kernel = tiny_system()
    ev = DirectPml(data, kernel).evaluate(1.0)
    assert ev.quad == pytest.approx(TINY_QUAD, rel=1e-14)
    assert ev.trace == pytest.approx(TINY_TRACE, rel=1e-14)
    assert ev.psi == pytest.approx(TINY_PSI, rel=1e-14)
    assert ev.nu_star == pytest.approx(TINY_NU, rel=1e-14)


def test_zero_operator_closed_form():
    # A = 0, lam = 1, |y|^2 = 4: psi = log 4
    data = SystemData(u=np.zeros(5), y=np.array([2.0, 0, 0, 0, 0]), n=2)
    ev = DirectPml(data, make_kernel("tc", 2, 0.5)).evaluate(1.0)
    assert ev.psi == pytest.approx(math.log(4.0), abs=1e-15)


def test_spectrum_closed_form():
    spec = PmlSpectrum(thetas=np.array([1.0]), y_coeffs_sq=np.array([2.0]), leftover_mass=0.0, m=2)
    # quad = 2/(1+1) = 1, trace = log 1 + log 2; psi = log(2)/2
    ev = pml_eval_from_spectrum(spec, 1.0)
    assert ev.psi == pytest.approx(math.log(2.0) / 2, abs=1e-15)
    spec = PmlSpectrum(thetas=np.array([0.0, 0.0]), y_coeffs_sq=np.array([1.0, 1.0]), leftover_mass=0.0, m=2)
    assert pml_eval_from_spectrum(spec, 1.0).psi == pytest.approx(math.log(2.0))


@pytest.mark.parametrize("seed", range(10))
def test_direct_matches_dense(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(10, 200))
    n = int(rng.integers(1, min(m, 40) + 1))
    kind = ["tc", "dc", "ss"][seed % 3]
    data = random_system(m, n, seed)
    kernel = make_kernel(kind, n, float(rng.uniform(0.1, 0.95)))
    lam = float(10 ** rng.uniform(-2, 3))
    quad, trace = dense_terms(dense_A(data, kernel), data.y, lam)
    ev = DirectPml(data, kernel).evaluate(lam)
    assert ev.quad == pytest.approx(quad, rel=1e-9)
    assert ev.trace == pytest.approx(trace, rel=1e-9, abs=1e-9 * m)


def test_direct_cap():
    data = random_system(30, 3)
    with pytest.raises(PmlError):
        pml_direct_precompute(data, make_kernel("tc", 3, 0.5), max_m=20)


def test_bad_lambda_and_zero_y():
    data, kernel = tiny_system()
    ev = DirectPml(data, kernel)
    for lam in (0.0, -1.0, float("nan")):
        with pytest.raises(PmlError):
            ev.evaluate(lam)
    with pytest.raises(PmlError):
        make_evaluation(0.0, 1.0, 3, 1.0)


def test_krylov_rank_one_exact():
    rng = np.random.default_rng(0)
    v = rng.standard_normal(30)
    A = np.outer(v, v)
    y = rng.standard_normal(30)
    spec, _ = pml_krylov_precompute(A, y, n_omega=1, k=3)
    for lam in (0.01, 1.0, 100.0):
        quad, trace = dense_terms(A, y, lam)
        ev = pml_eval_from_spectrum(spec, lam)
        assert ev.quad == pytest.approx(quad, rel=1e-10)
        assert ev.trace == pytest.approx(trace, rel=1e-10, abs=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_krylov_saturation(seed):
    rng = np.random.default_rng(seed)
    n = 6
    data = random_system(50, n, seed)
    kernel = make_kernel("tc", n, 0.7)
    A = CompositeOperator.from_data(data, kernel)
    spec, _ = pml_krylov_precompute(A, data.y, n_omega=1, k=8, seed=seed)
    D = dense_A(data, kernel)
    for lam in np.logspace(-1, 3, 5):
        quad, trace = dense_terms(D, data.y, lam)
        ev = pml_eval_from_spectrum(spec, lam)
        assert abs(ev.psi - (math.log(quad) + trace / 50)) <= 1e-7


def test_residual_weights_sum_to_one_and_vanish_at_large_lambda(small_tc):
    data, kernel, A = small_tc
    _, res = pml_krylov_precompute(A, data.y, 1, 4)
    model = residual_trace_precompute(A, res, 3, k_quad=10, seed=5)
    for rule in model.rules_A + model.rules_C:
        assert rule.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert abs(residual_trace_eval(model, 1e12)) <= 1e-6


def test_no_matvecs_after_precompute(small_tc):
    data, kernel, _ = small_tc
    ev = KrylovPml(data, kernel, k=10, n_psi=2)
    before = ev.matvecs
    assert before > 0
    for lam in np.logspace(-1, 6, 200):
        ev.evaluate(lam)
    assert ev.matvecs == before


def test_krylov_close_to_direct_m200():
    data = random_system(200, 30, seed=3)
    kernel = make_kernel("tc", 30, 0.8)
    direct = DirectPml(data, kernel)
    kry = KrylovPml(data, kernel, k=40, n_omega=1, n_psi=3)
    for lam in (0.1, 1.0, 10.0, 1e3):
        assert abs(kry.evaluate(lam).psi - direct.evaluate(lam).psi) <= 1e-4


def test_krylov_eval_without_model_matches_spectrum(small_tc):
    data, _, A = small_tc
    spec, _ = pml_krylov_precompute(A, data.y, 1, 5)
    assert pml_krylov_eval(spec, None, 2.0).psi == pml_eval_from_spectrum(spec, 2.0).psi


def test_krylov_seed_determinism(small_tc):
    data, kernel, _ = small_tc
    a = KrylovPml(data, kernel, k=6, seed=4).evaluate(3.0).psi
    b = KrylovPml(data, kernel, k=6, seed=4).evaluate(3.0).psi
    assert a == b


def test_indirect_counts_grow_per_lambda(small_tc):
    data, kernel, _ = small_tc
    ev = IndirectPml(data, kernel)
    ev.evaluate(1.0)
    c1 = ev.matvecs
    ev.evaluate(2.0)
    assert c1 > 0 and ev.matvecs > c1


def test_custom_dense_kernel():
    data = random_system(20, 4, seed=9)
    L = np.tril(np.random.default_rng(1).standard_normal((4, 4)))
    ev = DirectPml(data, KernelFactor.dense(L)).evaluate(0.5)
    quad, trace = dense_terms(dense_A(data, KernelFactor.dense(L)), data.y, 0.5)
    assert ev.quad == pytest.approx(quad, rel=1e-10)
