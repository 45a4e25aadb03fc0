import numpy as np
import pytest

from firkrylov.estimate import EstimateError, FirEstimate, fit_metric, posterior_mean
from firkrylov.kernels import make_kernel
from firkrylov.linops import ToeplitzOperator

from conftest import random_system

# m=3, n=2 system solved exactly: theta_hat = (-20/77, -13/77)
TINY_THETA = (-0.25974025974025974026, -0.16883116883116883117)


def test_tiny_system_frozen():
    phi = ToeplitzOperator([1.0, 2.0, 3.0], 2)
    th = posterior_mean(phi, make_kernel("tc", 2, 0.5), np.array([1.0, 0.0, -1.0]), 1.0)
    np.testing.assert_allclose(th, TINY_THETA, rtol=1e-9)


def test_zero_output_gives_zero():
    phi = ToeplitzOperator(np.ones(10), 3)
    assert not np.any(posterior_mean(phi, make_kernel("tc", 3, 0.5), np.zeros(10), 1.0))


def test_matches_dense_formula():
    data = random_system(80, 12, seed=3)
    kf = make_kernel("dc", 12, 0.7)
    phi = ToeplitzOperator(data.u, 12)
    P, K = phi.to_dense(), kf.to_dense() @ kf.to_dense().T
    lam = 0.7
    ref = K @ P.T @ np.linalg.solve(lam * np.eye(80) + P @ K @ P.T, data.y)
    np.testing.assert_allclose(posterior_mean(phi, kf, data.y, lam), ref, rtol=1e-7, atol=1e-10)


def test_linear_in_y():
    data = random_system(50, 8, seed=4)
    phi, kf = ToeplitzOperator(data.u, 8), make_kernel("tc", 8, 0.8)
    y2 = np.random.default_rng(0).standard_normal(50)
    a = posterior_mean(phi, kf, data.y, 2.0)
    b = posterior_mean(phi, kf, y2, 2.0)
    c = posterior_mean(phi, kf, 2 * data.y - 3 * y2, 2.0)
    np.testing.assert_allclose(c, 2 * a - 3 * b, rtol=1e-7, atol=1e-9)


def test_shrinks_at_large_lambda():
    data = random_system(50, 8, seed=5)
    phi, kf = ToeplitzOperator(data.u, 8), make_kernel("tc", 8, 0.8)
    norms = [np.linalg.norm(posterior_mean(phi, kf, data.y, lam)) for lam in (1e2, 1e4, 1e6)]
    assert norms[0] > norms[1] > norms[2]
    assert norms[2] <= 1e-3


def test_bad_inputs():
    phi, kf = ToeplitzOperator(np.ones(5), 2), make_kernel("tc", 2, 0.5)
    with pytest.raises(ValueError):
        posterior_mean(phi, kf, np.ones(5), 0.0)
    with pytest.raises(ValueError):
        posterior_mean(phi, kf, np.ones(4), 1.0)
    with pytest.raises(EstimateError):
        posterior_mean(phi, kf, np.arange(5.0), 1e-12, maxiter=1)


def test_fit_anchors():
    th = np.array([1.0, 3.0])
    assert fit_metric(th, th) == 100.0
    assert fit_metric(np.full(2, 2.0), th) == pytest.approx(0.0, abs=1e-12)
    # |(0, 2)| / |(-1, 1)| = sqrt(2)
    assert fit_metric(np.array([1.0, 1.0]), th) == pytest.approx(-41.421356237309504880, rel=1e-14)
    with pytest.raises(ValueError):
        fit_metric(np.ones(2), np.ones(2))
    with pytest.raises(ValueError):
        fit_metric(np.ones(3), th)


def test_estimate_record():
    est = FirEstimate.build(np.array([1.0, 2.0]), 0.5, 4.0, 0.3, np.array([1.0, 3.0]))
    assert est.sigma2_star == 2.0
    assert est.to_dict()["theta_hat"] == [1.0, 2.0]
    with pytest.raises(EstimateError):
        FirEstimate.build(np.array([np.nan]), 0.5, 4.0, 0.3)
