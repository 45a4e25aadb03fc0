"""Posterior-mean FIR estimate, noise variance and the fit score."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .linops import CompositeOperator

CG_RTOL = 1e-10


class EstimateError(RuntimeError):
    pass


@dataclass
class FirEstimate:
    theta_hat: np.ndarray
    nu_star: float
    sigma2_star: float
    lambda_star: float
    beta_star: float
    fit: float | None = None

    def __post_init__(self):
        self.theta_hat = np.asarray(self.theta_hat, dtype=float)
        vals = [self.nu_star, self.sigma2_star, self.lambda_star, self.beta_star]
        if not (np.all(np.isfinite(self.theta_hat)) and np.all(np.isfinite(vals))):
            raise EstimateError("estimate contains non-finite values")

    @classmethod
    def build(cls, theta_hat, nu_star, lambda_star, beta_star, theta_true=None):
        fit = None if theta_true is None else fit_metric(theta_hat, theta_true)
        return cls(theta_hat, float(nu_star), float(lambda_star * nu_star),
                   float(lambda_star), float(beta_star), fit)

    def to_dict(self):
        d = asdict(self)
        d["theta_hat"] = self.theta_hat.tolist()
        return d


def posterior_mean(phi, kernel, y, lam, rtol=CG_RTOL, maxiter=None):
    """``K Phi^T (lam I + A)^-1 y`` with the solve done by CG.

    Parameters
    ----------
    phi : ToeplitzOperator
    kernel : KernelFactor
    y : (m,) ndarray
    lam : float
        Positive regularization ``sigma^2 / nu``.
    rtol : float
        Relative residual target for CG.
    maxiter : int, optional
        Defaults to ``10 * m``.

    Returns
    -------
    (n,) ndarray
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam!r}")
    y = np.asarray(y, dtype=float)
    m = phi.m
    if y.shape != (m,):
        raise ValueError(f"y must have length {m}")
    if not np.any(y):
        return np.zeros(phi.n)
    A = CompositeOperator(phi, kernel)
    shifted = LinearOperator((m, m), matvec=lambda x: lam * x + A.apply(x), dtype=float)
    maxiter = maxiter or 10 * m
    x, info = cg(shifted, y, rtol=rtol, atol=0.0, maxiter=maxiter)
    if info != 0:
        res = np.linalg.norm(y - shifted.matvec(x)) / np.linalg.norm(y)
        raise EstimateError(f"CG did not converge in {maxiter} iterations (relative residual {res:.3e})")
    return kernel.apply_K(phi.apply_transpose(x))


def fit_metric(theta_hat, theta_true):
    """``100 (1 - |theta_hat - theta| / |theta - mean(theta)|)``."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    theta_true = np.asarray(theta_true, dtype=float)
    if theta_hat.shape != theta_true.shape:
        raise ValueError("theta_hat and theta_true differ in length")
    denom = np.linalg.norm(theta_true - theta_true.mean())
    if denom == 0:
        raise ValueError("fit is undefined for a constant true impulse response")
    return float(100.0 * (1.0 - np.linalg.norm(theta_hat - theta_true) / denom))
