"""Evaluators of the profile marginal likelihood (PML) criterion.

    psi(lam, beta) = log(y^T (lam I + A)^-1 y) + Tr log(lam I + A) / m

Every evaluator reduces the work for one ``beta`` to a spectrum
(``PmlSpectrum``): pairs ``(theta_i, ytilde_i^2)`` plus leftover mass
``c0``, from which any ``lam`` costs O(r) and no operator applications:

    quad  = c0 / lam + sum ytilde_i^2 / (theta_i + lam)
    trace = (m - r) log lam + sum log(theta_i + lam)

The direct spectrum comes from an SVD of ``Phi L``; the Krylov spectrum
from one block Lanczos run on the augmented block ``[y, Omega]``,
optionally corrected by a stochastic estimate of the trace residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lanczos import DEFAULT_TAU, block_lanczos, eig_sym, lanczos_quadrature
from .linops import ToeplitzOperator, as_matmat

DIRECT_MAX_M = 20000
DEFAULT_K_QUAD = 25


class PmlError(ValueError):
    pass


@dataclass(frozen=True)
class PmlSpectrum:
    thetas: np.ndarray
    y_coeffs_sq: np.ndarray
    leftover_mass: float
    m: int

    @property
    def r(self):
        return len(self.thetas)


@dataclass(frozen=True)
class PmlEvaluation:
    psi: float
    quad_term: float
    trace_term: float
    nu_star: float
    lam: float
    beta: float | None = None
    quad: float = float("nan")
    trace: float = float("nan")


def _check_lambda(lam):
    if not lam > 0:
        raise PmlError(f"lambda must be positive, got {lam!r}")


def make_evaluation(quad, trace, m, lam, beta=None):
    if not quad > 0:
        raise PmlError("quadratic form is not positive (is y zero?)")
    qt = float(np.log(quad))
    tt = float(trace / m)
    return PmlEvaluation(
        psi=qt + tt, quad_term=qt, trace_term=tt, nu_star=float(quad / m),
        lam=float(lam), beta=beta, quad=float(quad), trace=float(trace),
    )


def spectrum_terms(spec, lam):
    """``(quad, trace)`` of a spectrum at one ``lam``."""
    _check_lambda(lam)
    shifted = spec.thetas + lam
    quad = spec.leftover_mass / lam + float(np.sum(spec.y_coeffs_sq / shifted))
    trace = (spec.m - spec.r) * np.log(lam) + float(np.sum(np.log(shifted)))
    return quad, trace


def pml_eval_from_spectrum(spec, lam, beta=None):
    quad, trace = spectrum_terms(spec, lam)
    return make_evaluation(quad, trace, spec.m, lam, beta)


# -- direct -------------------------------------------------------------


def pml_direct_precompute(data, kernel, max_m=DIRECT_MAX_M):
    """Spectrum from the economy SVD of ``Phi L`` (O(m n^2) time, O(m n) memory)."""
    if data.m > max_m:
        raise PmlError(
            f"m={data.m} exceeds the direct evaluator cap {max_m}; use the Krylov evaluator"
        )
    phi = ToeplitzOperator(data.u, data.n)
    F = phi.apply(kernel.to_dense())
    U, s, _ = np.linalg.svd(F, full_matrices=False)
    yt = U.T @ data.y
    c0 = max(float(data.y @ data.y - yt @ yt), 0.0)
    return PmlSpectrum(thetas=s**2, y_coeffs_sq=yt**2, leftover_mass=c0, m=data.m)


# -- Krylov-augmented ---------------------------------------------------


def pml_krylov_precompute(A, y, n_omega, k, seed=0, tau=DEFAULT_TAU):
    """One augmented block Lanczos run; returns ``(spectrum, lanczos_result)``.

    ``Omega`` is ``n_omega`` standard Gaussian columns from
    ``numpy.random.default_rng(seed)`` (PCG64).
    """
    y = np.asarray(y, dtype=float)
    m = len(y)
    if n_omega < 0:
        raise ValueError("n_omega must be non-negative")
    rng = np.random.default_rng(seed)
    Z = np.column_stack([y, rng.standard_normal((m, n_omega))])
    res = block_lanczos(A, Z, k, tau=tau)
    vals, V = eig_sym(res.T)
    yt = V.T @ (res.W.T @ y)
    # Ritz values of a PSD operator: negatives are roundoff
    thetas = np.maximum(vals, 0.0)
    return PmlSpectrum(thetas=thetas, y_coeffs_sq=yt**2, leftover_mass=0.0, m=m), res


@dataclass(frozen=True)
class ResidualTraceModel:
    """Paired Gauss rules per probe for ``psi^T log(lam I + .) psi``.

    ``rules_A[i]`` comes from Lanczos on ``A``, ``rules_C[i]`` from Lanczos
    on the compression ``W T W^T``; both start at probe ``i`` with the same
    depth ``k_quad``.
    """

    rules_A: tuple
    rules_C: tuple
    k_quad: int

    @property
    def n_psi(self):
        return len(self.rules_A)


def residual_trace_precompute(A, lanczos_result, n_psi, k_quad=DEFAULT_K_QUAD, seed=1, probes=None):
    """Build the per-probe quadrature rules used by :func:`residual_trace_eval`."""
    if n_psi < 1:
        raise ValueError("n_psi must be at least 1")
    W, T = lanczos_result.W, lanczos_result.T
    m = W.shape[0]
    if probes is None:
        probes = np.random.default_rng(seed).standard_normal((m, n_psi))
    probes = np.asarray(probes, dtype=float).reshape(m, -1)
    rules_A = lanczos_quadrature(as_matmat(A), probes, k_quad)
    rules_C = lanczos_quadrature(lambda X: W @ (T @ (W.T @ X)), probes, k_quad)
    for rule in rules_A + rules_C:
        np.maximum(rule.nodes, 0.0, out=rule.nodes)
    return ResidualTraceModel(rules_A=tuple(rules_A), rules_C=tuple(rules_C), k_quad=k_quad)


def residual_trace_eval(model, lam):
    """Hutchinson estimate of ``Tr(log(lam I + A) - log(lam I + W T W^T))``."""
    _check_lambda(lam)
    total = 0.0
    for ra, rc in zip(model.rules_A, model.rules_C):
        total += ra.norm_sq * (
            float(np.dot(ra.weights, np.log(lam + ra.nodes)))
            - float(np.dot(rc.weights, np.log(lam + rc.nodes)))
        )
    return total / model.n_psi


def pml_krylov_eval(spec, model, lam, beta=None):
    quad, trace = spectrum_terms(spec, lam)
    if model is not None:
        trace += residual_trace_eval(model, lam)
    return make_evaluation(quad, trace, spec.m, lam, beta)
