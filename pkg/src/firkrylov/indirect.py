"""Indirect PML evaluation: LSQR + Nystrom preconditioning + stochastic trace.

With ``F = Phi L`` (m x n) and ``H = F^T F``:

* the quadratic form uses ``y^T (lam I + F F^T)^-1 y = min_x (|F x - y|^2
  + lam |x|^2) / lam``, solved by right-preconditioned LSQR;
* ``Tr log(lam I + A) = Tr log(lam I + H) + (m - n) log lam`` and
  ``Tr log(lam I + H) = Tr log M + Tr log P`` with
  ``M = P^-1/2 (lam I + H) P^-1/2``; ``Tr log P`` is closed form and
  ``Tr log M = n log c + Tr log(I - X)``, ``X = I - M / c``, is estimated
  by Girard-Hutchinson on the truncated Mercator series
  ``log(I - X) = -sum_k X^k / k``.

Nothing is cached across ``lam``: each call redoes the sketch, the solve
and the trace estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, lsqr

from .lanczos import lanczos_quadrature
from .pml import make_evaluation


class IndirectError(RuntimeError):
    pass


@dataclass
class IndirectConfig:
    nystrom_rank: int = 50
    lsqr_tol: float = 1e-8
    lsqr_maxit: int = 2000
    gh_probes: int = 20
    mercator_tol: float = 1e-8
    mercator_maxit: int = 2000
    lanczos_depth: int = 15
    adaptive_rank: bool = True
    seed: int = 0


@dataclass(frozen=True)
class IndirectResult:
    quad: float
    trace: float
    lsqr_iterations: int
    mercator_terms: int
    spectral_radius: float
    nystrom_rank: int = 0


@dataclass(frozen=True)
class NystromApprox:
    U: np.ndarray
    eigvals: np.ndarray


def nystrom(matmat, n, rank, rng):
    """Randomized Nystrom approximation ``U diag(eigvals) U^T`` of a PSD operator.

    Uses the shifted, numerically stable variant: sketch ``Y = H Omega``,
    shift by ``eps * |Y|``, Cholesky of the core, SVD, unshift.
    """
    rank = int(min(rank, n))
    Omega = np.linalg.qr(rng.standard_normal((n, rank)))[0]
    Y = matmat(Omega)
    nrm = np.linalg.norm(Y)
    if nrm == 0:
        return NystromApprox(np.zeros((n, 0)), np.zeros(0))
    shift = np.sqrt(n) * np.finfo(float).eps * nrm
    Ys = Y + shift * Omega
    core = Omega.T @ Ys
    try:
        C = sla.cholesky((core + core.T) / 2, lower=False)
        B = sla.solve_triangular(C, Ys.T, trans="T", lower=False).T
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh((core + core.T) / 2)
        keep = w > w.max() * 1e-14
        B = Ys @ (V[:, keep] / np.sqrt(w[keep]))
    U, s, _ = np.linalg.svd(B, full_matrices=False)
    lam = np.maximum(s**2 - shift, 0.0)
    keep = lam > 0
    return NystromApprox(U[:, keep], lam[keep])


def _preconditioner(F, Ft, n, lam, rank, depth, rng):
    """Nystrom preconditioner pieces and a spectral interval of ``M``."""
    ny = nystrom(lambda X: Ft(F(X)), n, rank, rng)
    U, lhat = ny.U, ny.eigvals
    cscale = (lhat[-1] if lhat.size else 0.0) + lam
    # P^-1 = cscale U (Lhat + lam)^-1 U^T + (I - U U^T)
    root = np.sqrt(cscale / (lhat + lam)) - 1.0

    def pinv_half(X):
        X = np.asarray(X, dtype=float)
        c = U.T @ X
        return X + U @ (root[:, None] * c if X.ndim == 2 else root * c)

    def M(X):
        V = pinv_half(X)
        return pinv_half(lam * V + Ft(F(V)))

    # M is SPD with spectrum in [lam, ~cscale]; Lanczos sharpens the top end
    rule = lanczos_quadrature(M, rng.standard_normal(n), min(depth, n))[0]
    top = float(rule.nodes.max()) * 1.05
    low = min(max(float(rule.nodes.min()) / 1.05, lam), top)
    return pinv_half, M, lhat, cscale, top, low


def indirect_terms(A, y, lam, cfg=None):
    """Indirect estimate of ``(quad, trace)`` at one ``lam``, with diagnostics.

    The Mercator series is centred on the estimated spectral interval
    ``[low, top]`` of the preconditioned matrix, so its contraction factor
    is ``(top - low) / (top + low)``.  With ``cfg.adaptive_rank`` the
    Nystrom rank doubles (up to ``n``) until the predicted number of series
    terms fits in ``cfg.mercator_maxit``.

    Parameters
    ----------
    A : CompositeOperator
        Supplies the factor ``Phi L`` and its transpose; only
        ``A.factor_count`` is advanced.
    y : (m,) ndarray
    lam : float
    cfg : IndirectConfig

    Returns
    -------
    IndirectResult
    """
    cfg = cfg or IndirectConfig()
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam!r}")
    y = np.asarray(y, dtype=float)
    m, n = A.m, A.n
    rng = np.random.default_rng(cfg.seed)
    F, Ft = A.apply_factor, A.apply_factor_t

    rank = min(cfg.nystrom_rank, n)
    while True:
        pinv_half, M, lhat, cscale, top, low = _preconditioner(
            F, Ft, n, lam, rank, cfg.lanczos_depth, rng)
        radius = (top - low) / (top + low)
        needed = np.log(cfg.mercator_tol) / np.log(radius) if 0 < radius < 1 else 1.0
        if needed <= cfg.mercator_maxit or rank >= n or not cfg.adaptive_rank:
            break
        rank = min(2 * rank, n)
    if radius >= 1 or needed > cfg.mercator_maxit:
        raise IndirectError(
            f"Mercator series would not converge (spectral radius estimate {radius:.4f}, "
            f"nystrom_rank {rank}); increase nystrom_rank"
        )
    center = (top + low) / 2

    # -- quadratic form ------------------------------------------------
    sl = np.sqrt(lam)

    def aug_mv(z):
        x = pinv_half(z)
        return np.concatenate([F(x), sl * x])

    def aug_rmv(w):
        return pinv_half(Ft(w[:m]) + sl * w[m:])

    aug = LinearOperator((m + n, n), matvec=aug_mv, rmatvec=aug_rmv, dtype=float)
    out = lsqr(aug, np.concatenate([y, np.zeros(n)]), atol=cfg.lsqr_tol, btol=cfg.lsqr_tol,
               iter_lim=cfg.lsqr_maxit)
    z, istop, itn, r1norm = out[0], out[1], out[2], out[3]
    if istop == 7:
        raise IndirectError(f"LSQR hit {cfg.lsqr_maxit} iterations, residual {r1norm:.3e}")
    x = pinv_half(z)
    resid = F(x) - y
    quad = (resid @ resid + lam * (x @ x)) / lam

    # -- trace ----------------------------------------------------------
    # small n: the identity columns give the trace exactly; otherwise
    # Gaussian directions rescaled to norm sqrt(n) (unbiased, exact on c*I)
    if n <= cfg.gh_probes:
        G, weight = np.eye(n), 1.0
    else:
        G = rng.standard_normal((n, cfg.gh_probes))
        G *= np.sqrt(n) / np.linalg.norm(G, axis=0)
        weight = 1.0 / cfg.gh_probes
    V = G
    series = 0.0
    for kterm in range(1, cfg.mercator_maxit + 1):
        V = V - M(V) / center
        term = weight * float(np.einsum("ij,ij->", G, V)) / kterm
        series += term
        if abs(term) <= cfg.mercator_tol * max(1.0, abs(series)):
            break
    else:
        raise IndirectError(
            f"Mercator series not converged after {cfg.mercator_maxit} terms "
            f"(spectral radius estimate {radius:.4f}); increase nystrom_rank"
        )
    trlog_M = n * np.log(center) - series
    trlog_P = float(np.sum(np.log((lhat + lam) / cscale)))
    trace = trlog_M + trlog_P + (m - n) * np.log(lam)
    return IndirectResult(quad=float(quad), trace=float(trace), lsqr_iterations=int(itn),
                          mercator_terms=kterm, spectral_radius=float(radius), nystrom_rank=rank)


def pml_indirect_eval(A, y, lam, cfg=None, beta=None):
    """PML criterion at one ``lam`` via :func:`indirect_terms`."""
    res = indirect_terms(A, y, lam, cfg)
    return make_evaluation(res.quad, res.trace, A.m, lam, beta)
