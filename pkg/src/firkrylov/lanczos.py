"""Block Lanczos with full reorthogonalization and adaptive deflation.

Also hosts the batched single-vector Lanczos used to build Gauss
quadrature rules for stochastic Lanczos quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .linops import as_matmat

DEFAULT_TAU = 1e-10


class LanczosError(RuntimeError):
    pass


@dataclass
class BlockLanczosResult:
    """Basis ``W`` of a block Krylov space and its block-tridiagonal compression.

    ``blocks_M[i]`` is the i-th diagonal block, ``blocks_N[i]`` the
    subdiagonal block coupling block ``i + 1`` to block ``i`` (shape
    ``block_widths[i+1] x block_widths[i]``).
    """

    W: np.ndarray
    blocks_M: list
    blocks_N: list
    block_widths: list
    breakdown: bool = False
    matvecs: int = 0

    @property
    def r(self):
        return self.W.shape[1]

    @property
    def iterations(self):
        return len(self.blocks_M)

    @cached_property
    def T(self):
        return assemble_tridiagonal(self)

    def truncated(self, k):
        """Factorization after the first ``k`` iterations (a leading section)."""
        k = min(k, self.iterations)
        widths = self.block_widths[:k]
        r = sum(widths)
        return BlockLanczosResult(
            W=self.W[:, :r],
            blocks_M=self.blocks_M[:k],
            blocks_N=self.blocks_N[: k - 1],
            block_widths=widths,
            breakdown=self.breakdown and k == self.iterations,
        )


def _deflated_qr(Y, tau, scale):
    """Pivoted QR of ``Y`` keeping columns whose |R_jj| clears the threshold.

    Returns ``(Q1, N)`` with ``Y ~= Q1 @ N``.  The threshold is ``tau``
    times the larger of the panel's leading |R_00| and ``scale``.
    """
    Q, R, piv = sla.qr(Y, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    if d.size == 0:
        return Q[:, :0], np.zeros((0, Y.shape[1]))
    ok = d >= tau * max(d[0], scale)
    # diag of a column-pivoted R is non-increasing; keep the leading run
    keep = 0 if d[0] == 0 else (d.size if ok.all() else int(np.argmin(ok)))
    N = np.empty((keep, Y.shape[1]))
    N[:, piv] = R[:keep]
    return Q[:, :keep], N


def block_lanczos(A, Z, k, tau=DEFAULT_TAU, reorth_twice=True):
    """Run ``k`` iterations of block Lanczos on symmetric ``A`` from block ``Z``.

    Parameters
    ----------
    A : operator, ndarray or callable
        Symmetric operator; anything :func:`~firkrylov.linops.as_matmat` accepts.
    Z : (m,) or (m, b) ndarray
        Starting block.
    k : int
        Number of block iterations (operator applications on a block).
    tau : float
        Relative deflation tolerance for the pivoted QR panels.
    reorth_twice : bool
        Run a second full reorthogonalization pass.

    Returns
    -------
    BlockLanczosResult
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    matmat = as_matmat(A)
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if not np.all(np.isfinite(Z)):
        raise LanczosError("starting block contains non-finite values")
    if not np.any(Z):
        raise LanczosError("starting block is zero")

    Wi, _ = _deflated_qr(Z, tau, 0.0)
    blocks = [Wi]
    Ms, Ns, widths = [], [], [Wi.shape[1]]
    W_prev = N_cur = None
    breakdown = False
    matvecs = 0
    for i in range(k):
        AW = np.asarray(matmat(Wi), dtype=float).reshape(Wi.shape)
        matvecs += Wi.shape[1]
        if not np.all(np.isfinite(AW)):
            raise LanczosError(f"non-finite operator output at iteration {i + 1}")
        Y = AW.copy()
        if N_cur is not None:
            Y -= W_prev @ N_cur.T
        M = Wi.T @ Y
        M = (M + M.T) / 2
        Y -= Wi @ M
        Ms.append(M)
        if i == k - 1:
            break
        Wall = np.hstack(blocks)
        for _ in range(2 if reorth_twice else 1):
            Y -= Wall @ (Wall.T @ Y)
        scale = float(np.max(np.linalg.norm(AW, axis=0)))
        Q1, N = _deflated_qr(Y, tau, scale)
        if Q1.shape[1] == 0:
            breakdown = True
            break
        if not np.all(np.isfinite(N)):
            raise LanczosError(f"non-finite QR factor at iteration {i + 1}")
        W_prev, N_cur, Wi = Wi, N, Q1
        Ns.append(N)
        blocks.append(Q1)
        widths.append(Q1.shape[1])
    return BlockLanczosResult(
        W=np.hstack(blocks),
        blocks_M=Ms,
        blocks_N=Ns,
        block_widths=widths,
        breakdown=breakdown,
        matvecs=matvecs,
    )


def assemble_tridiagonal(result):
    """Dense symmetric block-tridiagonal matrix ``T`` of a Lanczos run."""
    widths = result.block_widths[: len(result.blocks_M)]
    offs = np.concatenate([[0], np.cumsum(widths)])
    T = np.zeros((offs[-1], offs[-1]))
    for i, M in enumerate(result.blocks_M):
        T[offs[i] : offs[i + 1], offs[i] : offs[i + 1]] = M
    for i, N in enumerate(result.blocks_N[: len(widths) - 1]):
        T[offs[i + 1] : offs[i + 2], offs[i] : offs[i + 1]] = N
        T[offs[i] : offs[i + 1], offs[i + 1] : offs[i + 2]] = N.T
    return T


def eig_sym(T):
    """Eigenpairs of a symmetric matrix, eigenvalues in descending order."""
    T = np.asarray(T, dtype=float)
    T = (T + T.T) / 2
    try:
        vals, vecs = np.linalg.eigh(T)
    except np.linalg.LinAlgError as exc:
        raise LanczosError(f"symmetric eigensolver did not converge: {exc}") from exc
    return vals[::-1], vecs[:, ::-1]


@dataclass
class GaussRule:
    """Gauss quadrature rule for ``v^T f(A) v ~= norm_sq * sum(w * f(nodes))``."""

    nodes: np.ndarray
    weights: np.ndarray
    norm_sq: float

    def integrate(self, f):
        return self.norm_sq * float(np.dot(self.weights, f(self.nodes)))


def lanczos_quadrature(A, V, depth, breakdown_tol=1e-10):
    """Batched single-vector Lanczos (loop-interchange form).

    Runs an independent Lanczos recurrence with full reorthogonalization
    for every column of ``V``; all columns share one operator application
    per step.  Each column's tridiagonal is turned into a Gauss rule
    (nodes = Ritz values, weights = squared first eigenvector components).
    A column that breaks down stops at its current depth, where its rule
    is exact.

    Returns
    -------
    list of GaussRule, one per column of ``V``.
    """
    matmat = as_matmat(A)
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    m, p = V.shape
    depth = int(min(depth, m))
    norms = np.linalg.norm(V, axis=0)
    if np.any(norms == 0):
        raise LanczosError("zero starting vector")
    Qs = np.zeros((depth, m, p))
    alpha = np.zeros((depth, p))
    beta = np.zeros((depth, p))
    active = np.ones(p, dtype=bool)
    length = np.zeros(p, dtype=int)
    scale = np.zeros(p)
    q = V / norms
    for j in range(depth):
        Qs[j] = q * active
        length[active] += 1
        w = np.asarray(matmat(Qs[j]), dtype=float).reshape(m, p)
        if not np.all(np.isfinite(w)):
            raise LanczosError(f"non-finite operator output at quadrature step {j + 1}")
        scale = np.maximum(scale, np.linalg.norm(w, axis=0))
        a = np.einsum("mp,mp->p", Qs[j], w)
        alpha[j] = a * active
        if j == depth - 1:
            break
        w = w - Qs[j] * a
        if j > 0:
            w = w - Qs[j - 1] * beta[j - 1]
        for _ in range(2):
            c = np.einsum("jmp,mp->jp", Qs[: j + 1], w)
            w = w - np.einsum("jmp,jp->mp", Qs[: j + 1], c)
        b = np.linalg.norm(w, axis=0)
        done = b <= breakdown_tol * np.maximum(scale, np.finfo(float).tiny)
        active &= ~done
        if not active.any():
            break
        beta[j] = np.where(active, b, 0.0)
        q = np.where(active, w / np.where(b > 0, b, 1.0), 0.0)

    rules = []
    for c in range(p):
        L = length[c]
        T = np.diag(alpha[:L, c]) + np.diag(beta[: L - 1, c], 1) + np.diag(beta[: L - 1, c], -1)
        vals, vecs = np.linalg.eigh(T)
        rules.append(GaussRule(nodes=vals, weights=vecs[0] ** 2, norm_sq=float(norms[c] ** 2)))
    return rules
