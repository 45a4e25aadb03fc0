"""Structured Cholesky factors of FIR prior kernels.

Every kernel here is applied through its lower Cholesky factor ``L``
(``K = L @ L.T``).  The TC, DC and SS factors are lower quasiseparable::

    L[i, j] = sum_r P[i, r] * poles[r] ** (i - j - 1) * Q[j, r]    (i > j)
    L[i, i] = diag[i]

with constant poles, so ``L @ x`` and ``L.T @ x`` reduce to first-order
recursive filters (``scipy.signal.lfilter``) and cost O(n) per column.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

KINDS = ("tc", "dc", "ss", "dense")

DC_DEFAULT_RHO = 0.9
DC_DEFAULT_C = 1.0


def _check_open_unit(name, value):
    if not (0.0 < value < 1.0):
        raise ValueError(f"{name} must lie in (0, 1), got {value!r}")


def kernel_matrix(kind, n, beta=None, rho=DC_DEFAULT_RHO, c=DC_DEFAULT_C):
    """Dense kernel matrix ``K(beta)`` (1-based index formulas), O(n^2)."""
    kind = kind.lower()
    idx = np.arange(1, n + 1, dtype=float)
    i, j = np.meshgrid(idx, idx, indexing="ij")
    mx = np.maximum(i, j)
    if kind == "tc":
        _check_open_unit("beta", beta)
        return beta**mx
    if kind == "dc":
        _check_open_unit("beta", beta)
        if not (-1.0 < rho < 1.0):
            raise ValueError(f"rho must lie in (-1, 1), got {rho!r}")
        if c <= 0:
            raise ValueError(f"c must be positive, got {c!r}")
        return c * beta ** ((i + j) / 2) * rho ** np.abs(i - j)
    if kind == "ss":
        _check_open_unit("beta", beta)
        return beta ** (i + j + mx) / 2 - beta ** (3 * mx) / 6
    raise ValueError(f"unknown kernel kind {kind!r}")


def _ss_generators(n, beta):
    """Scaled generators of the SS Cholesky factor.

    For i >= j the SS kernel is ``u_i . v_j`` with ``u_i = E_i a``,
    ``E_i = diag(beta^(2i), beta^(3i))``, ``a = (1/2, -1/6)`` and
    ``v_j = (beta^j, 1)``.  The factor is ``L[i, j] = a . D^(i-j) c_j``
    with ``D = diag(beta^2, beta^3)``; ``c_j`` and the running Gram matrix
    are carried in the scaled frame so nothing overflows for large n.
    """
    a1, a2 = 0.5, -1.0 / 6.0
    p2, p3 = beta**2, beta**3
    diag = np.zeros(n)
    cvec = np.zeros((n, 2))
    s11 = s12 = s22 = 0.0
    b3 = 1.0
    for j in range(n):
        b3 *= p3
        # D S D
        h11, h12, h22 = p2 * p2 * s11, p2 * p3 * s12, p3 * p3 * s22
        ha1 = h11 * a1 + h12 * a2
        ha2 = h12 * a1 + h22 * a2
        d2 = b3 / 3.0 - (a1 * ha1 + a2 * ha2)
        if d2 <= 0.0 or b3 == 0.0:
            # numerically exhausted: remaining prior mass is below roundoff
            s11, s12, s22 = h11, h12, h22
            continue
        d = np.sqrt(d2)
        c1 = (b3 - ha1) / d
        c2 = (b3 - ha2) / d
        diag[j] = d
        cvec[j] = c1, c2
        s11, s12, s22 = h11 + c1 * c1, h12 + c1 * c2, h22 + c2 * c2
    P = np.tile([a1 * p2, a2 * p3], (n, 1))
    return diag, P, cvec, np.array([p2, p3])


@dataclass
class KernelFactor:
    """Lower Cholesky factor of a kernel matrix, applied matrix-free.

    Use the constructors :meth:`tc`, :meth:`dc`, :meth:`ss` and
    :meth:`dense` rather than the raw initializer.  ``op_count`` tallies
    scalar recurrence steps and element-wise updates performed by
    :meth:`apply_L` / :meth:`apply_Lt`.
    """

    kind: str
    n: int
    params: dict
    diag: np.ndarray | None = None
    P: np.ndarray | None = None
    Q: np.ndarray | None = None
    poles: np.ndarray | None = None
    dense_L: np.ndarray | None = None
    op_count: int = field(default=0, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    # -- constructors --------------------------------------------------
    @classmethod
    def tc(cls, n, beta):
        """TC kernel ``beta^max(i,j)``: a DC kernel with ``c = 1, rho = sqrt(beta)``."""
        _check_open_unit("beta", beta)
        kf = cls._dc_like(n, beta, np.sqrt(beta), 1.0)
        kf.kind, kf.params = "tc", {"beta": float(beta)}
        return kf

    @classmethod
    def dc(cls, n, beta, rho=DC_DEFAULT_RHO, c=DC_DEFAULT_C):
        _check_open_unit("beta", beta)
        if not (-1.0 < rho < 1.0):
            raise ValueError(f"rho must lie in (-1, 1), got {rho!r}")
        if c <= 0:
            raise ValueError(f"c must be positive, got {c!r}")
        return cls._dc_like(n, beta, rho, c)

    @classmethod
    def _dc_like(cls, n, beta, rho, c):
        _check_n(n)
        # K = diag(sig) R diag(sig), R = AR(1) correlation rho^|i-j|
        # chol(R)[i, j] = rho^(i-j) * s_j with s_1 = 1, s_j = sqrt(1 - rho^2)
        idx = np.arange(1, n + 1)
        sig = np.sqrt(c) * beta ** (idx / 2.0)
        s = np.full(n, np.sqrt(1.0 - rho * rho))
        s[0] = 1.0
        return cls(
            kind="dc",
            n=n,
            params={"beta": float(beta), "rho": float(rho), "c": float(c)},
            diag=sig * s,
            P=(sig * rho)[:, None],
            Q=s[:, None],
            poles=np.array([rho]),
        )

    @classmethod
    def ss(cls, n, beta):
        _check_open_unit("beta", beta)
        _check_n(n)
        diag, P, Q, poles = _ss_generators(n, beta)
        return cls(kind="ss", n=n, params={"beta": float(beta)}, diag=diag, P=P, Q=Q, poles=poles)

    @classmethod
    def dense(cls, L):
        L = np.asarray(L, dtype=float)
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise ValueError("dense factor must be square")
        if not np.all(np.isfinite(L)):
            raise ValueError("dense factor has non-finite entries")
        if np.any(np.triu(L, 1) != 0):
            raise ValueError("dense factor must be lower triangular")
        return cls(kind="dense", n=L.shape[0], params={}, dense_L=L)

    # -- application ---------------------------------------------------
    def _tick(self, k):
        with self._lock:
            self.op_count += int(k)

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[0] != self.n:
            raise ValueError(f"expected {self.n} rows, got {X.shape[0]}")
        if not np.all(np.isfinite(X)):
            raise ValueError("input contains non-finite values")
        return X

    def apply_L(self, X):
        """Return ``L @ X`` for ``X`` with ``n`` rows (vector or matrix)."""
        X = self._check(X)
        if self.kind == "dense":
            self._tick(self.n * self.n * _ncols(X))
            return self.dense_L @ X
        diag = self.diag if X.ndim == 1 else self.diag[:, None]
        out = diag * X
        for r, pole in enumerate(self.poles):
            q = self.Q[:, r] if X.ndim == 1 else self.Q[:, r, None]
            p = self.P[:, r] if X.ndim == 1 else self.P[:, r, None]
            h = lfilter([1.0], [1.0, -pole], q * X, axis=0)
            out[1:] += p[1:] * h[:-1]
        self._tick(self.n * _ncols(X) * (1 + 4 * len(self.poles)))
        return out

    def apply_Lt(self, X):
        """Return ``L.T @ X``."""
        X = self._check(X)
        if self.kind == "dense":
            self._tick(self.n * self.n * _ncols(X))
            return self.dense_L.T @ X
        diag = self.diag if X.ndim == 1 else self.diag[:, None]
        out = diag * X
        for r, pole in enumerate(self.poles):
            q = self.Q[:, r] if X.ndim == 1 else self.Q[:, r, None]
            p = self.P[:, r] if X.ndim == 1 else self.P[:, r, None]
            g = lfilter([1.0], [1.0, -pole], (p * X)[::-1], axis=0)[::-1]
            out[:-1] += q[:-1] * g[1:]
        self._tick(self.n * _ncols(X) * (1 + 4 * len(self.poles)))
        return out

    def apply_K(self, X):
        return self.apply_L(self.apply_Lt(X))

    def to_dense(self):
        """Dense ``L`` (O(n^2) memory; for oracles and the direct evaluator)."""
        if self.kind == "dense":
            return self.dense_L.copy()
        return self.apply_L(np.eye(self.n))


def _check_n(n):
    if int(n) != n or n < 1:
        raise ValueError(f"kernel order must be a positive integer, got {n!r}")


def _ncols(X):
    return 1 if X.ndim == 1 else X.shape[1]


def make_kernel(kind, n, beta, **params):
    """Factory keyed by kind name (``tc``, ``dc``, ``ss``)."""
    kind = kind.lower()
    if kind == "tc":
        return KernelFactor.tc(n, beta)
    if kind == "dc":
        return KernelFactor.dc(n, beta, **params)
    if kind == "ss":
        return KernelFactor.ss(n, beta)
    raise ValueError(f"unknown kernel kind {kind!r}; expected one of tc, dc, ss")
