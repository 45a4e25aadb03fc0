"""Matrix-free operators for the FIR regression model.

``ToeplitzOperator`` is the regressor matrix ``Phi`` with
``Phi[i, j] = u[i - j]`` for ``i > j`` (1-based) and zero otherwise,
applied by zero-padded FFT convolution.  ``CompositeOperator`` is the
PSD matrix ``A = Phi L L^T Phi^T`` built from a ``Phi`` and a kernel factor.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy.sparse.linalg import LinearOperator

from .kernels import KernelFactor

DENSE_CAP = 2000


@dataclass
class SystemData:
    """Input/output record ``(u, y)`` with FIR order ``n``."""

    u: np.ndarray
    y: np.ndarray
    n: int
    theta_true: np.ndarray | None = None

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.u.ndim != 1 or self.y.ndim != 1:
            raise ValueError("u and y must be one-dimensional")
        if len(self.u) != len(self.y):
            raise ValueError(f"len(u)={len(self.u)} differs from len(y)={len(self.y)}")
        if int(self.n) != self.n or not 1 <= self.n <= len(self.u):
            raise ValueError(f"need 1 <= n <= m, got n={self.n}, m={len(self.u)}")
        self.n = int(self.n)
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.y))):
            raise ValueError("signals contain non-finite values")
        if self.theta_true is not None:
            self.theta_true = np.asarray(self.theta_true, dtype=float)
            if self.theta_true.shape != (self.n,):
                raise ValueError("theta_true must have length n")

    @property
    def m(self):
        return len(self.u)


def _next_pow2(k):
    return 1 << max(0, int(k - 1).bit_length())


def _finite(X, what="input"):
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{what} contains non-finite values")
    return X


class ToeplitzOperator:
    """Strictly lower-triangular Toeplitz matrix ``Phi`` (m x n) of an input ``u``."""

    def __init__(self, u, n):
        u = _finite(u, "u")
        if u.ndim != 1:
            raise ValueError("u must be one-dimensional")
        m = len(u)
        if int(n) != n or not 1 <= n <= m:
            raise ValueError(f"need 1 <= n <= m, got n={n}, m={m}")
        self.u = u
        self.m, self.n = m, int(n)
        self.nfft = _next_pow2(m + self.n - 1)
        # only u_1..u_{m-1} ever appear in Phi
        self.u_hat = sfft.rfft(u[: m - 1], self.nfft) if m > 1 else None

    @property
    def shape(self):
        return (self.m, self.n)

    def apply(self, X):
        """``Phi @ X`` for ``X`` with ``n`` rows."""
        X = _finite(X)
        if X.shape[0] != self.n:
            raise ValueError(f"expected {self.n} rows, got {X.shape[0]}")
        out = np.zeros((self.m,) + X.shape[1:])
        if self.m == 1:
            return out
        uh = self.u_hat if X.ndim == 1 else self.u_hat[:, None]
        conv = sfft.irfft(uh * sfft.rfft(X, self.nfft, axis=0), self.nfft, axis=0)
        out[1:] = conv[: self.m - 1]
        return out

    def apply_transpose(self, Z):
        """``Phi.T @ Z`` for ``Z`` with ``m`` rows."""
        Z = _finite(Z)
        if Z.shape[0] != self.m:
            raise ValueError(f"expected {self.m} rows, got {Z.shape[0]}")
        if self.m == 1:
            return np.zeros((self.n,) + Z.shape[1:])
        uh = np.conj(self.u_hat if Z.ndim == 1 else self.u_hat[:, None])
        corr = sfft.irfft(uh * sfft.rfft(Z[1:], self.nfft, axis=0), self.nfft, axis=0)
        return corr[: self.n]

    def to_dense(self):
        m, n = self.shape
        i, j = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
        lag = i - j - 1
        D = np.zeros((m, n))
        mask = lag >= 0
        D[mask] = self.u[lag[mask]]
        return D


def toeplitz_apply(op, X):
    return op.apply(X)


def toeplitz_apply_transpose(op, Z):
    return op.apply_transpose(Z)


@dataclass
class CompositeOperator:
    """``A = Phi L L^T Phi^T`` with per-column application counters.

    ``matvec_count`` counts columns pushed through :meth:`apply`.
    ``factor_count`` counts columns pushed through the factor
    ``Phi L`` or its transpose (used by the indirect evaluator); it never
    touches ``matvec_count``.
    """

    phi: ToeplitzOperator
    kernel: KernelFactor
    matvec_count: int = field(default=0, compare=False)
    factor_count: int = field(default=0, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        if self.phi.n != self.kernel.n:
            raise ValueError(f"Phi has {self.phi.n} columns but kernel order is {self.kernel.n}")

    @classmethod
    def from_data(cls, data, kernel):
        return cls(ToeplitzOperator(data.u, data.n), kernel)

    @property
    def m(self):
        return self.phi.m

    @property
    def n(self):
        return self.phi.n

    @property
    def shape(self):
        return (self.m, self.m)

    def _count(self, attr, X):
        b = 1 if np.ndim(X) == 1 else np.shape(X)[1]
        with self._lock:
            setattr(self, attr, getattr(self, attr) + b)

    def apply(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[0] != self.m:
            raise ValueError(f"expected {self.m} rows, got {X.shape[0]}")
        self._count("matvec_count", X)
        k = self.kernel
        return self.phi.apply(k.apply_L(k.apply_Lt(self.phi.apply_transpose(X))))

    __matmul__ = apply

    def apply_factor(self, X):
        """``(Phi L) @ X``, ``X`` with ``n`` rows."""
        self._count("factor_count", X)
        return self.phi.apply(self.kernel.apply_L(X))

    def apply_factor_t(self, Z):
        """``(Phi L)^T @ Z``, ``Z`` with ``m`` rows."""
        self._count("factor_count", Z)
        return self.kernel.apply_Lt(self.phi.apply_transpose(Z))

    def aslinearoperator(self):
        return LinearOperator(self.shape, matvec=self.apply, matmat=self.apply, rmatvec=self.apply, dtype=float)


def operator_apply(A, X):
    return A.apply(X)


def dense_materialize(A, cap=DENSE_CAP):
    """Dense ``A`` built by applying the operator to identity columns.

    Goes through :meth:`apply`, so the matvec counter grows by ``m``.
    """
    m = A.shape[0]
    if m > cap:
        raise ValueError(f"m={m} exceeds dense cap {cap}; raise cap explicitly if intended")
    return A.apply(np.eye(m))


def as_matmat(A):
    """Normalize an operator-like object to a ``X -> A @ X`` callable."""
    if isinstance(A, np.ndarray):
        return lambda X: A @ X
    if hasattr(A, "apply"):
        return A.apply
    if hasattr(A, "matmat"):
        return A.matmat
    if callable(A):
        return A
    raise TypeError(f"cannot apply object of type {type(A).__name__}")
