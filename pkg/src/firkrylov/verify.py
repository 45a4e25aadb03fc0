"""Dense oracles and executable checks of the convergence and accuracy bounds.

Everything here works with explicit matrices (O(m^2) memory, O(m^3)
time) and is kept apart from the matrix-free library.  Each check returns
a :class:`CheckReport` that serializes to JSON.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla

from .lanczos import block_lanczos, eig_sym

DENSE_MAX_M = 2000
REL_SLACK = 1e-10


class VerifyError(ValueError):
    pass


@dataclass
class TheoryCheckConfig:
    """Settings shared by the theory checks.

    ``q`` and ``p`` split the probe block of the trace-bound check
    (``n_omega = q + p``); ``s`` is the Krylov depth of the sketch used for
    the preconditioning check; ``kappa`` is the condition number of the
    dense SPD test matrix of the CG check.
    """

    m: int = 200
    seed: int = 0
    k_max: int = 30
    lambda_list: tuple = (0.1, 1.0, 10.0, 100.0)
    kappa: float = 1e4
    n_omega: int = 5
    q: int = 2
    p: int = 3
    delta: float = 0.1
    s: int = 2
    k: int = 4
    n_psi: int = 3
    decay: float = 0.7
    n_seeds: int = 100

    def __post_init__(self):
        if self.m < 2 or self.m > DENSE_MAX_M:
            raise VerifyError(f"m must lie in [2, {DENSE_MAX_M}]")
        if self.kappa < 1:
            raise VerifyError("kappa must be at least 1")
        if not 0 < self.delta < 1:
            raise VerifyError("delta must lie in (0, 1)")
        if self.k_max < 1 or self.k < 1 or self.s < 0 or self.n_psi < 1:
            raise VerifyError("k_max, k, n_psi must be positive and s non-negative")

    def check_split(self):
        if self.q < 2 or self.p < 2 or self.q + self.p != self.n_omega:
            raise VerifyError(f"need q, p >= 2 and q + p == n_omega, got q={self.q}, p={self.p}, "
                              f"n_omega={self.n_omega}")


@dataclass
class CheckReport:
    name: str
    params: dict
    margins: list = field(default_factory=list)
    passed: bool = True
    details: dict = field(default_factory=dict)

    def fail(self, **row):
        self.passed = False
        self.details.setdefault("violations", []).append(row)

    def to_json(self):
        return json.dumps(_plain(asdict(self)), indent=2, sort_keys=True)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# -- dense building blocks ---------------------------------------------------


def dense_pml(A_dense, y, lam):
    """``(y^T (lam I + A)^-1 y, Tr log(lam I + A))`` by dense factorizations."""
    A_dense = np.asarray(A_dense, dtype=float)
    m = A_dense.shape[0]
    if m > DENSE_MAX_M:
        raise VerifyError(f"m={m} exceeds the dense oracle limit {DENSE_MAX_M}")
    S = lam * np.eye(m) + (A_dense + A_dense.T) / 2
    ev = np.linalg.eigvalsh(S)
    if ev[0] <= 0:
        raise VerifyError(f"lam I + A is not positive definite (smallest eigenvalue {ev[0]:.3e})")
    try:
        quad = float(y @ sla.solve(S, y, assume_a="pos"))
    except np.linalg.LinAlgError as exc:
        raise VerifyError(f"dense solve failed: {exc}") from exc
    return quad, float(np.sum(np.log(ev)))


def spd_with_spectrum(eigs, rng):
    """``Q diag(eigs) Q^T`` with Haar-random orthogonal ``Q``."""
    m = len(eigs)
    Q, R = np.linalg.qr(rng.standard_normal((m, m)))
    Q *= np.sign(np.diag(R))
    return (Q * eigs) @ Q.T


def quad_from_basis(A, W, y):
    """``(W^T y)^T (W^T A W)^-1 (W^T y)``: Krylov/CG estimate of ``y^T A^-1 y``."""
    T = W.T @ A @ W
    c = W.T @ y
    return float(c @ np.linalg.solve((T + T.T) / 2, c))


def krylov_basis(A, Z, k, tau=1e-12):
    res = block_lanczos(A, Z, k, tau=tau)
    return res.W, res.T


def leading_basis(A, Z, k_max, tau=1e-12):
    """Basis of ``K_k_max(A, Z)`` and a map ``k -> columns spanning K_k(A, Z)``."""
    res = block_lanczos(A, Z, k_max, tau=tau)
    offs = np.concatenate([[0], np.cumsum(res.block_widths)])
    return res.W, lambda k: res.W[:, : offs[min(k, len(offs) - 1)]]


def compressed_trace(T, m, lam):
    """``Tr log(lam I + W T W^T)`` for an ``r x r`` compression."""
    th = np.maximum(eig_sym(T)[0], 0.0)
    return float(np.sum(np.log(lam + th)) + (m - len(th)) * np.log(lam))


def cg_bound(kappa, k):
    if kappa <= 1:
        return 0.0
    rk = math.sqrt(kappa)
    return 4.0 * ((rk - 1.0) / (rk + 1.0)) ** (2 * k)


def chebyshev(deg, x):
    """Chebyshev polynomial ``T_deg(x)``; uses ``cosh`` form for ``|x| > 1``."""
    if deg < 0:
        raise ValueError("degree must be non-negative")
    if abs(x) <= 1:
        return math.cos(deg * math.acos(x))
    return math.copysign(1.0, x) ** deg * math.cosh(deg * math.acosh(abs(x)))


# -- deterministic bound checks ---------------------------------------------


def check_cg_bound(cfg=None, n_omega=None):
    """Relative quadratic-form error of Krylov vs ``4((sqrt(kappa)-1)/(sqrt(kappa)+1))^(2k)``.

    Also checks that augmenting ``y`` with ``n_omega`` Gaussian columns never
    increases the error.
    """
    cfg = cfg or TheoryCheckConfig()
    n_omega = cfg.n_omega if n_omega is None else n_omega
    rng = np.random.default_rng(cfg.seed)
    m = cfg.m
    eigs = np.logspace(0, np.log10(cfg.kappa), m) if cfg.kappa > 1 else np.full(m, 2.0)
    A = spd_with_spectrum(eigs, rng)
    y = rng.standard_normal(m)
    Omega = rng.standard_normal((m, n_omega))
    exact = float(y @ np.linalg.solve(A, y))
    kappa = float(eigs.max() / eigs.min())
    rep = CheckReport("cg_bound", {"m": m, "kappa": kappa, "k_max": cfg.k_max, "seed": cfg.seed,
                                   "n_omega": n_omega})
    _, plain = leading_basis(A, y, cfg.k_max)
    aug = leading_basis(A, np.column_stack([y, Omega]), cfg.k_max)[1] if n_omega else None
    for k in range(1, cfg.k_max + 1):
        err = (exact - quad_from_basis(A, plain(k), y)) / exact
        bound = cg_bound(kappa, k)
        row = {"k": k, "error": err, "bound": bound, "margin": bound - err}
        if err > bound + REL_SLACK or err < -REL_SLACK:
            rep.fail(k=k, error=err, bound=bound)
        if aug is not None:
            err_a = (exact - quad_from_basis(A, aug(k), y)) / exact
            row["error_augmented"] = err_a
            if err_a > err + REL_SLACK:
                rep.fail(k=k, error=err, error_augmented=err_a)
        rep.margins.append(row)
    return rep


def check_trace_sandwich(cfg=None):
    """Plain <= augmented <= exact for ``Tr log(lam I + .)``, plus eigenvalue ordering."""
    cfg = cfg or TheoryCheckConfig(m=100)
    if cfg.m > 500:
        raise VerifyError("trace sandwich check is limited to m <= 500")
    rng = np.random.default_rng(cfg.seed)
    m = cfg.m
    A = spd_with_spectrum(cfg.decay ** np.arange(m) * m, rng)
    y = rng.standard_normal(m)
    Omega = rng.standard_normal((m, cfg.n_omega))
    k = min(cfg.k, m // (cfg.n_omega + 1))
    slack = REL_SLACK * m
    rep = CheckReport("trace_sandwich", {"m": m, "k": k, "n_omega": cfg.n_omega,
                                         "lambdas": list(cfg.lambda_list), "seed": cfg.seed})
    _, T = krylov_basis(A, Omega, k)
    _, Ta = krylov_basis(A, np.column_stack([y, Omega]), k)
    for lam in cfg.lambda_list:
        plain = compressed_trace(T, m, lam)
        aug = compressed_trace(Ta, m, lam)
        exact = dense_pml(A, y, lam)[1]
        rep.margins.append({"lambda": lam, "plain": plain, "augmented": aug, "exact": exact,
                            "margin_low": aug - plain, "margin_high": exact - aug})
        if plain > aug + slack or aug > exact + slack:
            rep.fail(lam=lam, plain=plain, augmented=aug, exact=exact)

    # eigenvalue ordering under nested projections
    sizes = sorted({max(1, m // 8), max(1, m // 4), max(1, m // 2), m})
    Qfull = np.linalg.qr(rng.standard_normal((m, m)))[0]
    prev = None
    for ell in sizes:
        Q = Qfull[:, :ell]
        ev = np.zeros(m)
        ev[:ell] = eig_sym(Q.T @ A @ Q)[0]
        if prev is not None:
            gap = float(np.min(ev - prev))
            rep.margins.append({"ordering_size": ell, "min_gap": gap})
            if gap < -REL_SLACK * ev[0]:
                rep.fail(ordering_size=ell, min_gap=gap)
        prev = ev
    return rep


def nystrom_preconditioner(A, Omega, s, shift, rng=None, constants="shifted"):
    """Nystrom preconditioner of ``A - shift I`` from a sketch of ``K_s(A, Omega)``.

    Returns ``(P_inv, U)`` with ``P_inv = I + U (C (Lhat + c I)^-1 - I) U^T``.
    ``constants="shifted"`` uses ``c = shift``, ``C = lhat_min + shift``;
    ``constants="extremal"`` uses ``c = lhat_min``, ``C = lhat_max``.
    ``range(U)`` lies in ``A K_s(A, Omega)``, inside ``K_{s+1}(A, Omega)``.
    With ``s = 0`` the sketch is empty and ``P = I``.
    """
    m = A.shape[0]
    if s == 0:
        return np.eye(m), np.zeros((m, 0))
    blocks = [Omega]
    for _ in range(s - 1):
        blocks.append(A @ blocks[-1])
    S = np.linalg.qr(np.column_stack(blocks))[0]
    H = A - shift * np.eye(m)
    Y = H @ S
    core = S.T @ Y
    w, V = np.linalg.eigh((core + core.T) / 2)
    keep = w > w.max() * 1e-12
    B = Y @ (V[:, keep] / np.sqrt(w[keep]))
    U, sv, _ = np.linalg.svd(B, full_matrices=False)
    lhat = sv**2
    keep = lhat > lhat[0] * 1e-14
    U, lhat = U[:, keep], lhat[keep]
    if constants == "shifted":
        c, C = shift, lhat[-1] + shift
    elif constants == "extremal":
        c, C = lhat[-1], lhat[0]
    else:
        raise ValueError(f"unknown constants {constants!r}")
    P_inv = np.eye(m) + (U * (C / (lhat + c) - 1.0)) @ U.T
    return P_inv, U


def check_implicit_preconditioning(cfg=None, constants="shifted", ks=None):
    """Augmented Krylov error vs the preconditioned bound ``4((sqrt(kt)-1)/(sqrt(kt)+1))^(2(k-s))``.

    The test matrix is ``shift I + Q diag(decaying) Q^T``; ``kt`` is the
    condition number of ``P^-1/2 A P^-1/2`` for the Nystrom preconditioner
    built from ``K_s(A, Omega)``.
    """
    cfg = cfg or TheoryCheckConfig()
    rng = np.random.default_rng(cfg.seed)
    m, s = cfg.m, cfg.s
    shift = 1e-3
    A = spd_with_spectrum(cfg.decay ** np.arange(m), rng) + shift * np.eye(m)
    y = rng.standard_normal(m)
    Omega = rng.standard_normal((m, cfg.n_omega))
    P_inv, U = nystrom_preconditioner(A, Omega, s, shift, constants=constants)
    w, V = np.linalg.eigh((P_inv + P_inv.T) / 2)
    Ph = (V * np.sqrt(w)) @ V.T
    ev = np.linalg.eigvalsh(Ph @ A @ Ph)
    kt = float(ev[-1] / ev[0])
    kappa = float(np.linalg.cond(A))
    exact = float(y @ np.linalg.solve(A, y))
    ks = list(ks) if ks is not None else list(range(s + 1, cfg.k_max + 1))
    rep = CheckReport("implicit_preconditioning",
                      {"m": m, "s": s, "n_omega": cfg.n_omega, "seed": cfg.seed, "constants": constants,
                       "kappa": kappa, "kappa_preconditioned": kt, "sketch_rank": int(U.shape[1])})
    _, aug = leading_basis(A, np.column_stack([y, Omega]), max(ks))
    for k in ks:
        err = (exact - quad_from_basis(A, aug(k), y)) / exact
        bound = cg_bound(kt, k - s)
        rep.margins.append({"k": k, "error": err, "bound": bound, "margin": bound - err})
        if err > bound + REL_SLACK or err < -REL_SLACK:
            rep.fail(k=k, error=err, bound=bound)
    return rep


# -- probabilistic checks -----------------------------------------------------


def binomial_allowance(delta, trials):
    """``delta`` plus a three-sigma binomial margin."""
    return delta + 3.0 * math.sqrt(delta * (1.0 - delta) / trials)


def trace_bound_constant(m, q, n_omega, p, delta):
    """Leading constant of the trace-error bound, evaluated with the matrix size ``m``."""
    return ((math.sqrt(m - q) + math.sqrt(n_omega) + math.sqrt(2 * math.log(2 / delta))) ** 2
            * (2 / delta) ** (2 / (p + 1)) * (math.e * math.sqrt(n_omega) / (p + 1)) ** 2)


def trace_error_bound(eigs, q, k, lam, C):
    """Upper bound for ``Tr log(lam I + A) - Tr log(lam I + W T W^T)`` with ``W`` spanning ``K_k(A, Omega)``."""
    lq, lq1 = eigs[q - 1], eigs[q]
    tail = eigs[q:]
    if lq1 <= 0:
        return 0.0
    cheb = chebyshev(k - 2, (2 * lq - lq1) / lq1) if k >= 2 else 1.0
    factor = C * (lq1 / lq) / cheb**2
    return float(np.sum(np.log1p(factor * tail / lam)) + np.sum(np.log1p(tail / lam)))


def check_trace_bound_quantile(cfg=None):
    """Violation frequency of the trace-error bound over ``cfg.n_seeds`` draws of ``Omega``."""
    cfg = cfg or TheoryCheckConfig(m=100)
    cfg.check_split()
    rng = np.random.default_rng(cfg.seed)
    m = cfg.m
    eigs = cfg.decay ** np.arange(m) * m
    A = spd_with_spectrum(eigs, rng)
    C = trace_bound_constant(m, cfg.q, cfg.n_omega, cfg.p, cfg.delta)
    lam = cfg.lambda_list[0]
    exact = float(np.sum(np.log(lam + eigs)))
    bound = trace_error_bound(eigs, cfg.q, cfg.k, lam, C)
    viol = 0
    errors = []
    for i in range(cfg.n_seeds):
        Omega = np.random.default_rng([cfg.seed, i]).standard_normal((m, cfg.n_omega))
        _, T = krylov_basis(A, Omega, cfg.k)
        err = exact - compressed_trace(T, m, lam)
        errors.append(err)
        if err > bound or err < -REL_SLACK * m:
            viol += 1
    rate = viol / cfg.n_seeds
    allow = binomial_allowance(cfg.delta, cfg.n_seeds)
    rep = CheckReport("trace_bound_quantile",
                      {"m": m, "q": cfg.q, "p": cfg.p, "k": cfg.k, "delta": cfg.delta, "lambda": lam,
                       "n_seeds": cfg.n_seeds, "C": C},
                      margins=[{"bound": bound, "max_error": max(errors), "median_error": float(np.median(errors)),
                                "violation_rate": rate, "allowed": allow}])
    if rate > allow:
        rep.fail(violation_rate=rate, allowed=allow)
    return rep


def hutchinson_radius(R_fro, R_two, n_probes, delta):
    """Gaussian Girard-Hutchinson error radius at failure probability ``delta``.

    Solves ``2 exp(-N eps^2 / (4 |R|_F^2 + 4 eps |R|_2)) = delta`` for ``eps``.
    """
    L = math.log(2.0 / delta)
    b = 4.0 * L * R_two
    return (b + math.sqrt(b * b + 16.0 * n_probes * L * R_fro**2)) / (2.0 * n_probes)


def residual_log_matrix(A, W, T, lam):
    """Dense ``log(lam I + A) - log(lam I + W T W^T)``."""
    m = A.shape[0]

    def logm_sym(S):
        w, V = np.linalg.eigh((S + S.T) / 2)
        return (V * np.log(w)) @ V.T

    return logm_sym(lam * np.eye(m) + A) - logm_sym(lam * np.eye(m) + W @ T @ W.T)


def check_hutchinson_quantile(cfg=None):
    """Violation frequency of the Hutchinson radius for the residual ``R(lam)``."""
    cfg = cfg or TheoryCheckConfig(m=100)
    rng = np.random.default_rng(cfg.seed)
    m = cfg.m
    A = spd_with_spectrum(cfg.decay ** np.arange(m) * m, rng)
    y = rng.standard_normal(m)
    Omega = rng.standard_normal((m, cfg.n_omega))
    W, T = krylov_basis(A, np.column_stack([y, Omega]), cfg.k)
    lam = cfg.lambda_list[0]
    R = residual_log_matrix(A, W, T, lam)
    tr = float(np.trace(R))
    fro = float(np.linalg.norm(R))
    two = float(np.linalg.norm(R, 2))
    eps = hutchinson_radius(fro, two, cfg.n_psi, cfg.delta)
    viol = 0
    errs = []
    for i in range(cfg.n_seeds):
        Psi = np.random.default_rng([cfg.seed, 1, i]).standard_normal((m, cfg.n_psi))
        est = float(np.mean(np.einsum("ij,ij->j", Psi, R @ Psi)))
        errs.append(abs(est - tr))
        if abs(est - tr) > eps:
            viol += 1
    rate = viol / cfg.n_seeds
    allow = binomial_allowance(cfg.delta, cfg.n_seeds)
    rep = CheckReport("hutchinson_quantile",
                      {"m": m, "k": cfg.k, "n_omega": cfg.n_omega, "n_psi": cfg.n_psi, "delta": cfg.delta,
                       "lambda": lam, "n_seeds": cfg.n_seeds},
                      margins=[{"radius": eps, "trace": tr, "fro": fro, "max_error": max(errs),
                                "violation_rate": rate, "allowed": allow}])
    if rate > allow:
        rep.fail(violation_rate=rate, allowed=allow)
    return rep


CHECKS = {
    "cg": check_cg_bound,
    "sandwich": check_trace_sandwich,
    "precond": check_implicit_preconditioning,
    "trace-quantile": check_trace_bound_quantile,
    "hutchinson-quantile": check_hutchinson_quantile,
}


def run_checks(names=None, seed=0):
    names = list(CHECKS) if names is None or names == "all" else list(names)
    out = []
    for name in names:
        if name not in CHECKS:
            raise VerifyError(f"unknown check {name!r}")
        m = 200 if name in ("cg", "precond") else 100
        out.append(CHECKS[name](TheoryCheckConfig(m=m, seed=seed)))
    return out
