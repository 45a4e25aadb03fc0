"""Budgeted minimization of the PML criterion over ``(lam, beta)``.

The outer search runs over ``log beta`` and spends one evaluator
construction (one precompute) per probe: a coarse log grid, then
golden-section steps around the incumbent.  Each probe profiles ``lam``
exhaustively on a log grid refined by golden section, which costs no
operator applications for the direct and Krylov evaluators.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .evaluators import EVALUATORS, make_evaluator
from .kernels import make_kernel

GOLDEN = (3.0 - math.sqrt(5.0)) / 2.0
LAMBDA_RTOL = 1e-3
BETA_CAP = (1e-12, 1.0 - 1e-6)
THREADS_ENV = "FIRKRYLOV_THREADS"
# the SS prior variance scales like beta^3 / 3, so its lam optimum sits lower
DEFAULT_LAMBDA_RANGE = {"tc": (1e-1, 1e6), "dc": (1e-1, 1e6), "ss": (1e-3, 1e6)}


def default_lambda_range(kernel_kind):
    return DEFAULT_LAMBDA_RANGE.get(kernel_kind, DEFAULT_LAMBDA_RANGE["tc"])


def worker_count():
    """Thread pool size from ``FIRKRYLOV_THREADS`` (default 1)."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def _check_range(name, rng):
    lo, hi = map(float, rng)
    if not (0 < lo < hi and np.isfinite(hi)):
        raise ValueError(f"{name} must satisfy 0 < lo < hi, got {rng!r}")
    return lo, hi


@dataclass
class SearchConfig:
    beta_range: tuple = (1e-3, 0.99)
    lambda_range: tuple | None = None
    budget: int = 40
    lambda_grid_size: int = 50
    evaluator: str = "krylov"
    k: int = 40
    n_omega: int = 1
    n_psi: int = 3
    seed: int = 0
    widen: bool = True

    def __post_init__(self):
        self.beta_range = _check_range("beta_range", self.beta_range)
        if self.lambda_range is not None:
            self.lambda_range = _check_range("lambda_range", self.lambda_range)
        if self.beta_range[1] >= 1:
            raise ValueError("beta_range must lie inside (0, 1)")
        if int(self.budget) != self.budget or self.budget < 1:
            raise ValueError(f"budget must be a positive integer, got {self.budget!r}")
        if self.lambda_grid_size < 1:
            raise ValueError("lambda_grid_size must be at least 1")
        if self.evaluator not in EVALUATORS:
            raise ValueError(f"unknown evaluator {self.evaluator!r}")


class LambdaProfile(NamedTuple):
    lambda_star: float
    psi_star: float
    at_boundary: bool
    evaluation: object


@dataclass(frozen=True)
class Probe:
    beta: float
    lambda_star: float
    psi_star: float
    nu_star: float
    matvecs: int
    lambda_at_boundary: bool


@dataclass
class SearchResult:
    lambda_star: float
    beta_star: float
    psi_star: float
    nu_star: float
    trace: list = field(default_factory=list)
    incumbent_psi: list = field(default_factory=list)
    precompute_count: int = 0
    matvec_total: int = 0
    widened: bool = False
    beta_range: tuple = ()


def golden_min(f, a, b, x, fx, steps=None, xtol=0.0):
    """Golden-section search on ``[a, b]`` starting from incumbent ``x``.

    ``x`` may sit anywhere in ``[a, b]``, including an endpoint.  Each step
    probes the larger side of the bracket.  Stops after ``steps`` probes or
    when the bracket is narrower than ``xtol``.  Returns ``(x, fx, probes)``.
    """
    probes = 0
    while (steps is None or probes < steps) and b - a > xtol:
        if b - x >= x - a:
            u = x + GOLDEN * (b - x)
        else:
            u = x - GOLDEN * (x - a)
        if u == x:
            break
        fu = f(u)
        probes += 1
        if fu < fx:
            if u > x:
                a = x
            else:
                b = x
            x, fx = u, fu
        elif u > x:
            b = u
        else:
            a = u
    return x, fx, probes


def lambda_profile_min(evaluate, lambda_range, grid_size=50, rtol=LAMBDA_RTOL):
    """Minimize ``psi`` over ``lam`` for one fixed ``beta``.

    Parameters
    ----------
    evaluate : callable
        ``lam -> PmlEvaluation``.
    lambda_range : (lo, hi)
    grid_size : int
        Points of the initial log grid.
    rtol : float
        Relative ``lam`` tolerance of the golden-section refinement.

    Returns
    -------
    LambdaProfile
        ``at_boundary`` is set when the grid minimum is an endpoint.
    """
    lo, hi = _check_range("lambda_range", lambda_range)
    grid = np.logspace(np.log10(lo), np.log10(hi), grid_size) if grid_size > 1 else np.array([np.sqrt(lo * hi)])
    evals = [evaluate(float(g)) for g in grid]
    psi = np.array([e.psi for e in evals])
    i = int(np.argmin(psi))
    best = evals[i]
    at_boundary = grid_size > 1 and i in (0, grid_size - 1)
    if grid_size > 1 and not at_boundary:
        cache = {}

        def f(t):
            cache[t] = evaluate(float(np.exp(t)))
            return cache[t].psi

        lg = np.log(grid)
        t, _, _ = golden_min(f, lg[i - 1], lg[i + 1], lg[i], psi[i], xtol=np.log1p(rtol))
        if t in cache and cache[t].psi < best.psi:
            best = cache[t]
    return LambdaProfile(best.lam, best.psi, bool(at_boundary), best)


def _coarse_grid(lo, hi, count):
    if count == 1:
        return np.array([np.sqrt(lo * hi)])
    return np.logspace(np.log10(lo), np.log10(hi), count)


def minimize_pml(data, kernel_kind, cfg=None, kernel_params=None, evaluator_factory: Callable | None = None):
    """Minimize the PML criterion within ``cfg.budget`` precomputes.

    Parameters
    ----------
    data : SystemData
    kernel_kind : str
        ``tc``, ``dc`` or ``ss``.
    cfg : SearchConfig
        A ``None`` lambda range resolves to :data:`DEFAULT_LAMBDA_RANGE`.
    kernel_params : dict, optional
        Fixed secondary kernel parameters (e.g. ``rho``, ``c`` for DC).
    evaluator_factory : callable, optional
        ``beta -> evaluator`` override; the evaluator needs ``evaluate(lam)``
        and a ``matvecs`` attribute.

    Returns
    -------
    SearchResult
    """
    cfg = cfg or SearchConfig()
    kernel_params = kernel_params or {}
    lambda_range = cfg.lambda_range or default_lambda_range(kernel_kind)
    if evaluator_factory is None:
        def evaluator_factory(beta):
            kernel = make_kernel(kernel_kind, data.n, beta, **kernel_params)
            return make_evaluator(cfg.evaluator, data, kernel, beta, k=cfg.k, n_omega=cfg.n_omega,
                                  n_psi=cfg.n_psi, seed=cfg.seed)

    probes = {}

    def probe(logb):
        beta = float(np.exp(logb))
        try:
            ev = evaluator_factory(beta)
            prof = lambda_profile_min(ev.evaluate, lambda_range, cfg.lambda_grid_size)
        except Exception as exc:
            raise RuntimeError(f"evaluation failed at beta={beta:.6g}: {exc}") from exc
        return Probe(beta, prof.lambda_star, prof.psi_star, float(prof.evaluation.nu_star),
                     int(ev.matvecs), prof.at_boundary)

    order = []

    def record(logb, p):
        probes[logb] = p
        order.append(p)

    lo, hi = cfg.beta_range
    budget = int(cfg.budget)
    grid = np.log(_coarse_grid(lo, hi, max(1, math.ceil(budget / 2))))
    workers = min(worker_count(), len(grid))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(probe, grid))
    else:
        results = [probe(t) for t in grid]
    for t, p in zip(grid, results):
        record(t, p)
    used = len(grid)

    widened = False
    pts = sorted(probes)
    best = min(pts, key=lambda t: probes[t].psi_star)
    if cfg.widen and len(pts) > 1 and used < budget and best in (pts[0], pts[-1]):
        if best == pts[0]:
            new = max(np.log(lo / 10.0), np.log(BETA_CAP[0]))
            lo = float(np.exp(new))
        else:
            new = min(np.log(hi * 10.0), np.log(BETA_CAP[1]))
            hi = float(np.exp(new))
        if new not in probes:
            warnings.warn(f"beta minimum at the range edge; widening beta range to ({lo:.6g}, {hi:.6g})",
                          stacklevel=2)
            widened = True
            record(new, probe(new))
            used += 1
            pts = sorted(probes)
            best = min(pts, key=lambda t: probes[t].psi_star)

    if used < budget and len(pts) > 1:
        j = pts.index(best)
        a = pts[max(j - 1, 0)]
        b = pts[min(j + 1, len(pts) - 1)]

        def f(t):
            if t not in probes:
                record(t, probe(t))
            return probes[t].psi_star

        golden_min(f, a, b, best, probes[best].psi_star, steps=budget - used, xtol=1e-9)

    incumbent = []
    cur = None
    for p in order:
        if cur is None or p.psi_star < cur.psi_star:
            cur = p
        incumbent.append(cur.psi_star)
    if cur.lambda_at_boundary:
        warnings.warn(f"lambda minimum {cur.lambda_star:.6g} at the edge of {lambda_range}; "
                      "consider a wider lambda range", stacklevel=2)
    return SearchResult(
        lambda_star=cur.lambda_star,
        beta_star=cur.beta,
        psi_star=cur.psi_star,
        nu_star=cur.nu_star,
        trace=order,
        incumbent_psi=incumbent,
        precompute_count=len(order),
        matvec_total=int(sum(p.matvecs for p in order)),
        widened=widened,
        beta_range=(lo, hi),
    )
