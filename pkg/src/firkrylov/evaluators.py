"""Per-``beta`` evaluator objects with a common ``evaluate(lam)`` interface.

Each evaluator owns its own :class:`CompositeOperator`, so operator
application counts are attributable to one ``beta`` and evaluators for
different ``beta`` can run on different threads.
"""

from __future__ import annotations

import numpy as np

from .indirect import IndirectConfig, pml_indirect_eval
from .lanczos import DEFAULT_TAU
from .linops import CompositeOperator
from .pml import (
    DEFAULT_K_QUAD,
    pml_direct_precompute,
    pml_eval_from_spectrum,
    pml_krylov_eval,
    pml_krylov_precompute,
    residual_trace_precompute,
)


class DirectPml:
    """Spectrum from a dense SVD of ``Phi L``; no operator applications."""

    name = "direct"

    def __init__(self, data, kernel, beta=None):
        self.beta = beta
        self.m = data.m
        self.spectrum = pml_direct_precompute(data, kernel)

    @property
    def matvecs(self):
        return 0

    def evaluate(self, lam):
        return pml_eval_from_spectrum(self.spectrum, lam, self.beta)


class KrylovPml:
    """Augmented block Lanczos spectrum plus optional residual trace correction.

    ``seed`` feeds a ``SeedSequence`` whose two children drive the
    augmentation block and the trace probes.
    """

    name = "krylov"

    def __init__(self, data, kernel, beta=None, k=40, n_omega=1, n_psi=3,
                 k_quad=DEFAULT_K_QUAD, seed=0, tau=DEFAULT_TAU):
        self.beta = beta
        self.m = data.m
        self.operator = CompositeOperator.from_data(data, kernel)
        s_omega, s_psi = np.random.SeedSequence(seed).spawn(2)
        self.spectrum, self.lanczos = pml_krylov_precompute(
            self.operator, data.y, n_omega, k, seed=s_omega, tau=tau)
        self.model = None
        if n_psi > 0:
            self.model = residual_trace_precompute(
                self.operator, self.lanczos, n_psi, k_quad, seed=s_psi)

    @property
    def matvecs(self):
        return self.operator.matvec_count

    def evaluate(self, lam):
        return pml_krylov_eval(self.spectrum, self.model, lam, self.beta)


class IndirectPml:
    """Recomputes everything per ``lam``; ``matvecs`` grows with every call.

    One application of ``Phi L`` plus one of its transpose count as one
    operator application.
    """

    name = "indirect"

    def __init__(self, data, kernel, beta=None, config=None):
        self.beta = beta
        self.m = data.m
        self.y = data.y
        self.operator = CompositeOperator.from_data(data, kernel)
        self.config = config or IndirectConfig()

    @property
    def matvecs(self):
        return (self.operator.factor_count + 1) // 2

    def evaluate(self, lam):
        return pml_indirect_eval(self.operator, self.y, lam, self.config, self.beta)


EVALUATORS = {"direct": DirectPml, "krylov": KrylovPml, "indirect": IndirectPml}


def make_evaluator(name, data, kernel, beta=None, **options):
    """Build an evaluator by name, passing only the options it accepts."""
    try:
        cls = EVALUATORS[name]
    except KeyError:
        raise ValueError(f"unknown evaluator {name!r}; expected one of {sorted(EVALUATORS)}") from None
    if cls is KrylovPml:
        keys = ("k", "n_omega", "n_psi", "k_quad", "seed", "tau")
        return cls(data, kernel, beta, **{k: v for k, v in options.items() if k in keys})
    if cls is IndirectPml:
        cfg = options.get("indirect_config") or IndirectConfig(seed=int(options.get("seed", 0)))
        return cls(data, kernel, beta, cfg)
    return cls(data, kernel, beta)
