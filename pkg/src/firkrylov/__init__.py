"""Matrix-free kernel-regularized FIR estimation with Krylov-amortized marginal likelihood evaluation."""

__version__ = "0.1.0"

from .datagen import SynthSpec, generate, true_fir
from .estimate import FirEstimate, fit_metric, posterior_mean
from .evaluators import EVALUATORS, DirectPml, IndirectPml, KrylovPml, make_evaluator
from .indirect import IndirectConfig, pml_indirect_eval
from .kernels import KernelFactor, make_kernel
from .lanczos import BlockLanczosResult, block_lanczos
from .linops import CompositeOperator, SystemData, ToeplitzOperator
from .optimize import SearchConfig, SearchResult, lambda_profile_min, minimize_pml
from .pml import (
    PmlEvaluation,
    PmlSpectrum,
    pml_direct_precompute,
    pml_eval_from_spectrum,
    pml_krylov_eval,
    pml_krylov_precompute,
)
