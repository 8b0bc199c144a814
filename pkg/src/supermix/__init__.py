"""Off-the-grid estimation of discrete mixing measures from deconvolved samples."""

from .certificate import (
    Certificate,
    PsiEvaluator,
    admissible_bandwidth,
    audit_certificate,
    build_certificate,
    c0m_norm_bound,
    certificate_l2_norm,
    certificate_value,
    psi_value_grad_hess,
)
from .cpgd import CpgdConfig, ParticleState, cpgd_step, solve_cpgd
from .fidelity import (
    CorrelationEvaluator,
    FidelityCache,
    Observation,
    build_cache,
    eta,
    eta_gradient,
    objective,
    xi,
    xi_gradient,
    zeta,
    zeta_gradient,
)
from .kernels import (
    FidelitySpec,
    MixingKernelSpec,
    fidelity_kernel,
    mixing_density,
    mixing_gradient,
    spectral_density,
)
from .measures import (
    DiscreteMeasure,
    Sample,
    jordan_decompose,
    merge_close,
    min_separation,
    sample_mixture,
    total_variation,
)
from .metrics import (
    RegionSpec,
    bregman_divergence,
    default_kappa,
    rate_quantities,
    region_masses,
    support_error,
)
from .sfw import SfwConfig, SolveResult, find_spike, lasso_step, slide_step, solve_sfw

__version__ = "0.1.0"
