"""Simulation and verification toolkit for Volterra-type mean-field SDEs
with singular kernels: resolvent kernels, the dyadic Euler particle
scheme, exact Wasserstein distances and convergence-rate studies."""

from .errors import (
    ConfigError,
    GridMismatchError,
    NonIntegrableError,
    QuadratureConvergenceError,
    ResolventDivergenceError,
    SchemeBlowUpError,
    SmallnessViolationError,
    VolterraError,
)
from .kernels import (
    Kernel,
    KernelMeta,
    ProbeReport,
    constant_kernel,
    exp_conv_kernel,
    fbm_kernel,
    hoelder_probe,
    integrability_probe,
    power_kernel,
    scale_kernel,
    square_kernel,
)
from .measures import EmpiricalMeasure, moment, w2, w2_bruteforce, w2_to_dirac0
from .models import (
    InitialCondition,
    Model,
    RegularityDecl,
    mean_field_ou,
    ou_limit_model,
    ou_oracle,
    separable_model,
)
from .resolvent import (
    GronwallBound,
    IdentityResiduals,
    KernelTable,
    ResolventTable,
    TriGrid,
    convolve,
    gronwall_bound,
    resolvent_sum,
    verify_resolvent_identity,
)
from .scheme import (
    BrownianStore,
    Ensemble,
    coarsen,
    coupled_error,
    euler_simulate,
    make_brownian,
    picard_simulate,
    tilde_s,
    tilde_t,
)
from .experiments import (
    ChaosRate,
    FitResult,
    StudyConfig,
    StudyReport,
    chaos_rate_exponent,
    chaos_study,
    fit_rate,
    moment_study,
    strong_rate_study,
)

__version__ = "0.1.0"
