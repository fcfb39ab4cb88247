"""Monte Carlo estimation of Dirichlet expectations E[exp(n H(theta))].

Plain Monte Carlo, a shifted-proposal importance-sampling estimator with
boundary truncation, and a KL-based control variate, together with the
Laplace asymptotics that predict their large-n behavior.
"""

from .errors import (
    ConvergenceError,
    DirmcError,
    GenerationError,
    KktViolationError,
    NumericalError,
    ValidationError,
)
from .estimators import (
    CvReport,
    EstimatorConfig,
    LogEstimate,
    control_variate,
    empirical_rho_squared,
    importance_sampling,
    is_weighted_prior_moments,
    plain_mc,
)
from .experiments import (
    BiasDiagnostic,
    MseExperimentResult,
    bias_diagnostic,
    cv_correlation_gap,
    mse_ratio_experiment,
    theoretical_mse_slope,
)
from .instances import (
    CorpusDocument,
    GeneratorConfig,
    PlantedInstance,
    gen_boundary_instance,
    gen_interior_instance,
    gen_sparsity_controlled_phi,
    load_corpus,
    load_instance,
    load_topic_matrix,
    sample_document,
    save_instance,
    to_lda_instance,
)
from .laplace import (
    LaplaceApprox,
    SparsityReport,
    beta_asymptotic,
    laplace_first_moment,
    laplace_second_moment_is,
    laplace_second_moment_plain,
    limiting_rho_squared,
    sparsity_report,
)
from .maximizer import (
    CoverConfig,
    CoverResult,
    MaximizerReport,
    cover_maximize,
    critical_cone_basis,
    kkt_report,
    kl_surrogate_report,
    reduced_hessian,
)
from .objectives import KlObjective, LdaInstance, LdaObjective, ObjectiveEval
from .quadrature import QuadratureResult, quadrature_reference
from .simplex import (
    DirichletParams,
    RandomStream,
    SimplexPoint,
    TruncationSpec,
    in_truncated_simplex,
    kl_divergence,
    log_dirichlet_density,
    log_multivariate_beta,
    sample_dirichlet,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
