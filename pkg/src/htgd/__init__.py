"""Survey-sampled stochastic gradient descent with Horvitz-Thompson weighting."""

from .designs import (
    InclusionProbabilities,
    SecondOrderProbs,
    SurveySample,
    draw_poisson,
    draw_rejective,
    draw_uniform_without_replacement,
    equal_probabilities,
    normalize_weights,
    poisson_second_order,
    rejective_second_order,
)
from .engine import (
    OptimizerConfig,
    RunTrace,
    run_full_gd,
    run_htgd,
    run_minibatch_sgd,
    run_optimizer,
)
from .estimators import (
    HTGradientEstimate,
    conditional_variance_fixed_size,
    ht_gradient,
    ht_total,
    poisson_variance,
    sen_yates_grundy_variance,
)
from .models import (
    AbsoluteDeviationLink,
    ConstantLink,
    FixedWeightsLink,
    GradientNormLink,
    KernelSymmetricModel,
    LinkFunction,
    LogisticRegressionModel,
    LossModel,
    QuadraticLocationModel,
    QuadraticMarginModel,
    SubFeatureLogisticLink,
)
from .asymptotics import (
    CovarianceDiagnostics,
    GainReport,
    RateFit,
    covariance_diagnostics,
    empirical_gain_stats,
    find_stationary_point,
    gain_comparison,
    gamma_matrix,
    gamma_matrix_from_gradients,
    hessian_estimate,
    limit_loss_error_sample,
    optimal_poisson_probs,
    rate_bound_fit,
    solve_lyapunov,
    step_size_eta,
    variance_optimal_probs,
)

__version__ = "0.1.0"
