"""Variance-reduced stochastic gradient methods with increasing batch sizes.

The package covers three iterations (plain, Nesterov-accelerated and
heavy-ball) that average a growing batch of sampled gradients per step,
closed-form rate bounds, the limiting covariances of their rescaled errors
and Hotelling-type confidence regions built from independent replications.
"""

from .errors import (
    ConfigError,
    InadmissibleAlpha,
    InadmissibleBeta,
    InadmissibleParameter,
    InadmissibleRho,
    MatrixStepUnavailable,
    NoConvergence,
    NotPositiveDefinite,
    NumericalError,
    ScheduleOverflow,
    SingularCovariance,
    TooFewReplicates,
    TruncationNotConverged,
    Unstable,
    VrcltError,
)
from .inference import (
    ConfidenceRegion,
    ReplicationEnsemble,
    clt_diagnostics,
    confidence_region,
    contains,
    coverage_experiment,
    ensemble_mean_cov,
    hotelling_statistic,
    rescaled_errors,
)
from .numerics import (
    RngStream,
    cholesky,
    f_cdf,
    f_quantile,
    regularized_incomplete_beta,
    spectral_norm,
    spectral_radius,
    sym_eig,
)
from .problems import LinearRegressionProblem, QuadraticGaussianProblem, StochasticProblem, spd_with_spectrum
from .schedules import (
    AlgorithmKind,
    Geometric,
    Polynomial,
    batch_size,
    cumulative_oracle_calls,
    default_rho,
    steps_for_budget,
)
from .solvers import (
    BaselineStep,
    SolverConfig,
    Trajectory,
    baseline_sgd_run,
    default_hyperparameters,
    run,
    vr_accel_step,
    vr_heavy_ball_step,
    vr_sgd_step,
)
from .theory import (
    CompanionMatrix,
    LimitCovariance,
    RateConstants,
    c_qv,
    companion_matrix,
    delta_method_covariances,
    limit_covariance_for,
    limit_covariance_geometric,
    limit_covariance_polynomial,
    mse_upper_bound,
    rate_constants,
)

__version__ = "0.1.0"
