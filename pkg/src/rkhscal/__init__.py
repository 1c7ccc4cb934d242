"""Kernel ridge regression in Matérn RKHSs and frequentist Kennedy-O'Hagan calibration."""

from rkhscal.errors import ConfigError, NumericalError, RkhsCalError
from rkhscal.kernel import (
    MaternKernel,
    bessel_k,
    exponential_kernel,
    kernel_matrix,
    matern_eval,
    matern_spectral_density,
)
from rkhscal.design import (
    Design,
    QuasiUniformity,
    fill_distance,
    points_csv_text,
    read_points_csv,
    quasi_uniformity_report,
    separation_distance,
    sobol_design,
    sobol_points,
    write_points_csv,
)
from rkhscal.quadrature import QuadratureRule
from rkhscal.rkhs import (
    IntegralClassFunction,
    KernelExpansion,
    integral_class_eval,
    interpolate,
    rkhs_inner_product,
    rkhs_norm_sq_via_v,
)
from rkhscal.krr import (
    Dataset,
    KrrFit,
    empirical_seminorm,
    fit_rkhs_norm_sq,
    krr_fit,
    krr_objective,
    krr_predict,
    lambda_schedule,
)
from rkhscal.calibration import (
    CalibrationProblem,
    CalibrationResult,
    ObjectiveTerms,
    Simulator,
    ThetaPrime,
    estimate_theta,
    ko_objective,
    ko_objective_decomposed,
    residual_vector,
    theta_prime_oracle,
)
from rkhscal.experiment import (
    LogLogFit,
    RateReport,
    StudyConfig,
    emit_report,
    generate_physical_data,
    loglog_fit,
    run_convergence_study,
    run_krr_rate_study,
)

__version__ = "0.1.0"
