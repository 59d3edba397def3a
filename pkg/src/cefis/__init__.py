"""Rare-event probability estimation by importance sampling with the
cross-entropy method, its improved (smoothed) variant, and failure-informed
dimension reduction (iCEred)."""
from ._bar import BACKEND as KERNEL_BACKEND
from .densities import (CompositeBiasing, GaussianParams, adjust_reference_params,
                        composite_logpdf, fit_gaussian_weighted, gaussian_logpdf,
                        sample_gaussian)
from .errors import (AllWeightsZero, CefisError, ConfigError, DegenerateCovariance,
                     DimensionMismatch, EigenFailure, InvalidLsfValue, InvalidSmoothing,
                     MissingGradient, SolveFailure)
from .estimators import (EstimationResult, LevelDiag, SolverConfig, adapt_smoothing,
                         refine, run_ce, run_ice, run_icered, run_mc, run_method,
                         weighted_cv)
from .fis import FisBasis, compute_fis_basis, estimate_H, select_rank
from .indicators import (SmoothIndicatorKind, grad_log_smooth_indicator, indicator,
                         smooth_indicator)
from .problems import (LimitStateProblem, LinearLsfSpec, QuadraticLsfSpec, linear_lsf,
                       linear_problem, linear_reference, quadratic_lsf, quadratic_problem,
                       quadratic_reference)
from .randfield import (BarProblem, KLExpansion, bar_lsf, bar_problem, default_bar,
                        exp_kernel, nystrom_kl, realize_lognormal_field)

__version__ = "0.1.0"
