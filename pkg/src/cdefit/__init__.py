"""Conditional density estimation with log-linear kernels.

Fits f(y|x) proportional to exp(theta^T h(x, y)) by maximum likelihood over a
shared background grid, using block-wise alternating maximization with a
weighted-logistic inner solver, optionally accelerated by local case-control
subsampling.
"""

__version__ = "0.1.0"

from .dataset import (BackgroundGrid, Dataset, Domain, apply_logistic,
                      domain_from_data, invert_logistic, load_csv, make_grid,
                      save_csv)
from .density import ConditionalDensity, default_quad_points
from .errors import (CdeError, DataError, DegenerateDomainError,
                     DivergenceError, EmptySubsampleError,
                     InternalAssertionError, NonConvergenceError, ParseError,
                     SchemaError)
from .feature_map import (FeatureMap, MonomialTerm, OpaqueTerm, evaluate,
                          evaluate_grid, kernel_a, kernel_b, parse_kernel,
                          polynomial_kernel)
from .lcc import Pilot, Subsample, acceptance_prob, fit_lcc, subsample
from .likelihood import (ModelState, alpha_closed_form, complete_loglik,
                         target_hessian, target_loglik, target_score)
from .optimizer import FitConfig, FitResult, direct_fit, fit, fit_lcc_variant
from .simgen import (StudyError, StudyResult, StudySpec, gen_model, model_rate,
                     run_study, summarize_estimates, true_theta)
from .wlr import (SolverConfig, WLRProblem, WLRRows, fit_wlr_fixed_offsets,
                  fit_wlr_rows, wlr_gradient, wlr_hessian, wlr_loglik)
