"""Robust Bayesian optimization against adversarial inputs.

Minimizes over controllable inputs the worst case over uncontrollable
ones, using an entropy-based acquisition built from spectral posterior
samples, EP-conditioned predictions, and truncated-Gaussian moments, plus
a set of standard baselines and synthetic benchmarks.
"""

from .acquisition import (ConditionedPrediction, ResState, conditioned_variance,
                          maximize_acquisition, prepare_iteration, res_value,
                          res_values)
from .baselines import (BaselineConfig, ei_select, kg_select, mes_select,
                        select_point, stableopt_select, ucb_select)
from .benchmarks import (ProblemSpec, RegretRecord, compute_regret,
                         list_problems, make_problem, true_robust_reference,
                         worst_case_value)
from .ep import EpOptions, EpResult, build_res_bounds, ep_box_condition
from .errors import ConfigError, InfeasibleBoxError, NumericalError
from .gp import (Dataset, GpPosterior, KernelParams, fit_hyperparameters,
                 fit_posterior, kernel_eval, kernel_matrix,
                 log_marginal_likelihood, predict, predict_marginals)
from .minimax import (Box, FiniteSet, RobustCharacteristics, SolverOptions,
                      SpaceSpec, inner_max, optimize_over_space, report_optimum,
                      robust_optimum)
from .runner import RunConfig, RunRecord, aggregate_and_plot, run_all, run_bo
from .spectral import (SpectralBasis, SpectralSample, build_basis, draw_samples)
from .truncated import (BoxBounds, TruncatedMoments, bivariate_normal_mass,
                        std_normal_cdf, std_normal_pdf, truncated_moments_1d,
                        truncated_moments_2d)

__version__ = "0.1.0"
