"""Stochastic composite optimization with variance reduction and momentum.

Building blocks (losses, prox maps, gradient estimators, scalar sequences)
plus assembled solvers and a reproducible benchmark harness.
"""

from .data import Dataset, DatasetFormatError, normalize_rows, read_libsvm, synthesize
from .estimators import (ExactEstimator, GradientSample,
                         SagaNonuniformEstimator, SagaUniformEstimator,
                         SgdEstimator, SvrgEstimator, variance_probe)
from .experiment import (ExperimentSpec, build_problem, estimate_f_star,
                         parse_lambda, run_experiment)
from .objective import (DualityGapUnavailable, Loss, Problem, component_grad,
                        duality_gap, full_grad, full_objective)
from .prox import L1, L2Ball, ZERO, Zero, prox, reg_value
from .sampling import (Dropout, Gaussian, NO_NOISE, RngStreams, SeedRegistry,
                       make_distribution, make_streams, replicate_seed)
from .sequences import (Schedule, SequenceState, StepSizeError,
                        extrapolation_beta, gamma_closed_form, make_schedule,
                        theta_acc_svrg)
from .solvers import (ALGORITHMS, RunConfig, RunTrace, algorithm_config,
                      resolve_algorithm, run, step_A, step_B, step_C,
                      step_acc_svrg)

__version__ = "0.1.0"
