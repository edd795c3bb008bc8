"""Folded concave penalized sparse estimation via iteratively reweighted l1.

Public surface: penalty families (:mod:`fcpen.penalty`), problem containers
and losses (:mod:`fcpen.model`), weighted-l1 solvers (:mod:`fcpen.solvers`),
the reweighting driver with oracle diagnostics (:mod:`fcpen.lla`), and the
simulation harness (:mod:`fcpen.simulation`).
"""

from .penalty import (HARD, MCP, SCAD, PenaltySpec, folded_concave_constants,
                      penalty_derivative, penalty_value)
from .model import (Estimate, Problem, load_problem, loss_gradient, loss_value,
                    sample_covariance, save_problem, subgradient_interval)
from .solvers import (SolverOptions, kkt_residual, solve_clime, solve_restricted,
                      solve_weighted_l1, solve_weighted_l1_linear,
                      solve_weighted_l1_logistic, solve_weighted_l1_precision,
                      solve_weighted_l1_quantile)
from .lla import (EventReport, LlaConfig, LlaTrace, check_events, estimate_deltas,
                  lla_run, make_initializer, oracle_estimator)
from .simulation import (ExperimentConfig, MetricsRow, compute_metrics, generate,
                         run_experiment, tune_lambda, validation_error)

__version__ = "0.1.0"
