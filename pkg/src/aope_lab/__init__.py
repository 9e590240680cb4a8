"""Adaptive offline policy evaluation lab.

Simulates adaptive data collection in tabular finite-horizon MDPs, computes
the TMIS plug-in value estimate, evaluates instance-dependent error bounds
with explicit constants, and reproduces the bias and indistinguishability
experiments at desk scale.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .bounds import (
    BoundReport,
    ExplorationStats,
    bernstein_radius,
    estimate_expected_exploration,
    exploration_floor_holds,
    exploration_stats,
    hoeffding_radius,
    l1_radius,
    mse_bound_nonadaptive,
    pointwise_error_bound,
    uniform_error_bound,
    uniform_worst_case,
    worst_case_pointwise,
)
from .loggers import (
    Dataset,
    LoggerSpec,
    collect,
    collect_shadow,
    load_dataset,
    make_lower_bound_instances,
    save_dataset,
    ucbvi_step,
)
from .mdp import (
    Policy,
    TabularMDP,
    Trajectory,
    ValueTables,
    exact_evaluate,
    load_mdp,
    sample_trajectory,
    save_mdp,
    transition_variance,
    validate_mdp,
)
from .tapes import TapeExhausted, TapeSet, init_tapes, read_transition, rollout_via_tapes
from .tmis import EmpiricalModel, build_empirical_model, discard_to_iid, tmis_value

__version__ = "0.1.0"

__all__ = [
    "BoundReport",
    "Dataset",
    "EmpiricalModel",
    "ExplorationStats",
    "KERNEL_BACKEND",
    "LoggerSpec",
    "Policy",
    "TabularMDP",
    "TapeExhausted",
    "TapeSet",
    "Trajectory",
    "ValueTables",
    "bernstein_radius",
    "build_empirical_model",
    "collect",
    "collect_shadow",
    "discard_to_iid",
    "estimate_expected_exploration",
    "exact_evaluate",
    "exploration_floor_holds",
    "exploration_stats",
    "hoeffding_radius",
    "init_tapes",
    "l1_radius",
    "load_dataset",
    "load_mdp",
    "make_lower_bound_instances",
    "mse_bound_nonadaptive",
    "pointwise_error_bound",
    "read_transition",
    "rollout_via_tapes",
    "sample_trajectory",
    "save_dataset",
    "save_mdp",
    "tmis_value",
    "transition_variance",
    "ucbvi_step",
    "uniform_error_bound",
    "uniform_worst_case",
    "validate_mdp",
    "worst_case_pointwise",
]
