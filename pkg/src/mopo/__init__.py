"""Multi-objective preference optimization with non-linear aggregation on tabular worlds."""
from .errors import DomainError, SolverError
from .geometry import (NEG_INF, AggregationSpec, Direction, MultiGroupSpec, aggregate, assess,
                       consensus_distance, contains, direction_consensus, direction_malfare,
                       distance, malfare_value, project, project_intersection,
                       restricted_set_distance)
from .world import (PreferenceDatum, TabularWorld, expected_reward_vector, make_world,
                    mod_combine, optimal_policy_linear, per_objective_policies,
                    reward_free_value, symmetric_world)
from .learning import fit_alpha, fit_theta, mop_step, offline_dataset
from .drivers import RunConfig, RunTrace, run_offline, run_online, run_practical
from .oracle import OracleResult, solve_consensus, solve_malfare, solve_maxmin

__version__ = "0.1.0"

__all__ = [
    "AggregationSpec", "Direction", "DomainError", "MultiGroupSpec", "NEG_INF", "OracleResult",
    "PreferenceDatum", "RunConfig", "RunTrace", "SolverError", "TabularWorld", "aggregate",
    "assess", "consensus_distance", "contains", "direction_consensus", "direction_malfare",
    "distance", "expected_reward_vector", "fit_alpha", "fit_theta", "make_world",
    "malfare_value", "mod_combine", "mop_step", "offline_dataset", "optimal_policy_linear",
    "per_objective_policies", "project", "project_intersection", "restricted_set_distance",
    "reward_free_value", "run_offline", "run_online", "run_practical", "solve_consensus",
    "solve_malfare", "solve_maxmin", "symmetric_world",
]
