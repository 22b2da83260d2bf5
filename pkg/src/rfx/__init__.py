"""Reward-free exploration for tabular episodic MDPs."""
from .dp import (brute_force_optimal, max_reach, occupancy, optimal_value, policy_evaluation,
                 policy_value, significance, value_difference, value_iteration)
from .explorer import PolicyCover, coverage_ratio, mixture_occupancy, rf_explore
from .learners import RegretLearnerConfig, run_regret_learner
from .mdp import (EpisodeDataset, Environment, RewardTable, StochasticPolicy, TabularMdp,
                  Trajectory, validate_mdp)
from .planner import NpgConfig, estimate_model, npg, plan
from .rmax import zero_rmax_explore, zero_rmax_plan

__all__ = [
    "EpisodeDataset", "Environment", "NpgConfig", "PolicyCover", "RegretLearnerConfig",
    "RewardTable", "StochasticPolicy", "TabularMdp", "Trajectory", "brute_force_optimal",
    "coverage_ratio", "estimate_model", "max_reach", "mixture_occupancy", "npg", "occupancy",
    "optimal_value", "plan", "policy_evaluation", "policy_value", "rf_explore",
    "run_regret_learner", "significance", "validate_mdp", "value_difference",
    "value_iteration", "zero_rmax_explore", "zero_rmax_plan",
]
