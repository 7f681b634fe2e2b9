"""Batched Thompson sampling for multi-armed and linear contextual bandits."""

from batchts.contextual import ContextualConfig, LinearPosterior, v_parameter
from batchts.core import ArmStats, FlushDecision, PendingBatch, RunRecord
from batchts.environments import ContextualEnvironment, MabEnvironment
from batchts.harness import ExperimentConfig, aggregate, run_experiment
from batchts.policies import MabPolicyConfig, Variant
from batchts.sampling import RandomStream
from batchts.simulate import simulate_contextual, simulate_mab

__version__ = "0.1.0"

__all__ = [
    "ArmStats", "ContextualConfig", "ContextualEnvironment", "ExperimentConfig",
    "FlushDecision", "LinearPosterior", "MabEnvironment", "MabPolicyConfig",
    "PendingBatch", "RandomStream", "RunRecord", "Variant", "aggregate",
    "run_experiment", "simulate_contextual", "simulate_mab", "v_parameter",
]
