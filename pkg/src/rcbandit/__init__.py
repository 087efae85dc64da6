"""Bandits with censored resource consumption: policies, oracles, experiments."""

from .core import (
    ActionPair,
    AdditiveCost,
    ConfigError,
    DiscountSpec,
    DomainError,
    Feedback,
    InstanceSpec,
    MultiplicativeDiscount,
    ResourceGrid,
    SamplingError,
    UsageError,
    build_grid,
    discount_eval,
    mix64,
    objective_value,
)
from .envs import (
    DegenerateArm,
    GaussianArm,
    TraceArm,
    UniformCostArm,
    observe,
    sample_episode,
    sample_round,
    trace_env_load,
)
from .estimators import BetaPosterior, CensoredMomentEstimator, NaiveEstimator
from .oracle import (
    NuTable,
    concentration_bound,
    nu_table,
    regret_upper_bound,
    true_mixed_moment,
)
from .policies import (
    KLRCUCBPolicy,
    ModifiedTSPolicy,
    ModifiedUCBPolicy,
    PolicySpec,
    RCUCBPolicy,
    kl_bernoulli,
    klucb_index,
    make_policy,
)
from .sim import (
    Aggregate,
    ExperimentConfig,
    RunTrace,
    concentration_audit,
    decomposition_check,
    run_episode,
    run_experiment,
)

__all__ = [
    "ActionPair",
    "AdditiveCost",
    "Aggregate",
    "BetaPosterior",
    "CensoredMomentEstimator",
    "ConfigError",
    "DegenerateArm",
    "DiscountSpec",
    "DomainError",
    "ExperimentConfig",
    "Feedback",
    "GaussianArm",
    "InstanceSpec",
    "KLRCUCBPolicy",
    "ModifiedTSPolicy",
    "ModifiedUCBPolicy",
    "MultiplicativeDiscount",
    "NaiveEstimator",
    "NuTable",
    "PolicySpec",
    "RCUCBPolicy",
    "ResourceGrid",
    "RunTrace",
    "SamplingError",
    "TraceArm",
    "UniformCostArm",
    "UsageError",
    "build_grid",
    "concentration_audit",
    "concentration_bound",
    "decomposition_check",
    "discount_eval",
    "kl_bernoulli",
    "klucb_index",
    "make_policy",
    "mix64",
    "nu_table",
    "objective_value",
    "observe",
    "regret_upper_bound",
    "run_episode",
    "run_experiment",
    "sample_episode",
    "sample_round",
    "trace_env_load",
    "true_mixed_moment",
]

__version__ = "0.1.0"
