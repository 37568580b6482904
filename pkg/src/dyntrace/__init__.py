"""Probabilistic dynamic traitor tracing with divide-and-conquer q-ary composition."""

from dyntrace.adversary import AttackStrategy, Coalition
from dyntrace.conquer import (
    GroupAssignment,
    Orchestrator,
    Status,
    alpha_k,
    derive_group_params,
    group_capacity,
    new_orchestrator,
    split_users,
)
from dyntrace.core import (
    DISCONNECTED,
    LAMBDA,
    BiasVector,
    SchemeParams,
    codelength_qary_predicted,
    codelength_static,
    cutoff,
    generate_column,
    sample_bias,
    score_contribution,
    threshold,
)
from dyntrace.errors import InvariantViolation, ParameterError, ProtocolViolation
from dyntrace.harness import (
    AggregateStats,
    ExperimentConfig,
    RunRecord,
    export,
    load,
    predict,
    run_experiment,
    run_trial,
    run_trials,
    wilson_interval,
)
from dyntrace.tracer import GroupParams, TracerState, new_tracer

__version__ = "0.1.0"
