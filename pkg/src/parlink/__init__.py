"""Reliable low-latency block transmission over parallel unreliable links.

Builds a tabular MDP for joint packet-level coding and link scheduling,
solves it for the gain-optimal policy by relative value iteration, evaluates
policies exactly, and cross-checks everything with a seeded Monte Carlo
simulator.
"""

from .errors import (
    CapacityError,
    ConfigError,
    ContractError,
    ConvergenceError,
    InfeasibleParameterError,
    ModelMismatchError,
)
from .mdp import (
    AVAILABLE,
    OUTAGE,
    ActionVector,
    MdpState,
    TabularMdp,
    block_success_probability,
    build_mdp,
    enumerate_actions,
    enumerate_states,
    transition_distribution,
)
from .model import (
    ExponentialLink,
    OnOffLink,
    ServicePmf,
    SystemConfig,
    block_packet_count,
    onoff_stationary,
    onoff_transition_matrix,
    parse_rate,
    service_pmf,
)
from .sim import ReliabilityReport, simulate, wilson_interval
from .solver import (
    Policy,
    SolveResult,
    constant_policy,
    full_replication_policy,
    greedy_policy,
    policy_from_file,
    policy_from_jsonable,
    policy_gain,
    policy_to_jsonable,
    proportional_split_policy,
    relative_value_iteration,
    single_link_policy,
    solve_result_to_jsonable,
)

__version__ = "0.1.0"

__all__ = [
    "AVAILABLE",
    "OUTAGE",
    "ActionVector",
    "CapacityError",
    "ConfigError",
    "ContractError",
    "ConvergenceError",
    "ExponentialLink",
    "InfeasibleParameterError",
    "MdpState",
    "ModelMismatchError",
    "OnOffLink",
    "Policy",
    "ReliabilityReport",
    "ServicePmf",
    "SolveResult",
    "SystemConfig",
    "TabularMdp",
    "block_packet_count",
    "block_success_probability",
    "build_mdp",
    "constant_policy",
    "enumerate_actions",
    "enumerate_states",
    "full_replication_policy",
    "greedy_policy",
    "onoff_stationary",
    "onoff_transition_matrix",
    "parse_rate",
    "policy_from_file",
    "policy_from_jsonable",
    "policy_gain",
    "policy_to_jsonable",
    "proportional_split_policy",
    "relative_value_iteration",
    "service_pmf",
    "simulate",
    "single_link_policy",
    "solve_result_to_jsonable",
    "transition_distribution",
    "wilson_interval",
]
