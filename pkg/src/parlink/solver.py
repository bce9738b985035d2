"""Average-reward solver and analytic policy evaluation.

relative_value_iteration finds the gain-optimal stationary policy of a
TabularMdp; policy_gain evaluates any fixed policy exactly through its
stationary distribution. Constant heuristic policies are provided as
baselines.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ConvergenceError
from .mdp import (
    _AVAIL_NAMES,
    ActionVector,
    MdpState,
    TabularMdp,
    enumerate_actions,
    enumerate_states,
)
from .model import OnOffLink, SystemConfig, block_packet_count

# first index within this of the row maximum wins an argmax tie; the action
# order (total count, then lexicographic, drop last) is the tie-break order
TIE_TOL = 1e-9


@dataclass(frozen=True)
class Policy:
    """Deterministic stationary policy: state index -> action index."""

    action_indices: tuple
    actions: tuple

    def __post_init__(self):
        if any(not 0 <= a < len(self.actions) for a in self.action_indices):
            raise ContractError("policy maps a state outside the action list")

    def action(self, state_index: int) -> ActionVector:
        return self.actions[self.action_indices[state_index]]

    def __len__(self) -> int:
        return len(self.action_indices)


@dataclass(frozen=True)
class SolveResult:
    """Optimal policy with its long-run average reward and diagnostics.

    gain_error_bound is half the final Bellman-increment span; the true
    optimal gain lies within it. damped records whether the aperiodicity
    transform was engaged.
    """

    policy: Policy
    gain: float
    bias: np.ndarray
    iterations: int
    span_residual: float
    gain_error_bound: float
    damped: bool


def greedy_policy(mdp: TabularMdp, values: np.ndarray, tie_tol: float = TIE_TOL) -> Policy:
    """Argmax policy of r + P*values with deterministic tie-breaking.

    Ties within tie_tol resolve to the smallest total packet count, then the
    lexicographically smallest vector, with drop last; this is exactly the
    enumeration order, so the first qualifying index wins.
    """
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ContractError("greedy_policy needs finite values")
    q_values = mdp.reward + (mdp.kernel @ values).reshape(mdp.n_states, mdp.n_actions)
    best = q_values.max(axis=1, keepdims=True)
    indices = np.argmax(q_values >= best - tie_tol, axis=1)
    return Policy(tuple(int(i) for i in indices), tuple(mdp.actions))


def relative_value_iteration(mdp: TabularMdp, tol: float = 1e-10,
                             max_iter: int = 10**6) -> SolveResult:
    """Relative value iteration for the average-reward criterion.

    Iterates h <- max_a (r + P_a h), re-pinned so the reference state (all
    queues empty, all links Available, index 0) stays at 0, until the span of
    the Bellman increment drops below tol. The gain is the midpoint of the
    final increment, exact to within span/2. If the span stalls (periodic
    structure), iterations continue on the damped kernel 0.5*I + 0.5*P, which
    leaves the gain and the greedy policy unchanged and doubles the bias; the
    returned bias is scaled back.
    """
    n_states, n_actions = mdp.n_states, mdp.n_actions
    h = np.zeros(n_states)
    damped = False
    best_span = np.inf
    span = np.inf
    stall = 0
    for iteration in range(1, max_iter + 1):
        backed = (mdp.kernel @ h).reshape(n_states, n_actions)
        if damped:
            updated = 0.5 * h + (mdp.reward + 0.5 * backed).max(axis=1)
        else:
            updated = (mdp.reward + backed).max(axis=1)
        increment = updated - h
        span = float(increment.max() - increment.min())
        gain = float((increment.max() + increment.min()) / 2.0)
        h = updated - updated[0]
        if span < tol:
            bias = h / 2.0 if damped else h
            return SolveResult(
                policy=greedy_policy(mdp, bias),
                gain=gain,
                bias=bias,
                iterations=iteration,
                span_residual=span,
                gain_error_bound=span / 2.0,
                damped=damped,
            )
        if span < best_span * (1.0 - 1e-6):
            best_span = span
            stall = 0
        else:
            stall += 1
            if stall >= 25 and not damped:
                damped = True
                h = 2.0 * h  # damped fixed point is twice the undamped bias
                best_span = np.inf
                stall = 0
    raise ConvergenceError(
        f"no convergence in {max_iter} iterations", residual=span)


def policy_gain(mdp: TabularMdp, policy: Policy, tol: float = 1e-10):
    """Exact gain of a fixed policy via its stationary distribution.

    Solves pi P = pi, sum(pi) = 1 by a direct linear least-squares solve and
    verifies the L1 residual; returns (gain, pi).
    """
    if len(policy) != mdp.n_states:
        raise ContractError(
            f"policy covers {len(policy)} states, model has {mdp.n_states}")
    n = mdp.n_states
    row_ids = np.arange(n) * mdp.n_actions + np.asarray(policy.action_indices)
    chain = mdp.kernel[row_ids].toarray()
    system = np.vstack([chain.T - np.eye(n), np.ones(n)])
    target = np.zeros(n + 1)
    target[-1] = 1.0
    pi = np.linalg.lstsq(system, target, rcond=None)[0]
    pi = np.maximum(pi, 0.0)
    pi /= pi.sum()
    residual = float(np.abs(pi @ chain - pi).sum())
    if residual >= tol:
        raise ConvergenceError(
            "stationary distribution residual above tolerance", residual=residual)
    rewards = mdp.reward[np.arange(n), list(policy.action_indices)]
    return float(pi @ rewards), pi


def constant_policy(mdp: TabularMdp, counts, drop: bool = False) -> Policy:
    """Policy playing one fixed action everywhere; the action must exist."""
    wanted = ActionVector(tuple(counts), drop=drop)
    try:
        index = mdp.actions.index(wanted)
    except ValueError:
        raise ContractError(f"action {wanted.label()} is not in the action list") from None
    return Policy((index,) * mdp.n_states, tuple(mdp.actions))


def _link_weights(config: SystemConfig) -> np.ndarray:
    """Mean packets a link can move per slot, as a split weight."""
    k = block_packet_count(config)
    weights = []
    for link in config.links:
        if isinstance(link, OnOffLink):
            weights.append((1.0 - link.p_out) * k)
        else:
            weights.append(link.service_rate(config.packet_bits) * config.slot_seconds)
    return np.array(weights)


def full_replication_policy(mdp: TabularMdp) -> Policy:
    """One complete copy of the block on every link, in every state."""
    k = block_packet_count(mdp.config)
    return constant_policy(mdp, (k,) * len(mdp.config.links))


def proportional_split_policy(mdp: TabularMdp) -> Policy:
    """K packets split across links proportionally to mean per-slot service."""
    k = block_packet_count(mdp.config)
    weights = _link_weights(mdp.config)
    if weights.sum() == 0.0:
        weights = np.ones_like(weights)
    shares = k * weights / weights.sum()
    counts = np.floor(shares).astype(int)
    remainders = shares - counts
    for _ in range(k - counts.sum()):
        pick = int(np.argmax(remainders))
        counts[pick] += 1
        remainders[pick] = -1.0
    return constant_policy(mdp, tuple(int(c) for c in counts))


def single_link_policy(mdp: TabularMdp) -> Policy:
    """The whole block on the single link with the largest mean service."""
    k = block_packet_count(mdp.config)
    counts = [0] * len(mdp.config.links)
    counts[int(np.argmax(_link_weights(mdp.config)))] = k
    return constant_policy(mdp, tuple(counts))


def _action_jsonable(action: ActionVector):
    return "drop" if action.drop else list(action.counts)


def _state_jsonable(state: MdpState) -> list:
    return list(state.queues) + [_AVAIL_NAMES[f] for f in state.availability]


def round_gain(gain: float) -> float:
    """Gain rounded to 12 significant digits for stable serialization."""
    return float(f"{gain:.12g}")


def policy_to_jsonable(policy: Policy, config: SystemConfig) -> dict:
    states = enumerate_states(config)
    if len(policy) != len(states):
        raise ContractError(
            f"policy covers {len(policy)} states, config has {len(states)}")
    return {
        "config": config.to_dict(),
        "policy": [{"state": _state_jsonable(s), "action": _action_jsonable(policy.action(i))}
                   for i, s in enumerate(states)],
    }


def solve_result_to_jsonable(result: SolveResult, config: SystemConfig) -> dict:
    data = policy_to_jsonable(result.policy, config)
    data.update({
        "gain": round_gain(result.gain),
        "gain_error_bound": result.gain_error_bound,
        "iterations": result.iterations,
        "span_residual": result.span_residual,
        "damped": result.damped,
        "bias": [float(v) for v in result.bias],
    })
    return data


def policy_from_jsonable(data: dict, config: SystemConfig) -> Policy:
    """Load a policy written by policy_to_jsonable, validated against config.

    Raises ContractError when the states in the file do not line up with the
    config's state enumeration or an action is not feasible.
    """
    if not isinstance(data, dict) or "policy" not in data:
        raise ContractError("policy document needs a 'policy' list")
    states = enumerate_states(config)
    entries = data["policy"]
    if len(entries) != len(states):
        raise ContractError(
            f"policy file has {len(entries)} states, config has {len(states)}")
    actions = enumerate_actions(config)
    action_index = {(_a.counts, _a.drop): i for i, _a in enumerate(actions)}
    indices = []
    for i, (entry, state) in enumerate(zip(entries, states)):
        if entry.get("state") != _state_jsonable(state):
            raise ContractError(
                f"policy state {entry.get('state')} at position {i} does not match "
                f"the config's state {_state_jsonable(state)}")
        spec = entry.get("action")
        if spec == "drop":
            key = ((0,) * len(config.links), True)
        elif isinstance(spec, list) and all(isinstance(n, int) for n in spec):
            key = (tuple(spec), False)
        else:
            raise ContractError(f"unreadable action {spec!r} at position {i}")
        if key not in action_index:
            raise ContractError(f"action {spec!r} at position {i} is not feasible")
        indices.append(action_index[key])
    return Policy(tuple(indices), tuple(actions))


def policy_from_file(path, config: SystemConfig) -> Policy:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ContractError(f"{path} is not valid JSON: {exc}") from exc
    return policy_from_jsonable(data, config)
