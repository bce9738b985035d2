"""Tabular MDP assembly for joint packet coding and link scheduling.

A state pairs the per-link packet backlog with an on/off flag for each
two-state link. An action assigns coded-packet counts to links (or drops the
block). The reward of a (state, action) pair is the exact probability that at
least K of the block's coded packets arrive by the deadline; transitions
factor across links and are composed by outer products.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.sparse import csr_matrix
from scipy.stats import poisson

from .errors import CapacityError
from .model import (
    OnOffLink,
    SystemConfig,
    block_packet_count,
    onoff_transition_matrix,
)

AVAILABLE = 0
OUTAGE = 1

_AVAIL_NAMES = ("Available", "Outage")


@dataclass(frozen=True)
class MdpState:
    """Joint system state: one backlog per link, one flag per on/off link."""

    queues: tuple
    availability: tuple = ()

    def label(self) -> str:
        text = "q=" + ",".join(str(q) for q in self.queues)
        if self.availability:
            text += " " + "/".join(_AVAIL_NAMES[s] for s in self.availability)
        return text


@dataclass(frozen=True)
class ActionVector:
    """Per-link coded-packet counts; drop discards the block entirely."""

    counts: tuple
    drop: bool = False

    @property
    def total(self) -> int:
        return sum(self.counts)

    def label(self) -> str:
        if self.drop:
            return "drop"
        return "n=" + ",".join(str(n) for n in self.counts)


def _state_radices(config: SystemConfig) -> tuple:
    n_onoff = sum(1 for link in config.links if isinstance(link, OnOffLink))
    return (config.q_max + 1,) * len(config.links) + (2,) * n_onoff


def state_space_size(config: SystemConfig) -> int:
    return math.prod(_state_radices(config))


def encode_state(state: MdpState, config: SystemConfig) -> int:
    """Mixed-radix index of a state; digits are queues then flags, last digit
    fastest."""
    index = 0
    for digit, radix in zip(state.queues + state.availability, _state_radices(config)):
        index = index * radix + digit
    return index


def decode_state(index: int, config: SystemConfig) -> MdpState:
    radices = _state_radices(config)
    digits = [0] * len(radices)
    for pos in range(len(radices) - 1, -1, -1):
        index, digits[pos] = divmod(index, radices[pos])
    n_links = len(config.links)
    return MdpState(tuple(digits[:n_links]), tuple(digits[n_links:]))


def enumerate_states(config: SystemConfig, limit: int = 10**7) -> list:
    """All states in mixed-radix order.

    Raises CapacityError when the product of queue levels and flags exceeds
    the safety limit.
    """
    total = state_space_size(config)
    if total > limit:
        raise CapacityError(
            f"state space has {total} states, above the safety limit {limit}")
    n_links = len(config.links)
    return [MdpState(digits[:n_links], digits[n_links:])
            for digits in itertools.product(*[range(r) for r in _state_radices(config)])]


def enumerate_actions(config: SystemConfig) -> list:
    """All schedules n with K <= sum(n) <= n_cap and n_i <= 2K, then drop.

    Sorted by (total count, counts ascending); the same list applies in every
    state, with queue overflow handled by the transition semantics. The order
    is the tie-breaking order used by greedy policy extraction.
    """
    k = block_packet_count(config)
    per_link = min(2 * k, config.n_cap)
    vectors = [counts
               for counts in itertools.product(range(per_link + 1), repeat=len(config.links))
               if k <= sum(counts) <= config.n_cap]
    vectors.sort(key=lambda counts: (sum(counts), counts))
    actions = [ActionVector(counts) for counts in vectors]
    if config.allow_drop:
        actions.append(ActionVector((0,) * len(config.links), drop=True))
    return actions


@lru_cache(maxsize=64)
def _capped_sum_tensor(k: int) -> np.ndarray:
    """C[i, j, min(i+j, k)] = 1; contracting with it adds two capped counts."""
    tensor = np.zeros((k + 1, k + 1, k + 1))
    i, j = np.meshgrid(np.arange(k + 1), np.arange(k + 1), indexing="ij")
    np.add.at(tensor, (i, j, np.minimum(i + j, k)), 1.0)
    return tensor


@lru_cache(maxsize=256)
def _exp_reward_lut(config: SystemConfig, link_index: int) -> np.ndarray:
    """R[q, n, k] = P(min(delivered, K) = k) for an exponential link.

    The link delivers min(n, max(0, N - q)) of the block's packets, with N the
    Poisson service count over the deadline window.
    """
    link = config.links[link_index]
    k_max = block_packet_count(config)
    q_levels = config.q_max + 1
    n_hi = min(2 * k_max, config.n_cap)
    mu = link.service_rate(config.packet_bits) * config.deadline_slots * config.slot_seconds
    qs = np.arange(q_levels)
    lut = np.zeros((q_levels, n_hi + 1, k_max + 1))
    lut[:, 0, 0] = 1.0
    for n in range(1, n_hi + 1):
        cap = min(n, k_max)
        lut[:, n, 0] = poisson.cdf(qs, mu)
        for k in range(1, cap):
            lut[:, n, k] = poisson.pmf(qs + k, mu)
        lut[:, n, cap] = poisson.sf(qs + cap - 1, mu)
    lut.flags.writeable = False
    return lut


@lru_cache(maxsize=256)
def _exp_transition_lut(config: SystemConfig, link_index: int) -> np.ndarray:
    """T[q, n, q'] = P(q' = clip(q + n - A, 0, q_max)) for an exponential link.

    A is the Poisson service count over one slot; it is modeled independently
    of the reward draw.
    """
    link = config.links[link_index]
    q_levels = config.q_max + 1
    n_hi = min(2 * block_packet_count(config), config.n_cap)
    mu = link.service_rate(config.packet_bits) * config.slot_seconds
    qs = np.arange(q_levels)
    lut = np.zeros((q_levels, n_hi + 1, q_levels))
    if q_levels == 1:
        lut[:, :, 0] = 1.0
    else:
        for n in range(n_hi + 1):
            total = qs + n
            lut[:, n, 0] = poisson.sf(total - 1, mu)
            for j in range(1, config.q_max):
                lut[:, n, j] = poisson.pmf(total - j, mu)
            lut[:, n, config.q_max] = poisson.cdf(total - config.q_max, mu)
    lut.flags.writeable = False
    return lut


@lru_cache(maxsize=256)
def _onoff_matrix(config: SystemConfig, link_index: int) -> np.ndarray:
    link = config.links[link_index]
    matrix = onoff_transition_matrix(link.p_out, link.mean_outage_slots)
    matrix.flags.writeable = False
    return matrix


def _delivery_dist(config: SystemConfig, link_index: int, queue: int, flag,
                   count: int) -> np.ndarray:
    """Distribution of min(delivered, K) for one link given its local state."""
    k_max = block_packet_count(config)
    link = config.links[link_index]
    if isinstance(link, OnOffLink):
        dist = np.zeros(k_max + 1)
        dist[min(count, k_max) if flag == AVAILABLE else 0] = 1.0
        return dist
    return _exp_reward_lut(config, link_index)[queue, count]


def block_success_probability(state: MdpState, action: ActionVector,
                              config: SystemConfig) -> float:
    """P(at least K of the block's packets arrive by the deadline).

    On/off links deliver everything or nothing depending on the flag at
    decision time; exponential links deliver what the deadline window serves
    beyond the backlog. Drop scores 0.
    """
    if action.drop:
        return 0.0
    k_max = block_packet_count(config)
    cap = _capped_sum_tensor(k_max)
    dist = np.zeros(k_max + 1)
    dist[0] = 1.0
    flag_pos = 0
    for i, link in enumerate(config.links):
        flag = None
        if isinstance(link, OnOffLink):
            flag = state.availability[flag_pos]
            flag_pos += 1
        factor = _delivery_dist(config, i, state.queues[i], flag, action.counts[i])
        dist = np.einsum("i,j,ijk->k", dist, factor, cap)
    return float(dist[k_max])


def _next_queue_factors(config: SystemConfig, state: MdpState,
                        action: ActionVector) -> list:
    """Per-digit next-state distributions, in digit order (queues, flags)."""
    factors = []
    flag_pos = 0
    for i, link in enumerate(config.links):
        if isinstance(link, OnOffLink):
            flag = state.availability[flag_pos]
            flag_pos += 1
            dist = np.zeros(config.q_max + 1)
            if flag == AVAILABLE:
                dist[0] = 1.0  # in-slot flush
            else:
                dist[min(state.queues[i] + action.counts[i], config.q_max)] = 1.0
            factors.append(dist)
        else:
            factors.append(_exp_transition_lut(config, i)[state.queues[i], action.counts[i]])
    flag_pos = 0
    for i, link in enumerate(config.links):
        if isinstance(link, OnOffLink):
            factors.append(_onoff_matrix(config, i)[state.availability[flag_pos]])
            flag_pos += 1
    return factors


def transition_distribution(state: MdpState, action: ActionVector,
                            config: SystemConfig) -> dict:
    """Sparse next-state law {MdpState: probability}, renormalized to sum 1."""
    joint = np.ones(1)
    for factor in _next_queue_factors(config, state, action):
        joint = np.kron(joint, factor)
    joint /= joint.sum()
    return {decode_state(index, config): float(p)
            for index, p in enumerate(joint) if p > 0.0}


@dataclass
class TabularMdp:
    """Immutable assembled model; kernel row s * n_actions + a is P(. | s, a)."""

    config: SystemConfig
    states: list
    actions: list
    reward: np.ndarray
    kernel: csr_matrix

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def actions_of(self, state_index: int) -> list:
        """Feasible actions; identical in every state by construction."""
        return self.actions

    def state_index(self, state: MdpState) -> int:
        return encode_state(state, self.config)

    def kernel_row(self, state_index: int, action_index: int) -> np.ndarray:
        return self.kernel.getrow(state_index * self.n_actions + action_index).toarray()[0]

    def to_jsonable(self) -> dict:
        """Plain-JSON dump for inspection; large for big models."""
        dense = self.kernel.toarray().reshape(self.n_states, self.n_actions, self.n_states)
        return {
            "config": self.config.to_dict(),
            "states": [list(s.queues) + [_AVAIL_NAMES[f] for f in s.availability]
                       for s in self.states],
            "actions": [a.label() for a in self.actions],
            "reward": self.reward.tolist(),
            "kernel": dense.tolist(),
        }


def build_mdp(config: SystemConfig, limit: int = 10**7) -> TabularMdp:
    """Assemble states, actions, exact rewards, and the transition kernel.

    Vectorized over states per action; deterministic, so repeated builds are
    bit-identical. Kernel rows are renormalized to sum exactly 1 (the raw
    deficit is a few ulps from composing per-link factors).
    """
    states = enumerate_states(config, limit)
    actions = enumerate_actions(config)
    n_states, n_actions = len(states), len(actions)
    k_max = block_packet_count(config)
    q_levels = config.q_max + 1

    queues = np.array([s.queues for s in states])
    flags = np.array([s.availability for s in states]).reshape(n_states, -1)
    onoff_pos = {}  # link index -> flag column
    for i, link in enumerate(config.links):
        if isinstance(link, OnOffLink):
            onoff_pos[i] = len(onoff_pos)

    cap = _capped_sum_tensor(k_max)
    onehot0 = np.zeros((n_states, k_max + 1))
    onehot0[:, 0] = 1.0
    reward = np.zeros((n_states, n_actions))
    cube = np.zeros((n_states, n_actions, n_states))
    rows = np.arange(n_states)

    for a, action in enumerate(actions):
        if not action.drop:
            dist = onehot0
            for i in range(len(config.links)):
                count = action.counts[i]
                if i in onoff_pos:
                    factor = np.zeros((n_states, k_max + 1))
                    avail = flags[:, onoff_pos[i]] == AVAILABLE
                    factor[avail, min(count, k_max)] = 1.0
                    factor[~avail, 0] = 1.0
                else:
                    factor = _exp_reward_lut(config, i)[queues[:, i], count]
                dist = np.einsum("si,sj,ijk->sk", dist, factor, cap)
            reward[:, a] = dist[:, k_max]

        joint = np.ones((n_states, 1))
        factor_list = []
        for i in range(len(config.links)):
            count = action.counts[i]
            if i in onoff_pos:
                avail = flags[:, onoff_pos[i]] == AVAILABLE
                next_q = np.where(avail, 0, np.minimum(queues[:, i] + count, config.q_max))
                factor = np.zeros((n_states, q_levels))
                factor[rows, next_q] = 1.0
            else:
                factor = _exp_transition_lut(config, i)[queues[:, i], count]
            factor_list.append(factor)
        for i in sorted(onoff_pos):
            factor_list.append(_onoff_matrix(config, i)[flags[:, onoff_pos[i]]])
        for factor in factor_list:
            joint = (joint[:, :, None] * factor[:, None, :]).reshape(n_states, -1)
        cube[:, a, :] = joint / joint.sum(axis=1, keepdims=True)

    np.clip(reward, 0.0, 1.0, out=reward)  # clear factor-composition dust
    kernel = csr_matrix(cube.reshape(n_states * n_actions, n_states))
    kernel.eliminate_zeros()
    return TabularMdp(config, states, actions, reward, kernel)
