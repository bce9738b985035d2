"""Seeded Monte Carlo execution of a policy, as an empirical cross-check.

The simulator replays the exact slot-level delivery and queue semantics of
the analytic model, so any disagreement with policy_gain points at the solver
or the kernel, not at a modeling difference. Randomness comes from
counter-based Philox streams keyed by (seed, link, draw kind), which makes
reports bit-identical for identical inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import ContractError
from .mdp import _AVAIL_NAMES, _state_radices, enumerate_states
from .model import OnOffLink, SystemConfig, block_packet_count, onoff_transition_matrix
from .solver import Policy

_JIT_RUN = None


def wilson_interval(successes: int, trials: int, confidence: float = 0.99):
    """Wilson score interval; boundary cases pin to exact 0 and 1."""
    if trials <= 0:
        raise ContractError("wilson_interval needs trials > 0")
    if not 0 <= successes <= trials:
        raise ContractError("successes must lie in [0, trials]")
    if not 0.0 < confidence < 1.0:
        raise ContractError("confidence must lie in (0, 1)")
    z = float(norm.ppf((1.0 + confidence) / 2.0))
    p_hat = successes / trials
    denom = 1.0 + z * z / trials
    center = (p_hat + z * z / (2 * trials)) / denom
    half = z * np.sqrt(p_hat * (1.0 - p_hat) / trials + z * z / (4.0 * trials * trials)) / denom
    low = 0.0 if successes == 0 else max(0.0, center - half)
    high = 1.0 if successes == trials else min(1.0, center + half)
    return low, high


@dataclass(frozen=True)
class ReliabilityReport:
    """Outcome counts with a 99% Wilson interval and the visit histogram."""

    blocks_total: int
    blocks_on_time: int
    estimate: float
    ci_low: float
    ci_high: float
    seed: int
    state_visit_histogram: dict

    def to_jsonable(self) -> dict:
        return {
            "blocks_total": self.blocks_total,
            "blocks_on_time": self.blocks_on_time,
            "estimate": self.estimate,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "seed": self.seed,
            "state_visit_histogram": dict(self.state_visit_histogram),
        }


def state_key(queues, flags) -> str:
    """Tuple-style text key, e.g. '(0, 3, Outage)'."""
    parts = [str(int(q)) for q in queues] + [_AVAIL_NAMES[int(f)] for f in flags]
    return "(" + ", ".join(parts) + ")"


def _run(n_blocks, counts_by_state, ltype, lcol, k_min, q_max,
         weight_q, weight_f, n_draws, a_draws, uniforms, avail_prob, visits):
    """Sequential block loop; shared verbatim by the compiled and plain paths."""
    n_links = ltype.shape[0]
    queues = np.zeros(n_links, dtype=np.int64)
    flags = np.zeros(weight_f.shape[0], dtype=np.int64)
    on_time = 0
    index = 0
    for t in range(n_blocks):
        visits[index] += 1
        total = 0
        for i in range(n_links):
            count = counts_by_state[index, i]
            if ltype[i] == 0:
                served = n_draws[t, lcol[i]] - queues[i]
                if served < 0:
                    served = 0
                if served > count:
                    served = count
                total += served
            elif flags[lcol[i]] == 0:
                total += count
        if total >= k_min:
            on_time += 1
        for i in range(n_links):
            count = counts_by_state[index, i]
            if ltype[i] == 0:
                backlog = queues[i] + count - a_draws[t, lcol[i]]
                if backlog < 0:
                    backlog = 0
                if backlog > q_max:
                    backlog = q_max
                queues[i] = backlog
            elif flags[lcol[i]] == 0:
                queues[i] = 0
            else:
                backlog = queues[i] + count
                queues[i] = backlog if backlog < q_max else q_max
        for m in range(flags.shape[0]):
            flags[m] = 0 if uniforms[t, m] < avail_prob[m, flags[m]] else 1
        index = 0
        for i in range(n_links):
            index += queues[i] * weight_q[i]
        for m in range(flags.shape[0]):
            index += flags[m] * weight_f[m]
    return on_time


def _compiled_run():
    global _JIT_RUN
    if _JIT_RUN is None:
        import numba
        _JIT_RUN = numba.njit(cache=False)(_run)
    return _JIT_RUN


def simulate(config: SystemConfig, policy: Policy, n_blocks: int, seed: int,
             jit=None) -> ReliabilityReport:
    """Run n_blocks decision epochs and report on-time reliability.

    The walk starts in the all-empty, all-Available state. Per block the
    policy's action is applied with the same delivery and queue rules the
    tabular model uses; service counts are Poisson draws over the deadline
    window (reward) and the slot window (backlog), drawn independently.
    jit selects the compiled inner loop (None = use it when available); both
    paths produce identical reports.
    """
    if n_blocks <= 0:
        raise ContractError("n_blocks must be > 0")
    if seed < 0 or seed >= 2**63:
        raise ContractError("seed must fit in a non-negative 63-bit integer")
    states = enumerate_states(config)
    if len(policy) != len(states):
        raise ContractError(
            f"policy covers {len(policy)} states, config has {len(states)}")
    n_links = len(config.links)
    counts_by_state = np.zeros((len(states), n_links), dtype=np.int64)
    for s in range(len(states)):
        action = policy.action(s)
        if len(action.counts) != n_links:
            raise ContractError("policy action arity does not match the link count")
        counts_by_state[s] = action.counts

    ltype = np.zeros(n_links, dtype=np.int64)  # 0 exponential, 1 on/off
    lcol = np.zeros(n_links, dtype=np.int64)
    exp_cols, onoff_cols = 0, 0
    matrices = []
    for i, link in enumerate(config.links):
        if isinstance(link, OnOffLink):
            ltype[i], lcol[i] = 1, onoff_cols
            onoff_cols += 1
            matrices.append(onoff_transition_matrix(link.p_out, link.mean_outage_slots))
        else:
            ltype[i], lcol[i] = 0, exp_cols
            exp_cols += 1

    radices = _state_radices(config)
    weights = np.ones(len(radices), dtype=np.int64)
    for pos in range(len(radices) - 2, -1, -1):
        weights[pos] = weights[pos + 1] * radices[pos + 1]
    weight_q, weight_f = weights[:n_links], weights[n_links:]

    n_draws = np.zeros((n_blocks, max(exp_cols, 1)), dtype=np.int64)
    a_draws = np.zeros((n_blocks, max(exp_cols, 1)), dtype=np.int64)
    uniforms = np.zeros((n_blocks, max(onoff_cols, 1)))
    avail_prob = np.zeros((max(onoff_cols, 1), 2))
    for i, link in enumerate(config.links):
        if isinstance(link, OnOffLink):
            avail_prob[lcol[i]] = matrices[lcol[i]][:, 0]
            stream = np.random.Generator(np.random.Philox(key=[seed, i * 8 + 2]))
            uniforms[:, lcol[i]] = stream.random(n_blocks)
        else:
            mu = link.service_rate(config.packet_bits) * config.slot_seconds
            stream = np.random.Generator(np.random.Philox(key=[seed, i * 8 + 0]))
            n_draws[:, lcol[i]] = stream.poisson(mu * config.deadline_slots, n_blocks)
            stream = np.random.Generator(np.random.Philox(key=[seed, i * 8 + 1]))
            a_draws[:, lcol[i]] = stream.poisson(mu, n_blocks)

    visits = np.zeros(len(states), dtype=np.int64)
    use_jit = jit if jit is not None else True
    runner = _run
    if use_jit:
        try:
            runner = _compiled_run()
        except ImportError:
            if jit:
                raise
            runner = _run
    on_time = int(runner(n_blocks, counts_by_state, ltype, lcol,
                         block_packet_count(config), config.q_max,
                         weight_q, weight_f, n_draws, a_draws, uniforms,
                         avail_prob, visits))

    histogram = {}
    for s, state in enumerate(states):
        if visits[s] > 0:
            histogram[state_key(state.queues, state.availability)] = int(visits[s])
    low, high = wilson_interval(on_time, n_blocks)
    return ReliabilityReport(
        blocks_total=n_blocks,
        blocks_on_time=on_time,
        estimate=on_time / n_blocks,
        ci_low=low,
        ci_high=high,
        seed=seed,
        state_visit_histogram=histogram,
    )
