"""Shared fixtures: bundled configs and their solved reference instances.

Solves are session-scoped because several test modules assert against the
same three reference systems and solving them repeatedly would dominate the
suite's runtime.
"""

import importlib.resources as resources

import pytest

from parlink import SystemConfig, build_mdp, relative_value_iteration


def bundled_config(name: str) -> SystemConfig:
    return SystemConfig.from_file(resources.files("parlink") / "configs" / name)


@pytest.fixture(scope="session")
def sub6_config():
    return bundled_config("pure-sub6.cfg")


@pytest.fixture(scope="session")
def mmwave_config():
    return bundled_config("pure-mmwave.cfg")


@pytest.fixture(scope="session")
def mixed_config():
    return bundled_config("mixed.cfg")


@pytest.fixture(scope="session")
def toy_config():
    # two always-recovering on/off links, one packet per block, no queueing:
    # the only failure mode is both links down at decision time, so the
    # optimal gain is exactly 1 - p1*p2 = 65/66
    return SystemConfig(
        fps=120,
        frame_bits=40000,
        packet_bits=40000,
        deadline_slots=1.5,
        q_max=0,
        n_cap=2,
        links=(
            {"type": "onoff", "p_out": 1 / 11, "mean_outage_slots": 1},
            {"type": "onoff", "p_out": 1 / 6, "mean_outage_slots": 1},
        ),
    )


def _solve(config):
    mdp = build_mdp(config)
    return mdp, relative_value_iteration(mdp)


@pytest.fixture(scope="session")
def sub6_solution(sub6_config):
    return _solve(sub6_config)


@pytest.fixture(scope="session")
def mmwave_solution(mmwave_config):
    return _solve(mmwave_config)


@pytest.fixture(scope="session")
def mixed_solution(mixed_config):
    return _solve(mixed_config)


@pytest.fixture(scope="session")
def toy_solution(toy_config):
    return _solve(toy_config)
