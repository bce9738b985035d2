"""System configuration and per-link stochastic primitives.

A system moves in slots of length T = 1/fps seconds. Every slot one block of
frame_bits is generated, coded into packets of packet_bits, and scheduled
across parallel links. Links are either on/off (two-state Markov availability)
or exponential (memoryless per-packet service at a mean capacity).
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass

import numpy as np
from scipy.stats import poisson

from .errors import ConfigError, InfeasibleParameterError, ModelMismatchError

_RATE_UNITS = {"b": 1.0, "kb": 1e3, "mb": 1e6, "gb": 1e9}
_RATE_RE = re.compile(r"^\s*([0-9.eE+-]+)\s*([kMGkmg]?)(b|bit|bits)\s*/\s*s\s*$")


def parse_rate(value) -> float:
    """Return a rate in bits/s from a number or a string like '36 Mb/s'."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, str):
        m = _RATE_RE.match(value)
        if m:
            mag, prefix, _ = m.groups()
            try:
                return float(mag) * _RATE_UNITS[(prefix or "") .lower() + "b"]
            except ValueError:
                pass
    raise ConfigError("capacity_bps", f"not a rate: {value!r} (use bits/s or e.g. '36 Mb/s')")


@dataclass(frozen=True)
class OnOffLink:
    """Two-state availability chain: Available delivers everything sent in the
    slot, Outage delivers nothing."""

    p_out: float
    mean_outage_slots: float
    kind = "onoff"

    def __post_init__(self):
        if not 0.0 <= self.p_out < 1.0:
            raise ConfigError("p_out", f"must be in [0, 1), got {self.p_out}")
        if self.mean_outage_slots < 1.0:
            raise ConfigError("mean_outage_slots", f"must be >= 1, got {self.mean_outage_slots}")
        onoff_transition_matrix(self.p_out, self.mean_outage_slots)  # feasibility

    def to_dict(self):
        return {"type": "onoff", "p_out": self.p_out, "mean_outage_slots": self.mean_outage_slots}


@dataclass(frozen=True)
class ExponentialLink:
    """Backlogged FIFO link with i.i.d. exponential per-packet service times."""

    capacity_bps: float
    kind = "exponential"

    def __post_init__(self):
        object.__setattr__(self, "capacity_bps", parse_rate(self.capacity_bps))
        if self.capacity_bps < 0:
            raise ConfigError("capacity_bps", f"must be >= 0, got {self.capacity_bps}")

    def service_rate(self, packet_bits: int) -> float:
        """Packet completions per second: mu = capacity / packet size."""
        return self.capacity_bps / packet_bits

    def to_dict(self):
        return {"type": "exponential", "capacity_bps": self.capacity_bps}


def _make_link(entry) -> OnOffLink | ExponentialLink:
    if not isinstance(entry, dict) or "type" not in entry:
        raise ConfigError("links", f"each link needs a 'type' field, got {entry!r}")
    kind = entry["type"]
    fields = {k: v for k, v in entry.items() if k != "type"}
    try:
        if kind == "onoff":
            return OnOffLink(**fields)
        if kind == "exponential":
            return ExponentialLink(**fields)
    except TypeError as exc:
        raise ConfigError("links", f"bad fields for {kind} link: {exc}") from exc
    raise ConfigError("links", f"unknown link type {kind!r} (use 'onoff' or 'exponential')")


@dataclass(frozen=True)
class SystemConfig:
    """Full system description; immutable and safe to share across workers."""

    fps: float
    frame_bits: int
    packet_bits: int
    deadline_slots: float
    links: tuple
    q_max: int = 4
    n_cap: int | None = None
    allow_drop: bool = True

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(
            link if isinstance(link, (OnOffLink, ExponentialLink)) else _make_link(link)
            for link in self.links))
        if self.fps <= 0:
            raise ConfigError("fps", f"must be > 0, got {self.fps}")
        if self.frame_bits < 1:
            raise ConfigError("frame_bits", f"must be >= 1, got {self.frame_bits}")
        if self.packet_bits < 1:
            raise ConfigError("packet_bits", f"must be >= 1, got {self.packet_bits}")
        if self.deadline_slots < 1.0:
            raise ConfigError("deadline_slots", f"must be >= 1, got {self.deadline_slots}")
        if not self.links:
            raise ConfigError("links", "at least one link is required")
        if self.q_max < 0:
            raise ConfigError("q_max", f"must be >= 0, got {self.q_max}")
        k = block_packet_count(self)
        if self.n_cap is None:
            object.__setattr__(self, "n_cap", 2 * k)
        if not k <= self.n_cap <= 2 * k * len(self.links):
            raise ConfigError(
                "n_cap", f"must satisfy K={k} <= n_cap <= 2K*links={2 * k * len(self.links)}, got {self.n_cap}")

    @property
    def slot_seconds(self) -> float:
        return 1.0 / self.fps

    @property
    def block_packets(self) -> int:
        return block_packet_count(self)

    def to_dict(self) -> dict:
        return {
            "fps": self.fps,
            "frame_bits": self.frame_bits,
            "packet_bits": self.packet_bits,
            "deadline_slots": self.deadline_slots,
            "q_max": self.q_max,
            "n_cap": self.n_cap,
            "allow_drop": self.allow_drop,
            "links": [link.to_dict() for link in self.links],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SystemConfig":
        if not isinstance(data, dict):
            raise ConfigError("config", f"expected an object, got {type(data).__name__}")
        known = {"fps", "frame_bits", "packet_bits", "deadline_slots",
                 "links", "q_max", "n_cap", "allow_drop"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown field")
        missing = {"fps", "frame_bits", "packet_bits", "deadline_slots", "links"} - set(data)
        if missing:
            raise ConfigError(sorted(missing)[0], "required field missing")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "SystemConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError("config", f"{path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)


def block_packet_count(config: SystemConfig) -> int:
    """Number of source packets per block, K = ceil(frame_bits / packet_bits).

    Any K of the coded packets decode the block; the last source packet may
    carry padding.
    """
    return -(-config.frame_bits // config.packet_bits)


def onoff_transition_matrix(p_out: float, mean_outage_slots: float) -> np.ndarray:
    """Per-slot transition matrix over (Available, Outage) for an on/off link.

    P(Outage -> Available) = 1/mean_outage_slots; P(Available -> Outage) is set
    by stationarity so the long-run outage mass equals p_out exactly.
    """
    if not 0.0 <= p_out < 1.0:
        raise ConfigError("p_out", f"must be in [0, 1), got {p_out}")
    if mean_outage_slots < 1.0:
        raise ConfigError("mean_outage_slots", f"must be >= 1, got {mean_outage_slots}")
    recover = 1.0 / mean_outage_slots
    fail = (p_out / (1.0 - p_out)) * recover
    if fail > 1.0:
        raise InfeasibleParameterError(
            "p_out", f"p_out={p_out} with mean_outage_slots={mean_outage_slots} "
            f"needs P(Available->Outage)={fail:.4f} > 1")
    return np.array([[1.0 - fail, fail], [recover, 1.0 - recover]])


def onoff_stationary(matrix: np.ndarray) -> np.ndarray:
    """Stationary distribution (available_mass, outage_mass) of a 2x2 chain."""
    fail, recover = matrix[0, 1], matrix[1, 0]
    if fail + recover == 0.0:
        return np.array([1.0, 0.0])  # absorbed wherever it starts; Available by convention
    return np.array([recover, fail]) / (fail + recover)


@dataclass(frozen=True)
class ServicePmf:
    """Distribution of packet completions on a backlogged link over a window."""

    probabilities: np.ndarray
    truncation_mass: float

    def __post_init__(self):
        object.__setattr__(self, "probabilities", np.asarray(self.probabilities, dtype=float))

    def mean(self) -> float:
        p = self.probabilities
        return float(np.arange(len(p)) @ p)


def service_pmf(link, duration_slots: float, config: SystemConfig,
                epsilon: float = 1e-12) -> ServicePmf:
    """Poisson pmf of completions over duration_slots slots on an exponential link.

    i.i.d. exponential service times form a Poisson completion process, so the
    count over a window of w seconds is Poisson(mu * w). The pmf is cut at the
    smallest length whose tail is below epsilon; the tail mass is recorded.
    """
    if not isinstance(link, ExponentialLink):
        raise ModelMismatchError(
            "service_pmf is defined for exponential links only; on/off links "
            "deliver all-or-nothing per slot")
    if duration_slots < 0:
        raise ConfigError("duration_slots", f"must be >= 0, got {duration_slots}")
    mu = link.service_rate(config.packet_bits) * duration_slots * config.slot_seconds
    if mu == 0.0:
        return ServicePmf(np.array([1.0]), 0.0)
    # smallest m with P(X > m) < epsilon
    m = int(poisson.isf(epsilon, mu)) + 1
    while poisson.sf(m, mu) >= epsilon:
        m += 1
    probs = poisson.pmf(np.arange(m + 1), mu)
    return ServicePmf(probs, float(poisson.sf(m, mu)))
