"""Adversary drop policies and the ambient network-failure gate."""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum

from .circuit import CircuitClass, Kind

DEFAULT_FAILURE_RATE = 0.23

# Patterns the shrewd adversary always forwards: every circuit with a
# compromised exit, plus all-honest circuits.
SHREWD_FORWARDED = frozenset({"HHH", "HHC", "CHC", "CCC", "HCC"})


class StrategyKind(str, Enum):
    NONE = "none"
    SIMPLE = "simple"
    SHREWD = "shrewd"


@dataclass(frozen=True)
class AdversaryStrategy:
    kind: StrategyKind = StrategyKind.SIMPLE
    drop_rate: float = 1.0

    def __post_init__(self):
        if not 0 <= self.drop_rate <= 1:
            raise ValueError(f"drop rate must be in [0, 1], got {self.drop_rate}")

    def drops(self, cls: CircuitClass) -> bool:
        """Whether this class is a drop target at all (before applying d)."""
        if self.kind is StrategyKind.NONE:
            return False
        if self.kind is StrategyKind.SIMPLE:
            return cls.kind is Kind.OTHER
        return cls.pattern not in SHREWD_FORWARDED


@dataclass(frozen=True)
class Environment:
    f: float = DEFAULT_FAILURE_RATE

    def __post_init__(self):
        if not 0 <= self.f < 1:
            raise ValueError(f"failure rate must be in [0, 1), got {self.f}")


def _bernoulli(p: float, rng: random.Random) -> bool:
    # p of exactly 0 or 1 consumes no randomness, which keeps streams aligned
    # across strategies that differ only in which classes they target.
    if p <= 0:
        return False
    if p >= 1:
        return True
    return rng.random() < p


def circuit_survives_adversary(cls: CircuitClass, strat: AdversaryStrategy, rng: random.Random) -> bool:
    return not (strat.drops(cls) and _bernoulli(strat.drop_rate, rng))


def network_ok(env: Environment, rng: random.Random) -> bool:
    return not _bernoulli(env.f, rng)


def attempt_retrieval(cls: CircuitClass, strat: AdversaryStrategy, env: Environment, rng: random.Random) -> bool:
    """One retrieval through a circuit: adversary gate, then independent network failure."""
    return circuit_survives_adversary(cls, strat, rng) and network_ok(env, rng)


def is_compromised_usage(cls: CircuitClass) -> bool:
    return cls.kind is Kind.CXC
