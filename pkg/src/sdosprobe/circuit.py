"""Three-hop circuits: building, honesty classification, and exit-swap probes."""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .directory import (
    Directory,
    Exclusions,
    GuardSet,
    Relay,
    Role,
    SamplingError,
    compatible,
    weighted_sample,
)

DEFAULT_BUILD_RETRIES = 100


class Mode(str, Enum):
    """How relays are drawn.

    MATCH reproduces the closed-form model: hops drawn independently with
    replacement and no /16 or family constraints.
    REALISTIC enforces Tor path constraints (distinct relays, /16 and family).
    """

    MATCH = "match"
    REALISTIC = "realistic"


class PathConstraintError(ValueError):
    pass


class CircuitBuildError(RuntimeError):
    pass


class Kind(str, Enum):
    HHH = "HHH"
    CXC = "CXC"
    OTHER = "OTHER"


@dataclass(frozen=True)
class CircuitClass:
    pattern: str  # honesty of (entry, middle, exit), e.g. "HCH"

    @property
    def kind(self) -> Kind:
        if self.pattern == "HHH":
            return Kind.HHH
        if self.pattern[0] == "C" and self.pattern[2] == "C":
            return Kind.CXC
        return Kind.OTHER

    def __str__(self):
        k = self.kind
        return k.value if k is not Kind.OTHER else f"OTHER({self.pattern})"


ALL_PATTERNS = tuple(a + b + c for a in "HC" for b in "HC" for c in "HC")
_CLASSES = {p: CircuitClass(p) for p in ALL_PATTERNS}


def class_of(entry_c: bool, middle_c: bool, exit_c: bool) -> CircuitClass:
    return _CLASSES["HC"[entry_c] + "HC"[middle_c] + "HC"[exit_c]]


@dataclass(frozen=True)
class Circuit:
    entry: Relay
    middle: Relay
    exit: Relay

    @property
    def relays(self) -> tuple[Relay, Relay, Relay]:
        return (self.entry, self.middle, self.exit)

    def satisfies_constraints(self) -> bool:
        e, m, x = self.relays
        return compatible(e, m) and compatible(e, x) and compatible(m, x)


@dataclass(frozen=True)
class ProbeCircuit:
    base: Circuit
    swapped_exit: Relay
    swapped_middle: Relay | None = None

    @property
    def circuit(self) -> Circuit:
        return Circuit(self.base.entry, self.swapped_middle or self.base.middle, self.swapped_exit)


def classify(c: Circuit | ProbeCircuit) -> CircuitClass:
    if isinstance(c, ProbeCircuit):
        c = c.circuit
    return class_of(c.entry.compromised, c.middle.compromised, c.exit.compromised)


def _pick_entry(guards: GuardSet | None, directory: Directory, rng: random.Random, weighted: bool) -> Relay:
    if guards is None:
        # no guard set: entry drawn from the whole guard-flagged population
        return weighted_sample(directory, Role.GUARD, rng)
    if weighted:
        return rng.choices(guards.guards, weights=[r.bandwidth for r in guards.guards])[0]
    return guards.guards[rng.randrange(len(guards.guards))]


def build_circuit(
    directory: Directory,
    guards: GuardSet | None,
    rng: random.Random,
    mode: Mode = Mode.REALISTIC,
    max_retries: int = DEFAULT_BUILD_RETRIES,
    weighted_entry: bool = False,
) -> Circuit:
    """Build one circuit: entry from the guard set, then exit, then middle.

    The entry is uniform over the guard set so that a user with g*G bad
    guards uses a bad entry with probability exactly g; ``weighted_entry``
    weights it by bandwidth instead (REALISTIC mode only). ``guards=None``
    draws the entry from all guard-flagged relays (the model without guard
    sets).
    """
    weighted_entry = weighted_entry and mode is Mode.REALISTIC
    entry = _pick_entry(guards, directory, rng, weighted_entry)
    if mode is Mode.MATCH:
        exit_ = weighted_sample(directory, Role.EXIT, rng)
        middle = weighted_sample(directory, Role.MIDDLE, rng)
        return Circuit(entry, middle, exit_)
    for _ in range(max_retries):
        try:
            exit_ = weighted_sample(directory, Role.EXIT, rng, Exclusions.for_relays(entry))
            middle = weighted_sample(directory, Role.MIDDLE, rng, Exclusions.for_relays(entry, exit_))
            return Circuit(entry, middle, exit_)
        except SamplingError:
            entry = _pick_entry(guards, directory, rng, weighted_entry)
    raise CircuitBuildError(f"no valid circuit after {max_retries} attempts")


def make_probe_circuit(
    base: Circuit,
    candidate_exit: Relay,
    directory: Directory,
    rng: random.Random,
    randomize_middle: bool = False,
    mode: Mode = Mode.REALISTIC,
    middle_pool: Sequence[Relay] | None = None,
) -> ProbeCircuit:
    """Swap the exit of ``base`` for ``candidate_exit``.

    With ``randomize_middle`` a fresh middle is drawn, uniformly from
    ``middle_pool`` when given (phase 2 passes the middles of other
    phase-1 survivors) and bandwidth-weighted from the directory otherwise.
    In REALISTIC mode the new middle must fit the retained entry and the
    new exit, and the caller is expected to drop already-used middles from
    the pool.
    """
    realistic = mode is Mode.REALISTIC
    if realistic:
        if candidate_exit.id == base.exit.id:
            raise PathConstraintError("candidate exit equals the evaluated circuit's exit")
        if not compatible(base.entry, candidate_exit):
            raise PathConstraintError("candidate exit conflicts with the entry")
    middle = None
    if randomize_middle:
        if middle_pool:
            pool = middle_pool
            if realistic:
                pool = [m for m in pool if compatible(m, base.entry) and compatible(m, candidate_exit)]
            if pool:
                middle = pool[rng.randrange(len(pool))]
        if middle is None:
            excl = Exclusions.for_relays(base.entry, candidate_exit) if realistic else Exclusions()
            try:
                middle = weighted_sample(directory, Role.MIDDLE, rng, excl)
            except SamplingError as e:
                raise PathConstraintError(str(e)) from None
    elif realistic and not compatible(base.middle, candidate_exit):
        raise PathConstraintError("candidate exit conflicts with the retained middle")
    return ProbeCircuit(base, candidate_exit, middle)


def exit_fits(base: Circuit, candidate_exit: Relay, randomize_middle: bool, mode: Mode) -> bool:
    """Whether ``candidate_exit`` can replace ``base.exit`` without violating constraints."""
    if mode is Mode.MATCH:
        return True
    if candidate_exit.id == base.exit.id or not compatible(base.entry, candidate_exit):
        return False
    return randomize_middle or compatible(base.middle, candidate_exit)
