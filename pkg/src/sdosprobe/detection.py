"""Two-phase circuit vetting.

Phase 1 keeps building circuits until N of them complete a test retrieval.
Phase 2 vets each of those by swapping in the exits of K other survivors and
accepting it when at least Th of the K probes succeed.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field

from . import rng as rngmod
from .adversary import (
    AdversaryStrategy,
    Environment,
    StrategyKind,
    attempt_retrieval,
    circuit_survives_adversary,
    network_ok,
)
from .circuit import Circuit, Kind, Mode, build_circuit, classify, exit_fits, make_probe_circuit
from .directory import Directory, GuardSet

log = logging.getLogger(__name__)

DEFAULT_ATTEMPT_BUDGET = 10_000


class Phase1Exhausted(RuntimeError):
    """Phase 1 ran out of its attempt budget before collecting N circuits."""


@dataclass(frozen=True)
class DetectionParams:
    N: int = 10
    K: int = 3
    Th: int = 2

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be at least 2")
        if not 1 <= self.K < self.N:
            raise ValueError(f"need 1 <= K < N, got K={self.K}, N={self.N}")
        if not 1 <= self.Th <= self.K:
            raise ValueError(f"need 1 <= Th <= K, got Th={self.Th}, K={self.K}")


@dataclass
class Phase1Result:
    circuits: list[Circuit]
    attempts: int
    # attempts that got past the adversary but hit a random network failure
    network_failures: int = 0


@dataclass
class Evaluation:
    circuit: Circuit
    probes: int
    successes: int
    threshold: int  # Th' actually applied

    @property
    def accepted(self) -> bool:
        return self.successes >= self.threshold


@dataclass
class DetectionResult:
    evaluations: list[Evaluation]
    lost: list[Circuit] = field(default_factory=list)
    phase1_attempts: int = 0
    phase1_network_failures: int = 0

    @property
    def accepted(self) -> list[Circuit]:
        return [e.circuit for e in self.evaluations if e.accepted]

    @property
    def rejected(self) -> list[Circuit]:
        return [e.circuit for e in self.evaluations if not e.accepted]

    @property
    def phase2_probes(self) -> int:
        return sum(e.probes for e in self.evaluations)

    @property
    def success_counts(self) -> list[int]:
        return [e.successes for e in self.evaluations]


def phase1(
    directory: Directory,
    guards: GuardSet | None,
    strat: AdversaryStrategy,
    env: Environment,
    N: int,
    rng: random.Random,
    mode: Mode = Mode.REALISTIC,
    max_attempts: int = DEFAULT_ATTEMPT_BUDGET,
) -> Phase1Result:
    if N < 2:
        raise ValueError("N must be at least 2")
    out: list[Circuit] = []
    attempts = net_fail = 0
    while len(out) < N:
        if attempts >= max_attempts:
            raise Phase1Exhausted(f"only {len(out)} of {N} working circuits after {attempts} attempts")
        attempts += 1
        c = build_circuit(directory, guards, rng, mode)
        if not circuit_survives_adversary(classify(c), strat, rng):
            continue
        if not network_ok(env, rng):
            net_fail += 1
            continue
        out.append(c)
    return Phase1Result(out, attempts, net_fail)


def phase2(
    survivors: list[Circuit],
    params: DetectionParams,
    strat: AdversaryStrategy,
    env: Environment,
    directory: Directory,
    seed,
    randomize_middle: bool = False,
    mode: Mode = Mode.REALISTIC,
    attrition: bool = True,
) -> DetectionResult:
    """Cross-check every phase-1 survivor against the exits of the others.

    ``seed`` keys the random streams: one for the attrition step and one per
    evaluated circuit, so a circuit's probes do not depend on how many draws
    earlier circuits consumed. With ``attrition`` each survivor first breaks
    independently with probability f before probing starts, which is how the
    failure-aware error model treats the pool.
    """
    if len(survivors) < 2:
        raise ValueError("phase 2 needs at least two circuits")
    alive, lost = survivors, []
    if attrition and env.f > 0:
        r = rngmod.stream(seed, "attrition")
        alive, lost = [], []
        for c in survivors:
            (alive if network_ok(env, r) else lost).append(c)

    evaluations = []
    for i, x in enumerate(alive):
        r = rngmod.stream(seed, "eval", i)
        others = [j for j in range(len(alive)) if j != i]
        eligible = [j for j in others if exit_fits(x, alive[j].exit, randomize_middle, mode)]
        k = min(params.K, len(eligible))
        th = min(params.Th, k)
        if k < params.K:
            log.debug("circuit %d: only %d eligible candidates (K=%d)", i, k, params.K)
        chosen = r.sample(eligible, k)
        pool = [alive[j].middle for j in others] if randomize_middle else None
        successes = 0
        for j in chosen:
            probe = make_probe_circuit(x, alive[j].exit, directory, r, randomize_middle, mode, pool)
            if randomize_middle and pool is not None and probe.swapped_middle in pool:
                pool.remove(probe.swapped_middle)  # no middle reused across one circuit's probes
            if attempt_retrieval(classify(probe), strat, env, r):
                successes += 1
        evaluations.append(Evaluation(x, k, successes, th))
    return DetectionResult(evaluations, lost)


@dataclass
class DetectionConfig:
    directory: Directory
    guards: GuardSet | None
    params: DetectionParams = DetectionParams()
    strategy: AdversaryStrategy = AdversaryStrategy(StrategyKind.SIMPLE, 1.0)
    env: Environment = Environment()
    mode: Mode = Mode.REALISTIC
    randomize_middle: bool = False
    attrition: bool = True
    max_attempts: int = DEFAULT_ATTEMPT_BUDGET
    seed: object = 0


def run_detection(cfg: DetectionConfig) -> DetectionResult:
    p1 = phase1(
        cfg.directory,
        cfg.guards,
        cfg.strategy,
        cfg.env,
        cfg.params.N,
        rngmod.stream(cfg.seed, "phase1"),
        cfg.mode,
        cfg.max_attempts,
    )
    res = phase2(
        p1.circuits,
        cfg.params,
        cfg.strategy,
        cfg.env,
        cfg.directory,
        (cfg.seed, "phase2"),
        cfg.randomize_middle,
        cfg.mode,
        cfg.attrition,
    )
    res.phase1_attempts = p1.attempts
    res.phase1_network_failures = p1.network_failures
    return res


def kind_counts(circuits) -> dict[Kind, int]:
    out = {k: 0 for k in Kind}
    for c in circuits:
        out[classify(c).kind] += 1
    return out
