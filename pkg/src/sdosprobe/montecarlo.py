"""Repeated-trial harness with 95% confidence intervals over parameter sweeps."""

from __future__ import annotations

import itertools
import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path

from . import rng as rngmod
from .adversary import AdversaryStrategy, Environment, StrategyKind, attempt_retrieval
from .circuit import Kind, Mode, build_circuit, classify
from .detection import DetectionConfig, DetectionParams, run_detection
from .directory import Directory, SyntheticSpec, load_directory, select_guard_set, synthesize_directory, tag_compromised

log = logging.getLogger(__name__)

METRICS = ("fn", "fp", "pr_cxc", "pr_hhh", "pr_others", "psi", "eta", "eta_net")

Z95 = 1.96


def ci_95(samples) -> tuple[float, float]:
    """Mean and normal-approximation 95% half-width, 1.96 * s / sqrt(n)."""
    samples = list(samples)
    n = len(samples)
    if n < 2:
        raise ValueError("need at least two samples for a confidence interval")
    return statistics.fmean(samples), Z95 * statistics.stdev(samples) / math.sqrt(n)


@dataclass(frozen=True)
class GridPoint:
    t: float
    g: float
    f: float
    d: float
    N: int
    K: int
    Th: int


@dataclass
class TrialOutcome:
    cxc: int = 0  # evaluated in phase 2, by class
    hhh: int = 0
    others: int = 0
    cxc_accepted: int = 0
    hhh_accepted: int = 0
    others_accepted: int = 0
    lost: int = 0
    phase1_attempts: int = 0
    phase1_network_failures: int = 0
    phase2_probes: int = 0
    error: str | None = None

    def samples(self, d: float) -> dict[str, float | None]:
        """Per-trial metric values; None where a metric is undefined for this trial."""
        out: dict[str, float | None] = dict.fromkeys(METRICS)
        if self.error:
            return out
        if self.cxc:
            out["fn"] = self.cxc_accepted / self.cxc
        if self.hhh:
            out["fp"] = (self.hhh - self.hhh_accepted) / self.hhh
        usable = self.hhh_accepted + self.cxc_accepted + (1 - d) * self.others_accepted
        if usable > 0:
            out["pr_cxc"] = self.cxc_accepted / usable
            out["pr_hhh"] = self.hhh_accepted / usable
            out["pr_others"] = (1 - d) * self.others_accepted / usable
            # pr_others is already (1-d)-weighted; psi weights it by (1-d) once more
            den = out["pr_cxc"] + out["pr_hhh"] + (1 - d) * out["pr_others"]
            out["psi"] = 1 - out["pr_cxc"] / den
            out["eta"] = (self.phase1_attempts + self.phase2_probes) / usable
            # eta_net leaves out phase-1 attempts lost only to network failure
            out["eta_net"] = (
                self.phase1_attempts - self.phase1_network_failures + self.phase2_probes
            ) / usable
        return out


@dataclass
class Estimate:
    mean: float
    half_width: float
    n: int
    excluded: int

    @property
    def low(self) -> float:
        return self.mean - self.half_width

    @property
    def high(self) -> float:
        return self.mean + self.half_width

    @property
    def stderr(self) -> float:
        return self.half_width / Z95


@dataclass
class PointEstimate:
    point: GridPoint
    estimates: dict[str, Estimate]
    raw: dict[str, int]
    errors: int = 0
    error_messages: list[str] = field(default_factory=list)


@dataclass
class EstimateSeries:
    points: list[PointEstimate]
    strategy: StrategyKind

    def get(self, **where) -> PointEstimate:
        hits = [p for p in self.points if all(math.isclose(getattr(p.point, k), v) for k, v in where.items())]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} grid points match {where}")
        return hits[0]

    def series(self, metric: str, axis: str = "d", **where) -> list[tuple[float, Estimate]]:
        rows = [
            p
            for p in self.points
            if all(math.isclose(getattr(p.point, k), v) for k, v in where.items())
        ]
        return sorted(((getattr(p.point, axis), p.estimates[metric]) for p in rows), key=lambda r: r[0])


@dataclass
class ExperimentConfig:
    t: tuple = (0.2,)
    g: tuple = (0.0, Fraction(1, 3), Fraction(2, 3), 1.0)
    f: tuple = (0.23,)
    d: tuple = tuple(i / 10 for i in range(11))
    N: tuple = (10,)
    K: tuple = (3,)
    Th: tuple = (2,)
    trials: int = 100
    directory: SyntheticSpec | str = field(default_factory=SyntheticSpec)
    mode: Mode = Mode.REALISTIC
    randomize_middle: bool = False
    strategy: StrategyKind = StrategyKind.SIMPLE
    seed: int = 0
    guards_per_user: int = 3
    attrition: bool = True
    workers: int = 1

    def __post_init__(self):
        for axis in ("t", "g", "f", "d", "N", "K", "Th"):
            if not getattr(self, axis):
                raise ValueError(f"grid axis {axis} is empty")
        if self.trials < 2:
            raise ValueError("need at least two trials per grid point")

    def grid(self) -> list[GridPoint]:
        axes = [sorted(set(getattr(self, a))) for a in ("t", "g", "f", "d", "N", "K", "Th")]
        return [GridPoint(*combo) for combo in itertools.product(*axes)]


def base_directory(cfg: ExperimentConfig) -> Directory:
    if isinstance(cfg.directory, (str, Path)):
        return load_directory(cfg.directory)
    return synthesize_directory(cfg.directory, seed=f"{cfg.seed}:dir")


def run_trial(
    directory: Directory,
    pt: GridPoint,
    strategy: StrategyKind,
    mode: Mode,
    randomize_middle: bool,
    attrition: bool,
    guards_per_user: int,
    key,
) -> TrialOutcome:
    """One user: pick a guard set, run both detection phases, tally by class."""
    try:
        guards = select_guard_set(directory, guards_per_user, pt.g, seed=f"{key}:guards")
        cfg = DetectionConfig(
            directory=directory,
            guards=guards,
            params=DetectionParams(pt.N, pt.K, pt.Th),
            strategy=AdversaryStrategy(strategy, pt.d),
            env=Environment(pt.f),
            mode=mode,
            randomize_middle=randomize_middle,
            attrition=attrition,
            seed=key,
        )
        res = run_detection(cfg)
    except (ValueError, RuntimeError) as e:
        return TrialOutcome(error=f"{type(e).__name__}: {e}")
    out = TrialOutcome(
        lost=len(res.lost),
        phase1_attempts=res.phase1_attempts,
        phase1_network_failures=res.phase1_network_failures,
        phase2_probes=res.phase2_probes,
    )
    for ev in res.evaluations:
        kind = classify(ev.circuit).kind
        name = {Kind.CXC: "cxc", Kind.HHH: "hhh", Kind.OTHER: "others"}[kind]
        setattr(out, name, getattr(out, name) + 1)
        if ev.accepted:
            setattr(out, name + "_accepted", getattr(out, name + "_accepted") + 1)
    return out


def summarize(pt: GridPoint, outcomes: list[TrialOutcome]) -> PointEstimate:
    per_metric: dict[str, list[float]] = {m: [] for m in METRICS}
    for o in outcomes:
        for m, v in o.samples(pt.d).items():
            if v is not None:
                per_metric[m].append(v)
    estimates = {}
    for m, xs in per_metric.items():
        excluded = len(outcomes) - len(xs)
        if len(xs) >= 2:
            mean, hw = ci_95(xs)
        else:
            mean, hw = (xs[0] if xs else math.nan), math.nan
        estimates[m] = Estimate(mean, hw, len(xs), excluded)
    raw_fields = [k for k in asdict(TrialOutcome()) if k != "error"]
    raw = {k: sum(getattr(o, k) for o in outcomes) for k in raw_fields}
    errs = [o.error for o in outcomes if o.error]
    return PointEstimate(pt, estimates, raw, len(errs), sorted(set(errs))[:5])


def _run_point(args) -> PointEstimate:
    directory, pt, index, cfg = args
    outcomes = [
        run_trial(
            directory,
            pt,
            cfg.strategy,
            cfg.mode,
            cfg.randomize_middle,
            cfg.attrition,
            cfg.guards_per_user,
            key=(cfg.seed, index, trial),
        )
        for trial in range(cfg.trials)
    ]
    return summarize(pt, outcomes)


def run_experiment(cfg: ExperimentConfig) -> EstimateSeries:
    """Run every grid point; streams are keyed by (seed, point index, trial index).

    Results do not depend on ``workers``: each point is computed from its own
    keyed streams and the per-point results are folded in grid order.
    """
    base = base_directory(cfg)
    tagged: dict[float, Directory] = {}
    tasks = []
    for index, pt in enumerate(cfg.grid()):
        if pt.t not in tagged:
            tagged[pt.t] = tag_compromised(base, pt.t, seed=f"{cfg.seed}:tag")
        tasks.append((tagged[pt.t], pt, index, cfg))
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            points = list(pool.map(_run_point, tasks))
    else:
        points = [_run_point(t) for t in tasks]
    for p in points:
        if p.errors:
            log.warning("grid point %s: %d/%d trials failed (%s)", p.point, p.errors, cfg.trials, p.error_messages[0])
    return EstimateSeries(points, cfg.strategy)


def compare_strategies(cfg: ExperimentConfig) -> tuple[EstimateSeries, EstimateSeries]:
    """Simple and shrewd adversaries over the same grid with the same keyed streams."""
    simple = run_experiment(replace(cfg, strategy=StrategyKind.SIMPLE))
    shrewd = run_experiment(replace(cfg, strategy=StrategyKind.SHREWD))
    return simple, shrewd


# --------------------------------------------------------------------------
# guard-free baseline


@dataclass
class BaselineResult:
    built: int
    working: int
    compromised_working: int

    @property
    def fraction(self) -> float:
        return self.compromised_working / self.working


def no_defense_baseline(
    directory: Directory,
    strategy: AdversaryStrategy,
    env: Environment,
    n_circuits: int,
    seed,
    mode: Mode = Mode.MATCH,
) -> BaselineResult:
    """Build circuits without guard sets or vetting; count compromised working ones."""
    r = rngmod.stream(seed, "baseline")
    working = bad = 0
    for _ in range(n_circuits):
        cls = classify(build_circuit(directory, None, r, mode))
        if attempt_retrieval(cls, strategy, env, r):
            working += 1
            bad += cls.kind is Kind.CXC
    return BaselineResult(n_circuits, working, bad)
