"""Relay population: loading, synthesis, compromise tagging and weighted sampling."""

from __future__ import annotations

import bisect
import csv
import logging
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from itertools import accumulate
from pathlib import Path
from typing import Iterable, Mapping, Sequence

log = logging.getLogger(__name__)

CSV_HEADER = ("id", "bandwidth", "guard", "exit", "subnet16", "family")

# Rejection-sampling attempts before falling back to an explicit filtered draw.
_REJECTION_TRIES = 64


class Role(str, Enum):
    GUARD = "guard"
    MIDDLE = "middle"
    EXIT = "exit"


class DirectoryError(ValueError):
    pass


class SamplingError(RuntimeError):
    """No relay is eligible for the requested position."""


@dataclass(frozen=True, slots=True)
class Relay:
    id: str
    bandwidth: int
    flags: frozenset
    subnet16: str
    family: str | None = None
    compromised: bool = False

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise DirectoryError(f"relay {self.id!r}: bandwidth must be positive")
        if not self.flags:
            raise DirectoryError(f"relay {self.id!r}: needs at least one role flag")

    @property
    def is_guard(self) -> bool:
        return Role.GUARD in self.flags

    @property
    def is_exit(self) -> bool:
        return Role.EXIT in self.flags


@dataclass(frozen=True)
class Exclusions:
    """Path constraints a sampled relay must not violate."""

    relay_ids: frozenset = frozenset()
    subnets: frozenset = frozenset()
    families: frozenset = frozenset()

    @classmethod
    def for_relays(cls, *relays: Relay) -> Exclusions:
        return cls(
            relay_ids=frozenset(r.id for r in relays),
            subnets=frozenset(r.subnet16 for r in relays),
            families=frozenset(r.family for r in relays if r.family),
        )

    def union(self, other: Exclusions) -> Exclusions:
        return Exclusions(
            self.relay_ids | other.relay_ids,
            self.subnets | other.subnets,
            self.families | other.families,
        )

    def allows(self, relay: Relay) -> bool:
        if relay.id in self.relay_ids or relay.subnet16 in self.subnets:
            return False
        return not (relay.family and relay.family in self.families)

    def __bool__(self) -> bool:
        return bool(self.relay_ids or self.subnets or self.families)


NO_EXCLUSIONS = Exclusions()


def compatible(a: Relay, b: Relay) -> bool:
    """True when a and b may share a circuit."""
    if a.id == b.id or a.subnet16 == b.subnet16:
        return False
    return not (a.family and a.family == b.family)


class Directory:
    """Immutable relay collection with cached per-role bandwidth totals."""

    def __init__(self, relays: Iterable[Relay]):
        self.relays: tuple[Relay, ...] = tuple(relays)
        seen = set()
        for r in self.relays:
            if r.id in seen:
                raise DirectoryError(f"duplicate relay id {r.id!r}")
            seen.add(r.id)
        self._by_id = {r.id: r for r in self.relays}
        self._by_role = {role: tuple(r for r in self.relays if role in r.flags) for role in Role}
        self._cum = {role: list(accumulate(r.bandwidth for r in rs)) for role, rs in self._by_role.items()}
        self.totals = {role: (cum[-1] if cum else 0) for role, cum in self._cum.items()}
        self.compromised_totals = {
            role: sum(r.bandwidth for r in rs if r.compromised) for role, rs in self._by_role.items()
        }

    def __len__(self) -> int:
        return len(self.relays)

    def __getitem__(self, relay_id: str) -> Relay:
        return self._by_id[relay_id]

    def __eq__(self, other) -> bool:
        return isinstance(other, Directory) and self.relays == other.relays

    def __hash__(self):
        return hash(self.relays)

    def eligible(self, role: Role) -> tuple[Relay, ...]:
        return self._by_role[role]

    def compromised_fraction(self, role: Role) -> float:
        total = self.totals[role]
        return self.compromised_totals[role] / total if total else 0.0

    def tagging_residual(self, t: float) -> dict[Role, float]:
        """Signed gap between the realised compromised fraction and t, per role."""
        return {role: self.compromised_fraction(role) - t for role in Role if self.totals[role]}

    def recomputed_totals(self) -> tuple[dict, dict]:
        totals = {role: sum(r.bandwidth for r in self.relays if role in r.flags) for role in Role}
        comp = {role: sum(r.bandwidth for r in self.relays if role in r.flags and r.compromised) for role in Role}
        return totals, comp


@dataclass(frozen=True)
class GuardSet:
    guards: tuple[Relay, ...]
    compromised_count: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "compromised_count", sum(r.compromised for r in self.guards))

    @property
    def G(self) -> int:
        return len(self.guards)

    @property
    def g(self) -> Fraction:
        return Fraction(self.compromised_count, len(self.guards))


# --------------------------------------------------------------------------
# construction


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic relay population.

    ``role_mix`` gives exclusive category fractions: guard-only, exit-only and
    guard+exit relays; the remainder are middle-only. Every relay is
    middle-capable. ``bandwidth`` is one of ``pareto`` (heavy tailed),
    ``uniform`` (uniform integers in [lo, hi]) or ``constant``.
    """

    n_relays: int = 1000
    bandwidth: str = "pareto"
    role_mix: Mapping[str, float] = field(
        default_factory=lambda: {"guard": 0.3, "exit": 0.2, "guard_exit": 0.1}
    )
    pareto_alpha: float = 1.5
    pareto_scale: int = 100
    uniform_range: tuple[int, int] = (50, 5000)
    constant_bandwidth: int = 1000
    relays_per_subnet: int = 4
    family_fraction: float = 0.1


_ROLE_CATEGORIES = {
    "guard": frozenset({Role.GUARD, Role.MIDDLE}),
    "exit": frozenset({Role.EXIT, Role.MIDDLE}),
    "guard_exit": frozenset({Role.GUARD, Role.EXIT, Role.MIDDLE}),
}


def _draw_bandwidth(spec: SyntheticSpec, rng: random.Random) -> int:
    if spec.bandwidth == "pareto":
        return max(1, round(spec.pareto_scale * rng.paretovariate(spec.pareto_alpha)))
    if spec.bandwidth == "uniform":
        return rng.randint(*spec.uniform_range)
    if spec.bandwidth == "constant":
        return spec.constant_bandwidth
    raise DirectoryError(f"unknown bandwidth distribution {spec.bandwidth!r}")


def synthesize_directory(spec: SyntheticSpec, seed) -> Directory:
    if spec.n_relays < 10:
        raise DirectoryError("need at least 10 relays")
    if spec.bandwidth not in ("pareto", "uniform", "constant"):
        raise DirectoryError(f"unknown bandwidth distribution {spec.bandwidth!r}")
    unknown = set(spec.role_mix) - set(_ROLE_CATEGORIES)
    if unknown:
        raise DirectoryError(f"unknown role categories {sorted(unknown)}")
    fractions = list(spec.role_mix.values())
    if any(x < 0 for x in fractions) or sum(fractions) > 1 + 1e-12:
        raise DirectoryError("role fractions must be non-negative and sum to at most 1")
    if spec.bandwidth == "pareto" and spec.pareto_alpha <= 0:
        raise DirectoryError("pareto_alpha must be positive")

    rng = random.Random(f"synth:{seed}")
    n = spec.n_relays
    flags: list[frozenset] = []
    for cat in ("guard", "exit", "guard_exit"):
        flags += [_ROLE_CATEGORIES[cat]] * round(n * spec.role_mix.get(cat, 0.0))
    flags += [frozenset({Role.MIDDLE})] * (n - len(flags))
    rng.shuffle(flags)

    n_subnets = max(2, n // max(1, spec.relays_per_subnet))
    relays = []
    family_no = 0
    pending_family: list[int] = []
    for i in range(n):
        family = None
        if pending_family:
            family = f"fam{pending_family.pop()}"
        elif rng.random() < spec.family_fraction:
            family_no += 1
            size = rng.randint(2, 4)
            family = f"fam{family_no}"
            pending_family = [family_no] * (size - 1)
        relays.append(
            Relay(
                id=f"r{i:05d}",
                bandwidth=_draw_bandwidth(spec, rng),
                flags=flags[i],
                subnet16=f"10.{rng.randrange(n_subnets)}",
                family=family,
            )
        )
    return Directory(relays)


def _parse_flag(value: str, column: str, lineno: int) -> bool:
    if value not in ("0", "1"):
        raise DirectoryError(f"row {lineno}: {column} must be 0 or 1, got {value!r}")
    return value == "1"


def load_directory(path) -> Directory:
    """Read a relay CSV (header ``id,bandwidth,guard,exit,subnet16,family``)."""
    path = Path(path)
    if not path.exists():
        raise DirectoryError(f"no such directory file: {path}")
    relays = []
    seen: dict[str, int] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise DirectoryError(f"row 1: expected header {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(CSV_HEADER):
                raise DirectoryError(f"row {lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
            rid, bw, guard, exit_, subnet, family = (c.strip() for c in row)
            if not rid:
                raise DirectoryError(f"row {lineno}: empty id")
            if rid in seen:
                raise DirectoryError(f"row {lineno}: duplicate id {rid!r} (first at row {seen[rid]})")
            seen[rid] = lineno
            try:
                bandwidth = int(bw)
            except ValueError:
                raise DirectoryError(f"row {lineno}: bandwidth must be an integer, got {bw!r}") from None
            if bandwidth <= 0:
                raise DirectoryError(f"row {lineno}: bandwidth must be positive, got {bandwidth}")
            if not subnet:
                raise DirectoryError(f"row {lineno}: empty subnet16")
            flags = {Role.MIDDLE}
            if _parse_flag(guard, "guard", lineno):
                flags.add(Role.GUARD)
            if _parse_flag(exit_, "exit", lineno):
                flags.add(Role.EXIT)
            relays.append(Relay(rid, bandwidth, frozenset(flags), subnet, family or None))
    return Directory(relays)


def write_directory(directory: Directory, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in directory.relays:
            w.writerow([r.id, r.bandwidth, int(r.is_guard), int(r.is_exit), r.subnet16, r.family or ""])


# --------------------------------------------------------------------------
# compromise tagging and guard selection


def tag_compromised(directory: Directory, t: float, seed) -> Directory:
    """Mark roughly a bandwidth fraction t of every role as compromised.

    Relays are grouped by their flag set and each group is tagged separately,
    so every role (a union of groups) lands close to t. Within a group relays
    are visited in seeded random order and taken whenever that moves the
    tagged total closer to the target. Existing tags are ignored, so tagging
    is idempotent for a fixed seed.
    """
    if not 0 <= t <= 1:
        raise DirectoryError(f"t must be in [0, 1], got {t}")
    rng = random.Random(f"tag:{seed}")
    groups: dict[frozenset, list[int]] = {}
    for i, r in enumerate(directory.relays):
        groups.setdefault(r.flags, []).append(i)

    tagged = set()
    for key in sorted(groups, key=lambda fs: sorted(f.value for f in fs)):
        idx = groups[key]
        order = idx[:]
        rng.shuffle(order)
        target = t * sum(directory.relays[i].bandwidth for i in idx)
        acc = 0
        for i in order:
            bw = directory.relays[i].bandwidth
            if bw < 2 * (target - acc):
                tagged.add(i)
                acc += bw

    out = Directory(
        replace(r, compromised=(i in tagged)) if r.compromised != (i in tagged) else r
        for i, r in enumerate(directory.relays)
    )
    log.debug("tagging residual at t=%s: %s", t, out.tagging_residual(t))
    return out


def _pick_weighted(pool: Sequence[Relay], k: int, rng: random.Random) -> list[Relay]:
    pool = list(pool)
    chosen = []
    for _ in range(k):
        r = rng.choices(pool, weights=[x.bandwidth for x in pool])[0]
        chosen.append(r)
        pool.remove(r)
    return chosen


def select_guard_set(directory: Directory, G: int, g, seed) -> GuardSet:
    """Pick G guards of which exactly g*G are compromised."""
    k = g * G
    k_int = round(k)
    if abs(k - k_int) > 1e-9 or not 0 <= k_int <= G:
        raise DirectoryError(f"g*G must be an integer in [0, G]; got g={g}, G={G}")
    guards = directory.eligible(Role.GUARD)
    bad = [r for r in guards if r.compromised]
    good = [r for r in guards if not r.compromised]
    if len(bad) < k_int or len(good) < G - k_int:
        raise DirectoryError(
            f"insufficient guards: need {k_int} compromised and {G - k_int} honest, "
            f"have {len(bad)} and {len(good)}"
        )
    rng = seed if isinstance(seed, random.Random) else random.Random(f"guards:{seed}")
    chosen = _pick_weighted(bad, k_int, rng) + _pick_weighted(good, G - k_int, rng)
    return GuardSet(tuple(chosen))


# --------------------------------------------------------------------------
# sampling


def weighted_sample(
    directory: Directory,
    role: Role,
    rng: random.Random,
    exclusions: Exclusions = NO_EXCLUSIONS,
) -> Relay:
    """Bandwidth-weighted draw of a relay holding ``role`` that violates no exclusion."""
    pool = directory.eligible(role)
    cum = directory._cum[role]
    if not pool:
        raise SamplingError(f"no relays with role {role.value}")
    total = cum[-1]
    if not exclusions:
        return pool[bisect.bisect_right(cum, rng.random() * total)]
    for _ in range(_REJECTION_TRIES):
        r = pool[bisect.bisect_right(cum, rng.random() * total)]
        if exclusions.allows(r):
            return r
    ok = [r for r in pool if exclusions.allows(r)]
    if not ok:
        raise SamplingError(f"no eligible {role.value} relay after exclusions")
    return rng.choices(ok, weights=[r.bandwidth for r in ok])[0]
