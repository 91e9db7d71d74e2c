"""Closed-form error rates, security/overhead metrics and parameter tuning.

Conventions
-----------
``binom_pmf(n, k, p)`` is C(n, k) p^k (1-p)^(n-k) throughout.

Hypergeometric terms are built from exact integer binomial coefficients, so
``fn_given_counts``/``fp_given_counts`` return exact ``Fraction`` values, and
every rate function stays exact when t, g and f are passed as ``Fraction``.

A false-negative rate conditioned on a pool with no compromised circuit (or a
false-positive rate on a pool with no honest circuit) is undefined; those
terms are dropped and the mixture is renormalised over the remaining mass.
The rate is then the acceptance probability of a compromised (honest)
circuit given that at least one was there to evaluate, which is exactly what
the Monte-Carlo estimator measures when it skips trials without one. A rate
with no defined term at all is NaN.

The FN/FP mixtures model the pure selective attacker (d = 1); other drop
rates are only covered by simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

NAN = float("nan")


class DegenerateModelError(ValueError):
    """A ratio in the model has a zero denominator for these parameters."""


@dataclass(frozen=True)
class ModelParams:
    t: float = 0.2
    g: float = 1 / 3
    f: float = 0.23
    d: float = 1.0
    N: int = 10
    K: int = 3
    Th: int = 2

    def __post_init__(self):
        for name in ("t", "g", "f", "d"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.N < 2:
            raise ValueError("N must be at least 2")
        if not 1 <= self.K < self.N:
            raise ValueError(f"need 1 <= K < N, got K={self.K}, N={self.N}")
        if not 1 <= self.Th <= self.K:
            raise ValueError(f"need 1 <= Th <= K, got Th={self.Th}, K={self.K}")


@dataclass(frozen=True)
class ErrorRates:
    fn: float
    fp: float


# --------------------------------------------------------------------------
# building blocks


def binom_pmf(n: int, k: int, p):
    if k < 0 or k > n:
        return 0
    return math.comb(n, k) * p**k * (1 - p) ** (n - k)


def binom_sf(n: int, k: int, p):
    """P(Bin(n, p) >= k)."""
    if k <= 0:
        return 1
    return sum(binom_pmf(n, j, p) for j in range(k, n + 1))


def _comb(n: int, k: int) -> int:
    return math.comb(n, k) if 0 <= k <= n else 0


@lru_cache(maxsize=None)
def hypergeom_pmf(good: int, bad: int, draws: int, i: int) -> Fraction:
    """P(i good items when drawing ``draws`` without replacement)."""
    return Fraction(_comb(good, i) * _comb(bad, draws - i), _comb(good + bad, draws))


def p_working(t, g):
    """Chance a fresh circuit survives the selective attacker: CXC or HHH."""
    return g * t + (1 - g) * (1 - t) ** 2


def p_cxc_phase1(t, g):
    """Share of CXC among circuits that survive the selective attacker."""
    den = p_working(t, g)
    if den == 0:
        raise DegenerateModelError("no circuit can survive phase 1 (g=1 and t=0)")
    return g * t / den


def conventional_security(t, g):
    """1 - P(CXC) among working circuits under selective DoS with no defence."""
    return 1 - p_cxc_phase1(t, g)


def no_defense_compromise_fraction(t):
    """Compromised share of working circuits under selective DoS, without guard sets."""
    return t**2 / (t**2 + (1 - t) ** 3)


def survivor_middle_honest_prob(t):
    """P(middle honest) for a circuit that survived the selective attacker (no guard sets)."""
    return ((1 - t) ** 3 + t**2 * (1 - t)) / ((1 - t) ** 3 + t**2)


# --------------------------------------------------------------------------
# error rates conditioned on pool composition


def _clamped(K: int, Th: int, pool: int) -> tuple[int, int]:
    k = min(K, pool - 1)
    return k, min(Th, k)


def fn_given_counts(c: int, N: int, K: int, Th: int) -> Fraction | None:
    """P(a CXC circuit is accepted | c CXC and N-c HHH survivors); None if c == 0."""
    if not 0 <= c <= N:
        raise ValueError("need 0 <= c <= N")
    if c == 0:
        return None
    k, th = _clamped(K, Th, N)
    return sum((hypergeom_pmf(c - 1, N - c, k, i) for i in range(th, k + 1)), Fraction(0))


def fp_given_counts(c: int, N: int, K: int, Th: int) -> Fraction | None:
    """P(an HHH circuit is rejected | c CXC and N-c HHH survivors); None if c == N."""
    if not 0 <= c <= N:
        raise ValueError("need 0 <= c <= N")
    if c == N:
        return None
    k, th = _clamped(K, Th, N)
    return sum((hypergeom_pmf(N - c - 1, c, k, i) for i in range(th)), Fraction(0))


def fn_given_survivors(cs: int, hs: int, K: int, Th: int, f):
    """FN for an evaluated CXC circuit when cs CXC and hs HHH circuits remain, probes failing w.p. f."""
    if cs == 0:
        return None
    k, th = _clamped(K, Th, cs + hs)
    return sum(hypergeom_pmf(cs - 1, hs, k, i) * binom_sf(i, th, 1 - f) for i in range(th, k + 1))


def fp_given_survivors(cs: int, hs: int, K: int, Th: int, f):
    if hs == 0:
        return None
    k, th = _clamped(K, Th, cs + hs)
    return 1 - sum(hypergeom_pmf(hs - 1, cs, k, i) * binom_sf(i, th, 1 - f) for i in range(th, k + 1))


# --------------------------------------------------------------------------
# mixtures over the phase-1 outcome


def _require_selective(p: ModelParams):
    if p.d != 1:
        raise ValueError("closed-form FN/FP cover the selective attacker only (d = 1)")


def _renormalised(terms) -> float:
    num = den = 0
    for w, v in terms:
        if v is None or w == 0:
            continue
        num += w * v
        den += w
    return num / den if den else NAN


def fn_rate(p: ModelParams):
    """FN without network failures: binomial mixture of ``fn_given_counts``."""
    _require_selective(p)
    q = p_cxc_phase1(p.t, p.g)
    return _renormalised((binom_pmf(p.N, c, q), fn_given_counts(c, p.N, p.K, p.Th)) for c in range(p.N + 1))


def fp_rate(p: ModelParams):
    _require_selective(p)
    q = p_cxc_phase1(p.t, p.g)
    return _renormalised((binom_pmf(p.N, c, q), fp_given_counts(c, p.N, p.K, p.Th)) for c in range(p.N + 1))


def survivor_weights(t, g, f, N: int) -> dict[tuple[int, int], object]:
    """Joint law of (CXC, HHH) circuits left after phase 1 and random attrition."""
    q = p_cxc_phase1(t, g)
    w: dict[tuple[int, int], object] = {}
    for c in range(N + 1):
        pc = binom_pmf(N, c, q)
        if pc == 0:
            continue
        for cs in range(c + 1):
            pcs = binom_pmf(c, cs, 1 - f)
            for hs in range(N - c + 1):
                term = pc * pcs * binom_pmf(N - c, hs, 1 - f)
                if term:
                    w[cs, hs] = w.get((cs, hs), 0) + term
    return w


def _failure_rates(p: ModelParams, weights=None) -> ErrorRates:
    _require_selective(p)
    if p.f >= 1:
        raise ValueError("f must be < 1")
    w = weights if weights is not None else survivor_weights(p.t, p.g, p.f, p.N)
    fn = _renormalised((wt, fn_given_survivors(cs, hs, p.K, p.Th, p.f)) for (cs, hs), wt in w.items())
    fp = _renormalised((wt, fp_given_survivors(cs, hs, p.K, p.Th, p.f)) for (cs, hs), wt in w.items())
    return ErrorRates(fn, fp)


def fn_rate_failures(p: ModelParams):
    return _failure_rates(p).fn


def fp_rate_failures(p: ModelParams):
    return _failure_rates(p).fp


def error_rates(p: ModelParams) -> ErrorRates:
    """FN/FP under the failure-aware model (identical to the plain model when f = 0)."""
    return _failure_rates(p)


# --------------------------------------------------------------------------
# security and overhead


def _isnan(x) -> bool:
    return isinstance(x, float) and math.isnan(x)


def _accepted_mass(p: ModelParams, rates: ErrorRates):
    bad = p.g * p.t
    good = (1 - p.g) * (1 - p.t) ** 2
    bad_term = bad * rates.fn if bad else 0
    good_term = good * (1 - rates.fp) if good else 0
    if _isnan(bad_term) or _isnan(good_term):
        raise DegenerateModelError("error rate undefined for a class with positive mass")
    return bad_term, bad_term + good_term


def psi(p: ModelParams, rates: ErrorRates | None = None):
    """Probability that a circuit accepted for use is not compromised."""
    rates = rates or error_rates(p)
    bad_term, den = _accepted_mass(p, rates)
    if den == 0:
        raise DegenerateModelError("no circuit is accepted in expectation")
    return 1 - bad_term / den


def eta(p: ModelParams, rates: ErrorRates | None = None):
    """Expected probes per usable circuit; phase-1 term ignores network failures."""
    rates = rates or error_rates(p)
    _, den = _accepted_mass(p, rates)
    if den == 0:
        raise DegenerateModelError("no circuit is accepted in expectation")
    return (1 + p_working(p.t, p.g) * p.K) / den


def eta_with_phase1_failures(p: ModelParams, rates: ErrorRates | None = None):
    """Variant of ``eta`` whose phase-1 term also pays for network failures (1/(1-f) attempts)."""
    rates = rates or error_rates(p)
    _, den = _accepted_mass(p, rates)
    if den == 0:
        raise DegenerateModelError("no circuit is accepted in expectation")
    return (1 / (1 - p.f) + p_working(p.t, p.g) * p.K) / den


# --------------------------------------------------------------------------
# probabilistic dropping


def candidate_comp_exit_prob(t, g, d):
    """P(a phase-2 candidate has a compromised exit) against the simple dropper."""
    keep = 1 - d
    num = g * t + ((1 - g) * (1 - t) * t + (1 - g) * t**2) * keep
    den = (1 - g) * (1 - t) ** 2 + g * t + (1 - (1 - g) * (1 - t) ** 2 - g * t) * keep
    return num / den


def shrewd_comp_exit_prob(t, g, d):
    """Same as ``candidate_comp_exit_prob`` for the shrewd dropper."""
    honest = (1 - g) * (1 - t) ** 2
    return t / (honest + t + (1 - honest - t) * (1 - d))


def noncomp_forward_fraction(t, g, d):
    """Share of forwarded circuits that are neither HHH nor CXC, shrewd dropper."""
    dropped = (1 - t - (1 - g) * (1 - t) ** 2) * (1 - d)
    return (dropped + (1 - g) * t) / (dropped + t + (1 - g) * (1 - t) ** 2)


def noncomp_forward_fraction_simple(t, g, d):
    """Counterpart of ``noncomp_forward_fraction`` for the simple dropper."""
    working = p_working(t, g)
    other = (1 - working) * (1 - d)
    return other / (other + working)


def usage_probabilities(counts, d):
    """(Pr(CXC), Pr(HHH), Pr(Others)) from accepted-circuit counts (cxc, hhh, others).

    Others are weighted by (1 - d) since the adversary still drops them in use.
    """
    cxc, hhh, others = counts
    if min(cxc, hhh, others) < 0:
        raise ValueError("counts must be non-negative")
    den = hhh + cxc + (1 - d) * others
    if den == 0:
        raise DegenerateModelError("no usable circuit")
    return cxc / den, hhh / den, (1 - d) * others / den


def redefined_psi(pr_cxc, pr_hhh, pr_others, d):
    den = pr_cxc + pr_hhh + (1 - d) * pr_others
    if den == 0:
        raise DegenerateModelError("all usage probabilities are zero")
    return 1 - pr_cxc / den


# --------------------------------------------------------------------------
# tuning


def compute_N(t, g, circuits_per_hour: int = 6) -> int:
    """Phase-1 size that yields ``circuits_per_hour`` honest circuits in expectation."""
    honest = (1 - g) * (1 - t) ** 2
    if g >= 1 or honest == 0:
        raise DegenerateModelError("N is unbounded: no honest circuit can be built")
    x = circuits_per_hour * p_working(t, g) / honest
    return math.ceil(x - 1e-9)


@dataclass(frozen=True)
class ParamRanges:
    n_cxc: float
    m_low: float
    m_high: float
    K_low: float  # exclusive bounds on K
    K_high: float
    pairs: tuple[tuple[int, int], ...]  # integer (K, Th) pairs inside the ranges

    @property
    def empty(self) -> bool:
        return not self.pairs

    def th_range(self, K: int) -> tuple[float, int]:
        """[low, high) interval for Th at this K."""
        m = K / self.n_cxc
        return (m - 1) * self.n_cxc, K


def param_ranges(t, g, N: int) -> ParamRanges:
    """Admissible K and Th from expected phase-1 composition.

    K = m * n(CXC) with 2 < m < 1 + n(HHH)/n(CXC), K < N, and
    (m - 1) * n(CXC) <= Th < K.
    """
    if not 0 < g < 1:
        raise ValueError("g must lie strictly between 0 and 1")
    q = p_cxc_phase1(t, g)
    n_cxc = N * q
    if n_cxc <= 0:
        raise DegenerateModelError("no compromised circuits expected")
    m_high = 1 + (1 - g) * (1 - t) ** 2 / (g * t)
    K_low = 2 * n_cxc
    K_high = min(m_high * n_cxc, N)
    pairs = []
    for K in range(math.floor(K_low) + 1, N):
        if not K_low < K < K_high:
            continue
        th_low = K - n_cxc  # (m - 1) * n(CXC)
        for Th in range(max(1, math.ceil(th_low - 1e-9)), K):
            pairs.append((K, Th))
    return ParamRanges(n_cxc, 2.0, m_high, K_low, K_high, tuple(pairs))


@dataclass(frozen=True)
class Crossover:
    K: int
    th_low: int
    th_high: int
    boundary: bool  # True when FN and FP never swap order inside [1, K]

    @property
    def bracket(self) -> tuple[int, int]:
        return (self.th_low, self.th_high)


def crossover_tuning(t, g, f, d, N: int, Kmax: int) -> list[Crossover]:
    """For each K in 1..Kmax, the pair of thresholds between which FN drops below FP."""
    if Kmax >= N:
        raise ValueError("Kmax must be smaller than N")
    weights = survivor_weights(t, g, f, N)
    rows = []
    for K in range(1, Kmax + 1):
        curve = [_failure_rates(ModelParams(t, g, f, d, N, K, th), weights) for th in range(1, K + 1)]
        row = None
        for th in range(1, K):
            a, b = curve[th - 1], curve[th]
            if a.fn > a.fp and b.fn <= b.fp:
                row = Crossover(K, th, th + 1, False)
                break
        if row is None:
            first = curve[0]
            th = 1 if first.fn <= first.fp else K
            row = Crossover(K, th, th, True)
        rows.append(row)
    return rows


def bandwidth_overhead(probes_per_usable, probe_size_kb, guards, interval_sec, circuits_per_hour):
    """Probe bandwidth in KB/s for one user."""
    return guards * probe_size_kb * probes_per_usable / interval_sec * circuits_per_hour
