"""Acceptance checks, one per criterion; each prints a PASS/FAIL line.

Tolerances are fixed up front and never loosened to make a check pass.
"""

import os
from fractions import Fraction

import pytest

from sdosprobe import analytic as an
from sdosprobe.adversary import AdversaryStrategy, Environment, StrategyKind
from sdosprobe.circuit import Mode
from sdosprobe.cli import main
from sdosprobe.directory import SyntheticSpec, synthesize_directory, tag_compromised
from sdosprobe.montecarlo import ExperimentConfig, compare_strategies, no_defense_baseline, run_experiment
from oracles import fn_counts_oracle, fp_counts_oracle

WORKERS = min(8, os.cpu_count() or 1)
FLAT = SyntheticSpec(bandwidth="constant")

# tolerances
BASELINE_TARGET, BASELINE_TOL = 0.0725, 0.005
AGREEMENT_SIGMAS = 3
CONVENTIONAL = {Fraction(1, 3): (0.865, 0.867), Fraction(2, 3): (0.615, 0.612)}
CONVENTIONAL_TOL = 0.005
PSI_GAP = 0.05
G1_FN_MIN_AT, G1_FN_MIN_TOL = 0.6, 0.1  # one grid step


def test_c1_no_defense_amplification(verdicts):
    d = tag_compromised(synthesize_directory(FLAT, seed=1), 0.2, seed=1)
    res = no_defense_baseline(d, AdversaryStrategy(StrategyKind.SIMPLE, 1.0), Environment(), 100_000, seed=1)
    ok = abs(res.fraction - BASELINE_TARGET) <= BASELINE_TOL
    verdicts.record("criterion 1 (no-defense compromised fraction)", ok,
                    f"{res.fraction:.4f} vs {BASELINE_TARGET} +/- {BASELINE_TOL} over {res.built} circuits")
    assert ok


@pytest.mark.parametrize("f", [0.0, 0.23])
def test_c2_simulation_matches_closed_form(verdicts, f):
    cfg = ExperimentConfig(g=(Fraction(1, 3),), f=(f,), d=(1.0,), trials=10_000, seed=7,
                           directory=FLAT, mode=Mode.MATCH, workers=WORKERS)
    est = run_experiment(cfg).points[0].estimates
    ref = an.error_rates(an.ModelParams(0.2, Fraction(1, 3), f, 1, 10, 3, 2))
    z_fn = abs(est["fn"].mean - float(ref.fn)) / est["fn"].stderr
    z_fp = abs(est["fp"].mean - float(ref.fp)) / est["fp"].stderr
    ok = z_fn <= AGREEMENT_SIGMAS and z_fp <= AGREEMENT_SIGMAS
    verdicts.record(f"criterion 2 (simulation vs closed form, f={f})", ok,
                    f"FN {est['fn'].mean:.4f} vs {float(ref.fn):.4f} ({z_fn:.2f} sigma), "
                    f"FP {est['fp'].mean:.4f} vs {float(ref.fp):.4f} ({z_fp:.2f} sigma)")
    assert ok


def test_c3_bruteforce_equivalence(verdicts):
    mismatches = checked = 0
    for N in range(2, 9):
        for K in range(1, N):
            for Th in range(1, K + 1):
                for c in range(N + 1):
                    checked += 2
                    mismatches += an.fn_given_counts(c, N, K, Th) != fn_counts_oracle(c, N, K, Th)
                    mismatches += an.fp_given_counts(c, N, K, Th) != fp_counts_oracle(c, N, K, Th)
    ok = mismatches == 0
    verdicts.record("criterion 3 (exact enumeration, N <= 8)", ok, f"{checked - mismatches}/{checked} exact matches")
    assert ok


def test_c4_parameter_tuning(verdicts):
    n = an.compute_N(0.2, Fraction(2, 3))
    rows = an.crossover_tuning(0.2, Fraction(1, 3), 0.23, 1, 11, 10)
    bracket = rows[-1].bracket
    no_fail = an.crossover_tuning(0.2, Fraction(1, 3), 0, 1, 11, 10)[-1].bracket
    ok = n == 10 and bracket == (5, 6)
    verdicts.record("criterion 4 (compute_N and K=10 crossover)", ok,
                    f"compute_N={n}; crossover at f=0.23 between Th={bracket[0]} and {bracket[1]} "
                    f"(expected 5/6); at f=0 it is {no_fail[0]}/{no_fail[1]}")
    assert n == 10
    assert bracket == (5, 6)


# -------------------------------------------------------------- trend criteria


@pytest.fixture(scope="module")
def sweep():
    """Default sweep: 100 runs per point, realistic paths, both strategies, shared streams."""
    cfg = ExperimentConfig(trials=100, seed=0, workers=WORKERS)
    return cfg, compare_strategies(cfg)


def _violations(series, direction):
    """CI-separated pairs (earlier, later) that move against ``direction`` (-1 down, +1 up)."""
    bad = []
    for i, (d1, a) in enumerate(series):
        for d2, b in series[i + 1:]:
            if (direction < 0 and b.low > a.high) or (direction > 0 and b.high < a.low):
                bad.append((d1, d2))
    return bad


def _defined(series):
    return [(d, e) for d, e in series if e.n >= 2]


def _monotone(series, direction, strict):
    s = _defined(series)
    if not s:
        return True, "undefined at every d"
    bad = _violations(s, direction)
    first, last = s[0][1], s[-1][1]
    moved = (last.high < first.low) if direction < 0 else (last.low > first.high)
    ok = not bad and (moved or not strict)
    msg = f"{first.mean:.3f} -> {last.mean:.3f}"
    if bad:
        msg += f", CI-separated reversals at d pairs {bad[:3]}{'...' if len(bad) > 3 else ''}"
    if strict and not moved:
        msg += ", endpoints not CI-separated"
    return ok, msg


def test_c5_trends(verdicts, sweep):
    cfg, (simple, _) = sweep
    checks = []
    for g in (0.0, 1 / 3, 2 / 3):
        checks.append((f"FN non-increasing, g={g:.3g}", *_monotone(simple.series("fn", g=g), -1, False)))
        checks.append((f"FP non-decreasing, g={g:.3g}", *_monotone(simple.series("fp", g=g), +1, False)))
        # Pr(CXC) is identically 0 at g=0, so only the absence of reversals is required there
        checks.append((f"Pr(CXC) decreasing, g={g:.3g}", *_monotone(simple.series("pr_cxc", g=g), -1, g > 0)))
        checks.append((f"Pr(HHH) increasing, g={g:.3g}", *_monotone(simple.series("pr_hhh", g=g), +1, True)))

    fn1 = _defined(simple.series("fn", g=1.0))
    d_min, e_min = min(fn1, key=lambda r: r[1].mean)
    falls = fn1[0][1].low > e_min.high
    rises = fn1[-1][1].low > e_min.high
    near = abs(d_min - G1_FN_MIN_AT) <= G1_FN_MIN_TOL + 1e-9
    checks.append(("FN falls then rises, g=1", falls and rises and near,
                   f"minimum {e_min.mean:.3f} at d={d_min:.1f}; d=0 {fn1[0][1].mean:.3f}, d=1 {fn1[-1][1].mean:.3f}"))

    for name, ok, msg in checks:
        print(f"  {'ok ' if ok else 'BAD'} {name}: {msg}")
    failed = [name for name, ok, _ in checks if not ok]
    verdicts.record("criterion 5 (trends over d, 100 runs/point)", not failed,
                    "all shape checks hold" if not failed else "failed: " + "; ".join(failed))
    assert not failed


def test_c6_strategy_equivalence(verdicts, sweep):
    cfg, (simple, shrewd) = sweep
    worst = {}
    for g in (Fraction(1, 3), Fraction(2, 3)):
        a = simple.series("psi", g=g)
        b = shrewd.series("psi", g=g)
        gaps = [(abs(x.mean - y.mean), d) for (d, x), (_, y) in zip(a, b)]
        worst[g] = max(gaps)
    ok = all(gap <= PSI_GAP for gap, _ in worst.values())
    verdicts.record("criterion 6 (simple vs shrewd psi)", ok,
                    ", ".join(f"g={g}: max gap {gap:.3f} at d={d:.1f}" for g, (gap, d) in worst.items())
                    + f" (limit {PSI_GAP})")
    assert ok


def test_c7_conventional_security(verdicts):
    parts, ok = [], True
    for g, (expected, measured) in CONVENTIONAL.items():
        v = float(an.conventional_security(Fraction(1, 5), g))
        good = round(v, 3) == expected and abs(v - measured) <= CONVENTIONAL_TOL
        ok &= good
        parts.append(f"g={g}: {v:.4f} (measured {measured})")
    verdicts.record("criterion 7 (conventional security)", ok, ", ".join(parts))
    assert ok


def test_c8_bandwidth_overhead(verdicts):
    v = an.bandwidth_overhead(4, 300, 3, 3600, 6)
    ok = v == 6
    verdicts.record("criterion 8 (probe bandwidth)", ok, f"{v} KB/s")
    assert ok


def test_c9_cli_determinism(verdicts, tmp_path):
    runs = {
        "simulate": ["simulate", "--g", "1/3,2/3", "--d", "0:1:0.25", "--trials", "10", "--strategy", "shrewd"],
        "analytic": ["analytic", "--K", "1..9", "--Th", "1..K"],
        "crossover": ["crossover", "--K", "10"],
        "params": ["params", "--g", "2/3"],
    }
    differing = []
    for name, argv in runs.items():
        outs = []
        for i, workers in enumerate((1, WORKERS)):
            out = tmp_path / f"{name}{i}"
            extra = ["--workers", str(workers)] if name == "simulate" else []
            assert main([*argv, "--seed", "123", "--out", str(out), *extra]) == 0
            outs.append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
        if outs[0] != outs[1] or not outs[0]:
            differing.append(name)
    ok = not differing
    verdicts.record("criterion 9 (byte-identical CSV per seed)", ok,
                    "all commands identical across reruns and worker counts" if ok else f"differs: {differing}")
    assert ok
