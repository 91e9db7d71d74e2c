import random
import statistics
from fractions import Fraction

import pytest

from sdosprobe.adversary import AdversaryStrategy, Environment, StrategyKind
from sdosprobe.circuit import Circuit, Kind, Mode, classify
from sdosprobe.detection import (
    DetectionConfig,
    DetectionParams,
    Phase1Exhausted,
    kind_counts,
    phase1,
    phase2,
    run_detection,
)
from sdosprobe.directory import Relay, Role, SyntheticSpec, select_guard_set, synthesize_directory, tag_compromised

ALL = frozenset(Role)
SIMPLE1 = AdversaryStrategy(StrategyKind.SIMPLE, 1.0)
NONE = AdversaryStrategy(StrategyKind.NONE, 0.0)
F0 = Environment(0)


@pytest.fixture(scope="module")
def flat():
    d = synthesize_directory(SyntheticSpec(n_relays=1000, bandwidth="constant"), seed=2)
    return tag_compromised(d, 0.2, seed=2)


def _circ(tag, bad):
    e = Relay(f"e{tag}", 100, ALL, f"a{tag}", None, bad)
    m = Relay(f"m{tag}", 100, ALL, f"b{tag}", None, False)
    x = Relay(f"x{tag}", 100, ALL, f"c{tag}", None, bad)
    return Circuit(e, m, x)


def test_params_validation():
    with pytest.raises(ValueError):
        DetectionParams(N=3, K=3, Th=1)
    with pytest.raises(ValueError):
        DetectionParams(N=10, K=3, Th=0)


def test_phase1_without_adversary_or_failures(flat):
    gs = select_guard_set(flat, 3, Fraction(1, 3), seed=1)
    res = phase1(flat, gs, NONE, F0, 10, random.Random(0))
    assert res.attempts == 10 and len(res.circuits) == 10 and res.network_failures == 0


def test_phase1_survivors_are_hhh_or_cxc(flat):
    gs = select_guard_set(flat, 3, Fraction(1, 3), seed=1)
    res = phase1(flat, gs, SIMPLE1, F0, 10, random.Random(0))
    assert {classify(c).kind for c in res.circuits} <= {Kind.HHH, Kind.CXC}


def test_phase1_expected_attempts(flat):
    # mean of N / (gt + (1-g)(1-t)^2) = 10 / 0.4933 attempts
    atts = []
    for s in range(400):
        gs = select_guard_set(flat, 3, Fraction(1, 3), seed=s)
        atts.append(phase1(flat, gs, SIMPLE1, F0, 10, random.Random(s), Mode.MATCH).attempts)
    expected = 10 / (0.2 / 3 + (2 / 3) * 0.64)
    assert statistics.fmean(atts) == pytest.approx(expected, rel=0.05)


def test_phase1_budget_exhausted(flat):
    gs = select_guard_set(flat, 3, 1, seed=1)
    # only CXC can work, and network failure is near certain
    with pytest.raises(Phase1Exhausted):
        phase1(flat, gs, SIMPLE1, Environment(0.999), 10, random.Random(0), max_attempts=50)


def test_all_honest_all_accepted():
    pool = [_circ(i, False) for i in range(10)]
    res = phase2(pool, DetectionParams(), SIMPLE1, F0, None, seed=1)
    assert len(res.accepted) == 10 and not res.rejected
    assert res.success_counts == [3] * 10 and res.phase2_probes == 30


def test_all_compromised_all_accepted():
    pool = [_circ(i, True) for i in range(10)]
    res = phase2(pool, DetectionParams(), SIMPLE1, F0, None, seed=1)
    assert len(res.accepted) == 10


def test_lone_cxc_always_rejected():
    pool = [_circ(0, True)] + [_circ(i, False) for i in range(1, 10)]
    for s in range(50):
        res = phase2(pool, DetectionParams(), SIMPLE1, F0, None, seed=s)
        assert pool[0] in res.rejected
        assert len(res.accepted) == 9


def test_k_and_th_clamped_to_pool():
    pool = [_circ(i, False) for i in range(3)]
    res = phase2(pool, DetectionParams(N=10, K=5, Th=4), SIMPLE1, F0, None, seed=0)
    assert all(e.probes == 2 and e.threshold == 2 for e in res.evaluations)
    assert len(res.accepted) == 3


def test_attrition_loses_circuits():
    pool = [_circ(i, False) for i in range(10)]
    res = phase2(pool, DetectionParams(), NONE, Environment(0.5), None, seed=3)
    assert len(res.lost) + len(res.evaluations) == 10
    assert res.lost
    res = phase2(pool, DetectionParams(), NONE, Environment(0.5), None, seed=3, attrition=False)
    assert not res.lost


def test_trivial_scenarios(flat):
    honest = tag_compromised(flat, 0, seed=1)
    cfg = DetectionConfig(honest, select_guard_set(honest, 3, 0, seed=1), env=F0, seed=1)
    res = run_detection(cfg)
    assert len(res.accepted) == 10

    cfg = DetectionConfig(flat, select_guard_set(flat, 3, 1, seed=1), env=Environment(0.23), seed=1)
    res = run_detection(cfg)
    assert res.accepted and all(classify(c).kind is Kind.CXC for c in res.accepted)


def test_run_detection_deterministic(flat):
    gs = select_guard_set(flat, 3, Fraction(1, 3), seed=4)
    a = run_detection(DetectionConfig(flat, gs, seed=("x", 1)))
    b = run_detection(DetectionConfig(flat, gs, seed=("x", 1)))
    assert a == b


def test_randomized_middle_pool_runs(flat):
    gs = select_guard_set(flat, 3, Fraction(1, 3), seed=4)
    p1 = phase1(flat, gs, NONE, F0, 10, random.Random(2))
    res = phase2(p1.circuits, DetectionParams(), NONE, F0, flat, seed=2, randomize_middle=True)
    assert len(res.evaluations) == 10


def test_kind_counts():
    pool = [_circ(0, True), _circ(1, False), _circ(2, False)]
    assert kind_counts(pool) == {Kind.CXC: 1, Kind.HHH: 2, Kind.OTHER: 0}
