import math
import time

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats
from statsmodels.stats.proportion import proportion_confint

from finite_collapse.analytics import CoincidenceInputs, analyze, p_less_quadrature
from finite_collapse.collapse import (
    EffectiveSymmetric,
    RouteKinematics,
    SingleShapeCovariant,
    StateAmplitudes,
    TwoShapeExponential,
    TwoShapeLinear,
)
from finite_collapse.errors import ConfigurationError, DomainError
from finite_collapse.montecarlo import (
    BLOCK,
    CountTable,
    Scenario,
    TrialConfig,
    estimate_probabilities,
    partition_bounds,
    resolve_config,
    run_batch,
    run_trial,
    wilson_interval,
)
from finite_collapse.profiles import ExperimentGeometry, PulseProfile, Shape, cdf_at

STATE = StateAmplitudes.from_alpha2(0.75)


def config(delta_t=0.1, family=None, state=STATE, geometry=None, **kw):
    geometry = geometry or ExperimentGeometry()
    kin = RouteKinematics(state, delta_t, family or EffectiveSymmetric())
    return resolve_config(TrialConfig(state=state, geometry=geometry, kinematics=kin, **kw))


def within(count, n, p, k=4.0):
    sd = math.sqrt(n * p * (1 - p))
    return abs(count - n * p) <= k * sd


def test_count_table_invariants():
    t = run_batch(config(delta_t=300.0, n_trials=200_000))
    assert t.n_pm + t.n_mp == t.n_total == 200_000
    assert t.n_route1 + t.n_route2 == t.n_nontrivial
    assert t.n_nontrivial > 0


counts = st.builds(CountTable, *(st.integers(0, 10**12) for _ in range(6)))


@given(counts, counts, counts)
def test_merge_is_associative_and_commutative(a, b, c):
    assert (a + b) + c == a + (b + c)
    assert a + b == b + a
    assert a + CountTable() == a


def test_determinism_and_partition_invariance():
    cfg = config(delta_t=50.0, n_trials=3 * BLOCK + 12_345, seed=77)
    ref = run_batch(cfg)
    assert run_batch(cfg) == ref
    for parts in (2, 7, 8, 64, 1000):
        assert run_batch(cfg, partitions=parts) == ref
    assert run_batch(cfg, partitions=8, workers=4) == ref
    assert run_batch(TrialConfig(**{**cfg.__dict__, "seed": 78})) != ref


def test_partition_bounds_cover_range():
    for n, p in [(10, 3), (5, 64), (1, 1), (10**9, 64)]:
        b = partition_bounds(n, p)
        assert b[0][0] == 0 and b[-1][1] == n
        assert all(x[1] == y[0] for x, y in zip(b, b[1:]))


def test_replay_matches_batch():
    cfg = config(delta_t=400.0, n_trials=3000, seed=5)
    table = run_batch(cfg)
    outcomes = [run_trial(cfg, i) for i in range(cfg.n_trials)]
    assert sum(o.plus_minus for o in outcomes) == table.n_pm
    assert sum(o.nontrivial for o in outcomes) == table.n_nontrivial
    assert sum(o.route == 1 for o in outcomes) == table.n_route1
    for o in outcomes[:200]:
        assert o.nontrivial == (abs(o.y) < 400.0)
        assert o.left_first == (o.t_left < o.t_right)
        assert (o.route is not None) == o.nontrivial
    with pytest.raises(DomainError):
        run_trial(cfg, -1)


def test_replay_far_index_crosses_blocks():
    cfg = config(n_trials=10)
    a = run_trial(cfg, 5 * BLOCK + 17)
    b = run_trial(cfg, 5 * BLOCK + 17)
    assert a == b


def test_sampled_hit_times_follow_truncated_profile():
    g = ExperimentGeometry(PulseProfile(Shape.SECH2, 1000.0), 3.3, 4000.0)
    cfg = config(delta_t=0.1, geometry=g, n_trials=4000, seed=9)
    t = np.array([run_trial(cfg, i).t_left for i in range(cfg.n_trials)])
    lo, hi = g.window
    f_lo, f_hi = cdf_at(g.left, lo), cdf_at(g.left, hi)
    assert stats.kstest(t, lambda x: (cdf_at(g.left, x) - f_lo) / (f_hi - f_lo)).pvalue > 1e-3


def test_instantaneous_limit_alpha_to_one():
    st_ = StateAmplitudes.from_alpha2(1 - 1e-12)
    kin = RouteKinematics(st_, 0.1, TwoShapeExponential())
    t = run_batch(TrialConfig(state=st_, kinematics=kin, scenario=Scenario.INSTANTANEOUS, n_trials=100_000))
    assert t.n_pm == t.n_total


def test_zero_band_matches_instantaneous_exactly():
    fin = config(delta_t=0.0, n_trials=500_000, seed=3)
    inst = TrialConfig(state=STATE, kinematics=fin.kinematics, scenario=Scenario.INSTANTANEOUS, n_trials=500_000, seed=3)
    assert run_batch(fin) == run_batch(inst)


def test_zero_band_scenarios_same_distribution_over_seeds():
    # two-sample proportion test on independent streams, 50 seeds, N = 1e6
    rejections = 0
    for seed in range(50):
        a = run_batch(config(delta_t=0.0, n_trials=1_000_000, seed=seed))
        b = run_batch(TrialConfig(state=STATE, scenario="instantaneous", n_trials=1_000_000, seed=10_000 + seed))
        p = (a.n_pm + b.n_pm) / (2e6)
        z = (a.n_pm - b.n_pm) / 1e6 / math.sqrt(p * (1 - p) * 2 / 1e6)
        rejections += abs(z) > stats.norm.ppf(0.995)
    assert rejections <= 3  # Binomial(50, 0.01) exceeds 3 with probability 2e-3


def test_instantaneous_tallies_nontrivial_pairs_without_routes():
    cfg = config(delta_t=300.0, n_trials=200_000, scenario=Scenario.INSTANTANEOUS)
    t = run_batch(cfg)
    p = p_less_quadrature(CoincidenceInputs(cfg.geometry, 300.0))
    assert within(t.n_nontrivial, t.n_total, p)
    assert t.n_route1 == t.n_route2 == 0
    assert within(t.n_pm, t.n_total, 0.75)


def test_covariant_null_at_large_n():
    cfg = config(delta_t=0.1, family=SingleShapeCovariant(5.0), n_trials=10_000_000, seed=21)
    t = run_batch(cfg)
    assert within(t.n_pm, t.n_total, 0.75)


@pytest.mark.parametrize(
    "family",
    [EffectiveSymmetric(5.0), TwoShapeExponential(2.0, 9.0), TwoShapeLinear(0.5, 3.0), SingleShapeCovariant(1.0)],
    ids=repr,
)
def test_frequencies_match_analytics(family):
    # a wide reduction window makes the finite-time deviation visible at N = 1e7
    cfg = config(delta_t=500.0, family=family, n_trials=10_000_000, seed=4)
    report, _ = analyze(cfg.kinematics, cfg.geometry)
    t = run_batch(cfg)
    assert within(t.n_nontrivial, t.n_total, report.p_less)
    assert within(t.n_pm, t.n_total, report.p_plus_minus_exact)
    assert within(t.n_route1, t.n_nontrivial, 0.75)
    if not isinstance(family, SingleShapeCovariant):
        # and the shift from |alpha|^2 is resolved at this N
        assert not within(t.n_pm, t.n_total, 0.75, k=3.0)


@pytest.mark.parametrize(
    "geometry,delta_t",
    [
        (ExperimentGeometry(), 0.1),
        (ExperimentGeometry(PulseProfile(Shape.GAUSSIAN, 1000.0)), 0.1),
        (ExperimentGeometry(PulseProfile(Shape.SECH2, 1000.0), 0.0, 1500.0), 200.0),
        (ExperimentGeometry(PulseProfile(Shape.SECH2, 100.0), 250.0, 800.0, window_origin=-100.0), 60.0),
        (ExperimentGeometry(PulseProfile(Shape.GAUSSIAN, 300.0), -80.0, 600.0), 25.0),
    ],
)
def test_nontrivial_rate_matches_quadrature(geometry, delta_t):
    cfg = config(delta_t=delta_t, geometry=geometry, family=TwoShapeExponential(), n_trials=2_000_000, seed=13)
    t = run_batch(cfg)
    p = p_less_quadrature(CoincidenceInputs(geometry, delta_t))
    assert within(t.n_nontrivial, t.n_total, p)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        TrialConfig(n_trials=0)
    with pytest.raises(ConfigurationError):
        TrialConfig(n_trials=1.5)
    with pytest.raises(ConfigurationError):
        TrialConfig(seed=-1)
    with pytest.raises(ConfigurationError):
        TrialConfig(state=StateAmplitudes.from_alpha2(0.3), kinematics=RouteKinematics(STATE, 0.1))
    with pytest.raises(ConfigurationError):
        TrialConfig(geometry=ExperimentGeometry(window_dt=0.05))
    with pytest.raises(ValueError):
        TrialConfig(scenario="sometimes")
    unresolved = TrialConfig(n_trials=10)
    with pytest.raises(ConfigurationError):
        run_batch(unresolved)


def test_throughput_contract():
    cfg = config(n_trials=10_000_000)
    run_batch(TrialConfig(**{**cfg.__dict__, "n_trials": BLOCK}))  # warm-up
    t0 = time.perf_counter()
    run_batch(cfg)
    rate = cfg.n_trials / (time.perf_counter() - t0)
    assert rate >= 1e7, f"{rate:.3g} trials/s"


# ---------------------------------------------------------------- estimation

def test_estimate_examples():
    e = estimate_probabilities(CountTable(75, 25, 0, 0, 0, 100))
    assert e["plus_minus"].estimate == 0.75
    nt = e["nontrivial"]
    assert nt.lower == 0.0 and 0.0 < nt.upper < 0.05
    with pytest.raises(DomainError):
        estimate_probabilities(CountTable())


@pytest.mark.parametrize("k,n,conf", [(0, 10, 0.95), (3, 10, 0.9), (750_123, 1_000_000, 0.95), (10, 10, 0.99), (1, 7, 0.5)])
def test_wilson_against_statsmodels(k, n, conf):
    lo, hi = wilson_interval(k, n, conf)
    ref = proportion_confint(k, n, alpha=1 - conf, method="wilson")
    np.testing.assert_allclose([lo, hi], ref, rtol=1e-12, atol=1e-15)


def test_wilson_errors():
    with pytest.raises(DomainError):
        wilson_interval(0, 0)
    with pytest.raises(DomainError):
        wilson_interval(1, 2, 1.0)


def test_wilson_coverage():
    covered = 0
    for seed in range(100):
        t = run_batch(TrialConfig(state=STATE, scenario="instantaneous", n_trials=1_000_000, seed=seed))
        e = estimate_probabilities(t, 0.95)["plus_minus"]
        covered += e.lower <= 0.75 <= e.upper
    assert covered >= 94
