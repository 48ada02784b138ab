"""Acceptance criteria, one test per criterion.

Each test records a single PASS/FAIL line (collected in the terminal summary)
and then asserts.  Criteria 1, 3 and 7 are expected to fail; the printed line
states the measured values and the reason.
"""
import itertools
import math
import os
import statistics
import time
from dataclasses import replace

import numpy as np
from scipy import stats

import conftest
from finite_collapse.analytics import (
    CoincidenceInputs,
    analyze,
    p_less_approx,
    p_less_closed_form,
    p_less_quadrature,
)
from finite_collapse.config import RunConfig
from finite_collapse.montecarlo import CountTable, Scenario, run_batch
from finite_collapse.profiles import ExperimentGeometry, PulseProfile, Shape
from finite_collapse.stats import deviation_delta_n, required_trials, z_test

# run criterion 7 at full size even when the projected runtime exceeds its budget
FORCE_LONG_ENV = "FINITE_COLLAPSE_FORCE_LONG"


def record(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line


def sym_inputs(s, T, W, d):
    return CoincidenceInputs(ExperimentGeometry(PulseProfile(Shape.SECH2, s), T, W), d, "symmetric")


def resolved(cfg):
    report, kin = analyze(cfg.kinematics(), cfg.geometry())
    return report, cfg.trial_config(kinematics=kin)


def test_criterion_1_default_coincidence_probability():
    t0 = time.perf_counter()
    closed = p_less_closed_form(1000.0, 3.3, 1e6, 0.1)
    quad = p_less_quadrature(sym_inputs(1000.0, 3.3, 1e6, 0.1))
    elapsed = time.perf_counter() - t0
    rel = abs(closed - quad) / quad
    in_band = 0.8e-4 <= closed <= 1.2e-4 and 0.8e-4 <= quad <= 1.2e-4
    ok = rel < 1e-8 and in_band and elapsed < 1.0
    record(1, ok, f"closed={closed:.6e} quadrature={quad:.6e} rel={rel:.1e} (<1e-8 {'ok' if rel < 1e-8 else 'NO'}); "
                  f"band [0.8,1.2]e-4 {'ok' if in_band else 'NO'}: the exact sech^2 convolution gives p(0)=1/(3 sigma), "
                  f"so P_< = 2/3 of the quoted 1e-4 (small-delay approximation gives {p_less_approx(1000.0, 3.3, 1e6, 0.1):.6e}); "
                  f"{elapsed:.3f} s")


def test_criterion_2_closed_form_grid():
    sigmas = np.logspace(0, 3, 5)
    delays = np.logspace(-1, 2, 5)
    windows = np.logspace(3, 6, 5)
    bands = np.logspace(-1, 2, 5)  # shares values with the delays: T = delta_t on the diagonal
    t0 = time.perf_counter()
    worst, where = 0.0, None
    for s, T, W, d in itertools.product(sigmas, delays, windows, bands):
        q = p_less_quadrature(sym_inputs(s, T, W, d))
        rel = abs(p_less_closed_form(s, T, W, d) - q) / q
        if rel > worst:
            worst, where = rel, (s, T, W, d)
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-8 and elapsed < 60.0
    record(2, ok, f"625 points, worst rel={worst:.2e} at (sigma,T,W,dt)=({', '.join(f'{v:.3g}' for v in where)}); "
                  f"{elapsed:.1f} s")


def test_criterion_3_small_delay_approximation():
    t0 = time.perf_counter()
    worst, where = 0.0, None
    for s in (1.0, 1000.0):
        for T, d in itertools.product((0.0, 1e-4 * s, 3.3e-3 * s, 9e-3 * s), (1e-4 * s, 1e-3 * s, 9e-3 * s)):
            for W in (5.5 * s, 1e3 * s):
                c = p_less_closed_form(s, T, W, d)
                dev = abs(p_less_approx(s, T, W, d) / c - 1.0)
                if dev > worst:
                    worst, where = dev, (s, T, W, d)
    elapsed = time.perf_counter() - t0
    ok = worst <= 0.01 and elapsed < 10.0
    record(3, ok, f"worst |approx/closed - 1| = {worst:.4f} in the regime (limit 0.01) at "
                  f"(sigma,T,W,dt)=({', '.join(f'{v:.3g}' for v in where)}); the ratio tends to 3/2 because the "
                  f"approximate density at y=0 is 1/(2 sigma) against the exact 1/(3 sigma); {elapsed:.2f} s")


def test_criterion_4_planner():
    n = required_trials(6, 0.75, 2e-4)
    record(4, n == 900_000_000, f"required_trials(6, 3/4, 2e-4) = {n}")


def test_criterion_5_monte_carlo_against_analytics():
    parts = []
    ok = True
    for profile in ("sech2", "gaussian"):
        report, tc = resolved(RunConfig(profile=profile, n_trials=10_000_000))
        t0 = time.perf_counter()
        table = run_batch(tc)
        elapsed = time.perf_counter() - t0
        n = table.n_total
        z_nt = (table.n_nontrivial - n * report.p_less) / math.sqrt(n * report.p_less * (1 - report.p_less))
        p = report.p_plus_minus_exact
        z_pm = (table.n_pm - n * p) / math.sqrt(n * p * (1 - p))
        this = abs(z_nt) <= 4 and abs(z_pm) <= 4 and elapsed <= 2.0
        ok &= this
        parts.append(f"{profile}: z_nontrivial={z_nt:+.2f} z_pm={z_pm:+.2f} batch {elapsed:.2f} s")
    record(5, ok, "; ".join(parts))


def test_criterion_6_null_results():
    t0 = time.perf_counter()
    # (a) balanced state
    cfg = RunConfig(alpha2=0.5, n_trials=10_000_000)
    report, tc = resolved(cfg)
    dn = deviation_delta_n(0.5, cfg.lambda_eff(report), cfg.n_trials)
    z = [abs(z_test(run_batch(replace(tc, seed=s)), 0.5).z_score) for s in range(20)]
    med_a = statistics.median(z)
    ok_a = dn == 0.0 and med_a < 2.0
    # (b) covariant family against instantaneous collapse, independent streams
    base = RunConfig(family="covariant", n_trials=1_000_000)
    _, fin = resolved(base)
    inst = replace(fin, scenario=Scenario.INSTANTANEOUS)
    reject, pooled = 0, [CountTable(), CountTable()]
    crit = stats.norm.ppf(0.995)
    for s in range(50):
        a, b = run_batch(replace(fin, seed=s)), run_batch(replace(inst, seed=10_000 + s))
        reject += abs(_two_sample_z(a, b)) > crit
        pooled = [pooled[0] + a, pooled[1] + b]
    z_pool = _two_sample_z(*pooled)
    ok_b = abs(z_pool) <= crit and reject <= 3
    elapsed = time.perf_counter() - t0
    record(6, ok_a and ok_b and elapsed < 120.0,
           f"(a) delta_N={dn:g}, median |z|={med_a:.2f} over 20 seeds at N=1e7; "
           f"(b) pooled two-sample z={z_pool:+.2f} (1% critical {crit:.3f}), per-seed rejections {reject}/50; "
           f"{elapsed:.1f} s")


def _two_sample_z(a, b):
    p = (a.n_pm + b.n_pm) / (a.n_total + b.n_total)
    se = math.sqrt(p * (1 - p) * (1 / a.n_total + 1 / b.n_total))
    return (a.n_pm / a.n_total - b.n_pm / b.n_total) / se


def test_criterion_7_end_to_end_power():
    cfg = RunConfig()
    report, tc = resolved(cfg)
    lam = cfg.lambda_eff(report)
    n_req = required_trials(6, cfg.alpha2, lam)

    # measured throughput at the default configuration
    probe = replace(tc, n_trials=10_000_000)
    run_batch(replace(probe, n_trials=100_000))
    t0 = time.perf_counter()
    run_batch(probe)
    rate = probe.n_trials / (time.perf_counter() - t0)
    seeds = 5  # the reduced seed count allowed for this criterion
    projected_h = seeds * n_req / rate / 3600.0
    forced = os.environ.get(FORCE_LONG_ENV) == "1"

    if projected_h <= 0.5 or forced:
        zc = [abs(z_test(run_batch(replace(tc, n_trials=n_req, seed=s)), cfg.alpha2, lam).z_coarse)
              for s in range(seeds)]
        med = statistics.median(zc)
        main_ok = 4.5 <= med <= 8.0
        main = f"median |z| = {med:.2f} over {seeds} seeds at N={n_req}"
    else:
        main_ok = False
        main = (f"not run: N_req={n_req:.4e} per seed at Lambda_eff={lam:.4e} needs {projected_h:.1f} h for "
                f"{seeds} seeds at {rate:.3g} trials/s (budget 0.5 h; set {FORCE_LONG_ENV}=1 to run)")

    quoted = RunConfig(lambda_source="paper_literal")
    q_report, _ = analyze(quoted.kinematics(), quoted.geometry())
    q_lam = quoted.lambda_eff(q_report)
    n_q = required_trials(6, quoted.alpha2, q_lam)
    ratio = z_test(CountTable(n_pm=3 * n_q // 4, n_mp=n_q - 3 * n_q // 4, n_total=n_q), 0.75, q_lam).paper_ratio
    literal_ok = n_q == 900_000_000 and abs(ratio - 6.0) < 1e-9
    flagged = report.lambda_discrepancy and any("quoted Lambda" in s for s in report.notes)

    # same end-to-end chain where N_req is small: a wider reduction window
    scaled = RunConfig(delta_t=1000.0)
    s_report, s_tc = resolved(scaled)
    s_lam = scaled.lambda_eff(s_report)
    s_n = required_trials(6, scaled.alpha2, s_lam)
    s_z = [abs(z_test(run_batch(replace(s_tc, n_trials=s_n, seed=s)), scaled.alpha2, s_lam).z_coarse)
           for s in range(20)]
    s_med = statistics.median(s_z)
    scaled_ok = 4.5 <= s_med <= 8.0

    record(7, main_ok and literal_ok and flagged and scaled_ok,
           f"{main}; quoted-Lambda ratio {ratio:.6f} at N={n_q} ({'ok' if literal_ok else 'NO'}); "
           f"normalization discrepancy flagged: {flagged}; scaled check (delta_t=1000 fs, Lambda_eff={s_lam:.4f}, "
           f"N={s_n}) median |z| = {s_med:.2f} over 20 seeds ({'ok' if scaled_ok else 'NO'})")


def test_criterion_8_determinism():
    t0 = time.perf_counter()
    _, tc = resolved(RunConfig(n_trials=10_000_019, seed=2024))
    ref = run_batch(tc)
    same = [run_batch(tc, partitions=p) == ref for p in (1, 8, 64)] + [run_batch(tc) == ref]
    elapsed = time.perf_counter() - t0
    record(8, all(same) and elapsed < 60.0,
           f"partitions 1/8/64 and a repeat run identical: {all(same)} ({ref.n_pm} / {ref.n_total}); {elapsed:.1f} s")


def test_criterion_9_calibration():
    t0 = time.perf_counter()
    _, tc = resolved(RunConfig(scenario="instantaneous", n_trials=1_000_000))
    seeds = 1000
    rejections = sum(z_test(run_batch(replace(tc, seed=s)), 0.75).p_value < 0.05 for s in range(seeds))
    rate = rejections / seeds
    elapsed = time.perf_counter() - t0
    record(9, 0.03 <= rate <= 0.07 and elapsed < 120.0,
           f"rejection rate at 5%: {rate:.3f} ({rejections}/{seeds} seeds, N=1e6); {elapsed:.1f} s")
