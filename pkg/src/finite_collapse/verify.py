"""Cross-checks between independent computation routes for one configuration."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .analytics import (
    CoincidenceInputs,
    analyze,
    band_measure,
    p_less_closed_form,
    p_less_quadrature,
    p_plus_minus_exact,
)
from .collapse import RouteKinematics, SingleShapeCovariant, conditional_plus_minus_prob
from .config import RunConfig
from .montecarlo import Scenario, run_batch

TOLERANCES = {
    "closed_vs_quadrature": 1e-8,
    "density_consistency": 1e-10,
    "lambda_bound": 1e-9,
    "exact_vs_symmetric": 1e-10,
    "completeness": 1e-12,
    "null_family": 1e-12,
    "mc_sigma": 4.0,
}
# Below this many expected events the normal approximation behind the
# k-sigma MC checks is poor; the bound is widened.
MIN_EXPECTED_EVENTS = 100.0
WIDENED_SIGMA = 5.0


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def to_dict(self):
        return asdict(self)


def _mc_bound(n: int, p: float, k: float) -> tuple[float, float, str]:
    sd = math.sqrt(n * p * (1.0 - p))
    if n * min(p, 1.0 - p) < MIN_EXPECTED_EVENTS:
        k = max(k, WIDENED_SIGMA)
        # one count of slack for the discreteness of rare-event counts
        return k * sd + 1.0, k, f"widened to {k:g} sigma + 1 count (expected events {n * p:.3g})"
    return k * sd, k, f"{k:g} sigma"


def run_checks(cfg: RunConfig, tolerance_scale: float = 1.0) -> list[CheckResult]:
    """All cross-oracle checks.  tolerance_scale multiplies every tolerance."""
    tol = {k: v * tolerance_scale for k, v in TOLERANCES.items()}
    out: list[CheckResult] = []
    geom = cfg.geometry()
    kin = cfg.kinematics()
    st = kin.state
    report, resolved = analyze(kin, geom)

    if cfg.profile == "sech2" and cfg.delta_t > 0:
        q = p_less_quadrature(CoincidenceInputs(geom, cfg.delta_t, "symmetric"))
        c = p_less_closed_form(cfg.sigma_t, cfg.delay_T, cfg.window_dt, cfg.delta_t)
        rel = abs(c - q) / q if q else abs(c)
        out.append(CheckResult("closed_vs_quadrature", rel <= tol["closed_vs_quadrature"], rel,
                               tol["closed_vs_quadrature"], f"closed={c:.15g} quadrature={q:.15g}"))

    if cfg.delta_t > 0:
        inputs = CoincidenceInputs(geom, cfg.delta_t)
        m = band_measure(inputs).mass
        rel = abs(m - report.p_less) / report.p_less if report.p_less else abs(m)
        out.append(CheckResult("density_consistency", rel <= tol["density_consistency"], rel,
                               tol["density_consistency"], "integral of p(y) over the band vs P_<"))
        excess = report.lambda_uncond / report.lambda_bound - 1.0 if report.lambda_bound else 0.0
        out.append(CheckResult("lambda_bound", excess <= tol["lambda_bound"], excess, tol["lambda_bound"],
                               "Lambda / (|alpha|^2 P_<) - 1"))
        if cfg.family == "symmetric":
            d = abs(report.p_plus_minus_exact - report.p_plus_minus_symmetric)
            out.append(CheckResult("exact_vs_symmetric", d <= tol["exact_vs_symmetric"], d,
                                   tol["exact_vs_symmetric"]))
        null = RouteKinematics(st, cfg.delta_t, SingleShapeCovariant(cfg.lambda2))
        grid = np.linspace(-cfg.delta_t, cfg.delta_t, 1001)[1:-1]
        dev = float(np.max(np.abs(conditional_plus_minus_prob(null, grid) - st.alpha2)))
        dev = max(dev, abs(p_plus_minus_exact(null, inputs) - st.alpha2))
        out.append(CheckResult("null_family", dev <= tol["null_family"], dev, tol["null_family"],
                               "covariant family reproduces |alpha|^2"))

    s = report.p_plus_minus_exact + report.p_minus_plus_exact
    out.append(CheckResult("completeness", abs(s - 1.0) <= tol["completeness"], abs(s - 1.0), tol["completeness"]))

    tc = cfg.trial_config(kinematics=resolved)
    table = run_batch(tc, partitions=1)
    n = table.n_total
    p_nt = report.p_less if cfg.delta_t > 0 else 0.0
    p_pm = report.p_plus_minus_exact if tc.scenario is Scenario.FINITE_TIME else st.alpha2
    for name, count, p in (("mc_nontrivial_rate", table.n_nontrivial, p_nt),
                           ("mc_plus_minus", table.n_pm, p_pm)):
        dev = abs(count - n * p)
        bound, k, how = _mc_bound(n, p, tol["mc_sigma"])
        out.append(CheckResult(name, dev <= bound, dev, bound, f"|observed - expected| counts, {how}"))

    again = run_batch(tc, partitions=8)
    out.append(CheckResult("determinism", again == table, 0.0 if again == table else 1.0, 0.0,
                           "identical counts for 1 and 8 partitions"))
    return out
