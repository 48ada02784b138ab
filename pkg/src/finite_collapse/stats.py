"""Distinguishability of instantaneous and finite-time collapse.

Two fluctuation scales are reported side by side:

* the coarse scale sqrt(N) on the (+-) minus (-+) count difference, under
  which the expected separation is 2 Lambda (2|a|^2 - 1) sqrt(N);
* the binomial standard deviation sqrt(N |a|^2 (1 - |a|^2)) of the (+-)
  count, which gives a calibrated z-test.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from scipy import stats as sps

from .errors import DomainError, InfeasiblePlan
from .montecarlo import CountTable

NORMAL_MIN_TRIALS = 30


def _exact(x) -> Fraction:
    # shortest decimal repr, so that 2e-4 means exactly 2/10000
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(repr(float(x)))


def deviation_delta_n(alpha2: float, lambda_eff: float, n: float) -> float:
    """Expected shift 2 Lambda (2|a|^2 - 1) N of the (+-) minus (-+) difference."""
    if not 0.0 < alpha2 < 1.0:
        raise DomainError("alpha2 must lie in (0, 1)")
    if lambda_eff < 0 or n < 1:
        raise DomainError("need lambda_eff >= 0 and n >= 1")
    return 2.0 * lambda_eff * (2.0 * alpha2 - 1.0) * n


def required_trials(k_sigma: float, alpha2: float, lambda_eff: float) -> int:
    """ceil(K^2 / [2 Lambda (2|a|^2 - 1)]^2), in exact rational arithmetic.

    Raises InfeasiblePlan when the separation vanishes (|a|^2 = 1/2 or Lambda = 0).
    """
    if not k_sigma > 0:
        raise DomainError("k_sigma must be positive")
    if not 0.0 < alpha2 < 1.0:
        raise DomainError("alpha2 must lie in (0, 1)")
    if lambda_eff < 0:
        raise DomainError("lambda_eff must be non-negative")
    k = _exact(k_sigma)
    sep = 2 * _exact(lambda_eff) * (2 * _exact(alpha2) - 1)
    if sep == 0:
        raise InfeasiblePlan(
            "no separation between the scenarios "
            + ("(balanced state, |alpha|^2 = 1/2)" if alpha2 == 0.5 else "(Lambda = 0)")
        )
    q = (k * k) / (sep * sep)
    return -((-q.numerator) // q.denominator)


@dataclass(frozen=True)
class SignificanceReport:
    n_total: int
    delta_n_expected: float
    fluctuation_scale: float
    paper_ratio: float
    delta_n_observed: float
    z_coarse: float
    z_score: float
    p_value: float
    method: str
    required_n: int | None
    lambda_eff: float

    def to_dict(self) -> dict:
        return asdict(self)


def z_test(table: CountTable, alpha2: float, lambda_eff: float = 0.0, k_sigma: float = 6.0) -> SignificanceReport:
    """Test the observed (+-) count against the Born expectation N |a|^2.

    ``z_score`` uses the binomial standard deviation; ``z_coarse`` is the
    observed count-difference shift divided by sqrt(N), directly comparable
    to ``paper_ratio`` = 2 Lambda (2|a|^2 - 1) sqrt(N) for the configured Lambda.
    Below NORMAL_MIN_TRIALS the p-value comes from an exact binomial test.
    """
    n = table.n_total
    if n < 1:
        raise DomainError("empty count table")
    if not 0.0 < alpha2 < 1.0:
        raise DomainError("alpha2 must lie in (0, 1)")
    expected = n * alpha2
    sd = math.sqrt(n * alpha2 * (1.0 - alpha2))
    z = (table.n_pm - expected) / sd
    if n >= NORMAL_MIN_TRIALS:
        p = float(2.0 * sps.norm.sf(abs(z)))
        method = "normal"
    else:
        p = float(sps.binomtest(table.n_pm, n, alpha2).pvalue)
        method = "exact_binomial"
    p = min(p, 1.0)
    root = math.sqrt(n)
    # shift of (n_pm - n_mp) away from its instantaneous expectation (2|a|^2 - 1) N
    observed_shift = (2.0 * alpha2 - 1.0) * n - (table.n_pm - table.n_mp)
    try:
        req = required_trials(k_sigma, alpha2, lambda_eff)
    except InfeasiblePlan:
        req = None
    return SignificanceReport(
        n_total=n,
        delta_n_expected=2.0 * lambda_eff * (2.0 * alpha2 - 1.0) * n,
        fluctuation_scale=root,
        paper_ratio=2.0 * lambda_eff * (2.0 * alpha2 - 1.0) * root,
        delta_n_observed=observed_shift,
        z_coarse=observed_shift / root,
        z_score=z,
        p_value=p,
        method=method,
        required_n=req,
        lambda_eff=lambda_eff,
    )


def coarse_fluctuation_extremes(n: int) -> tuple[float, float]:
    """The one-sided fluctuation pair (-sqrt(N)/2, +sqrt(N)/2) of the coarse argument."""
    r = math.sqrt(n)
    return (-0.5 * r, 0.5 * r)


# ------------------------------------------------------------------ sweeps

SWEEP_AXES = ("delta_t", "alpha2", "T", "lambda_rate")


@dataclass
class SweepRow:
    axis_value: float
    p_less: float | None = None
    lambda_uncond: float | None = None
    lambda_cond: float | None = None
    p_plus_minus: float | None = None
    delta_n: float | None = None
    required_n: int | None = None
    z: float | None = None
    seed: int | None = None
    note: str = ""


def significance_sweep(run_config, axis: str, grid: Sequence[float], *, k_sigma: float = 6.0,
                       monte_carlo: bool = False) -> list[SweepRow]:
    """Evaluate closed-form separations (and optionally MC z-scores) along one axis.

    ``run_config`` is a ``config.RunConfig``; each grid point replaces one
    field and is evaluated independently.  Failures are recorded in the row's
    ``note`` and the sweep continues.
    """
    from .analytics import analyze
    from .montecarlo import run_batch

    if axis not in SWEEP_AXES:
        raise DomainError(f"axis must be one of {SWEEP_AXES}")
    if len(grid) == 0:
        raise DomainError("empty sweep grid")
    rows = []
    for value in grid:
        row = SweepRow(axis_value=float(value), seed=run_config.seed)
        try:
            cfg = run_config.with_axis(axis, float(value))
            report, kin = analyze(cfg.kinematics(), cfg.geometry())
            lam = cfg.lambda_eff(report)
            row.p_less = report.p_less
            row.lambda_uncond = report.lambda_uncond
            row.lambda_cond = report.lambda_cond
            row.p_plus_minus = report.p_plus_minus_exact
            row.delta_n = deviation_delta_n(cfg.alpha2, lam, cfg.n_trials)
            try:
                row.required_n = required_trials(k_sigma, cfg.alpha2, lam)
            except InfeasiblePlan as exc:
                row.note = f"infeasible: {exc}"
            if monte_carlo:
                tc = cfg.trial_config(kinematics=kin)
                table = run_batch(tc, partitions=cfg.partitions)
                row.z = z_test(table, cfg.alpha2, lam, k_sigma).z_score
        except Exception as exc:  # recorded per row, sweep continues
            row.note = f"error: {type(exc).__name__}: {exc}"
        rows.append(row)
    return rows


def monotonicity_report(rows: Iterable[SweepRow], column: str) -> dict:
    vals = [getattr(r, column) for r in rows if getattr(r, column) is not None]
    inc = all(b >= a for a, b in zip(vals, vals[1:]))
    dec = all(b <= a for a, b in zip(vals, vals[1:]))
    return {"column": column, "nondecreasing": inc, "nonincreasing": dec, "points": len(vals)}
