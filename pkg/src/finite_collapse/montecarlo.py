"""Trial-level simulation of the two-detector polarization experiment.

Random numbers come from counter-based Philox streams.  Trial ``i`` always
consumes the three uniforms at lane ``i % BLOCK`` of block ``i // BLOCK``,
where block ``b`` is the Philox stream keyed by the seed with counter word 1
set to ``b``.  Counts are therefore a pure function of (config, seed) and do
not depend on how the trial range is partitioned.

Per trial: u_L and u_R give the two hit times by inverse transform; the third
uniform u_c decides the outcome.  Hit times are drawn under both scenarios,
so n_nontrivial is tallied even when collapse is instantaneous.  In a non-trivial trial u_c first selects
the route (route 1 iff u_c < |alpha|^2) and is then rescaled to a fresh
uniform for the outcome draw.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from enum import Enum

import numpy as np
from scipy import stats as sps

from .collapse import RouteKinematics, StateAmplitudes
from .errors import ConfigurationError, DomainError
from .profiles import ExperimentGeometry, truncated_quantile

BLOCK = 1 << 16
_SEED_MASK = (1 << 64) - 1


class Scenario(str, Enum):
    INSTANTANEOUS = "instantaneous"
    FINITE_TIME = "finite"


@dataclass(frozen=True)
class TrialConfig:
    state: StateAmplitudes = field(default_factory=StateAmplitudes)
    geometry: ExperimentGeometry = field(default_factory=ExperimentGeometry)
    kinematics: RouteKinematics | None = None
    scenario: Scenario = Scenario.FINITE_TIME
    n_trials: int = 1_000_000
    seed: int = 1

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        if self.kinematics is None:
            object.__setattr__(self, "kinematics", RouteKinematics(state=self.state))
        if self.kinematics.state != self.state:
            raise ConfigurationError("kinematics state differs from the trial state")
        if int(self.n_trials) != self.n_trials or self.n_trials < 1:
            raise ConfigurationError(f"n_trials must be a positive integer, got {self.n_trials!r}")
        if not (0 <= self.seed <= _SEED_MASK):
            raise ConfigurationError("seed must be an unsigned 64-bit value")
        if self.kinematics.delta_t >= self.geometry.window_dt:
            raise ConfigurationError("delta_t must be smaller than window_dt")

    @property
    def delta_t(self) -> float:
        return self.kinematics.delta_t


@dataclass(frozen=True)
class CountTable:
    n_pm: int = 0
    n_mp: int = 0
    n_nontrivial: int = 0
    n_route1: int = 0
    n_route2: int = 0
    n_total: int = 0

    def __add__(self, other: "CountTable") -> "CountTable":
        return CountTable(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    def as_dict(self) -> dict[str, int]:
        return {f.name: int(getattr(self, f.name)) for f in fields(self)}


@dataclass(frozen=True)
class TrialOutcome:
    index: int
    t_left: float
    t_right: float
    y: float
    nontrivial: bool
    route: int | None
    plus_minus: bool
    left_first: bool


def block_uniforms(seed: int, block: int) -> np.ndarray:
    """The (3, BLOCK) uniforms of one block."""
    bitgen = np.random.Philox(key=seed & _SEED_MASK, counter=block << 64)
    return np.random.Generator(bitgen).random((3, BLOCK))


def _require_kinematics_ready(config: TrialConfig):
    kin = config.kinematics
    if config.scenario is Scenario.FINITE_TIME and kin.delta_t > 0.0:
        # raises for an unresolved symmetric family
        kin.family.shape(1, 0.5)


def _simulate_lanes(config: TrialConfig, u: np.ndarray):
    """Vectorized trial logic on uniforms u of shape (3, n)."""
    a2 = config.state.alpha2
    uc = u[2]
    pm = uc < a2
    if config.delta_t == 0.0:
        # |y| < 0 is impossible: every trial is trivial
        return pm, None, None, None, None
    g = config.geometry
    lo, hi = g.window
    t_l = truncated_quantile(g.left, u[0], lo, hi)
    t_r = truncated_quantile(g.right, u[1], lo, hi)
    y = t_l - t_r
    nt = np.abs(y) < config.delta_t
    route = None
    if config.scenario is Scenario.INSTANTANEOUS:
        # non-trivial pairs are tallied, but the outcome law is unchanged
        return pm, nt, route, t_l, t_r
    idx = np.flatnonzero(nt)
    if idx.size:
        c = uc[idx]
        r1 = c < a2
        # conditional uniform for the outcome draw
        v = np.where(r1, c / a2, (c - a2) / (1.0 - a2))
        route = np.where(r1, 1, 2)
        w = config.kinematics.plus_minus_weight(route, np.abs(y[idx]))
        pm[idx] = v < w
    return pm, nt, route, t_l, t_r


def _count_range(config: TrialConfig, start: int, stop: int) -> CountTable:
    total = CountTable()
    b0, b1 = start // BLOCK, (stop - 1) // BLOCK
    for b in range(b0, b1 + 1):
        lane_lo = max(start - b * BLOCK, 0)
        lane_hi = min(stop - b * BLOCK, BLOCK)
        u = block_uniforms(config.seed, b)[:, lane_lo:lane_hi]
        pm, nt, route, _, _ = _simulate_lanes(config, u)
        n = lane_hi - lane_lo
        n_pm = int(np.count_nonzero(pm))
        if nt is None:
            total = total + CountTable(n_pm, n - n_pm, 0, 0, 0, n)
        else:
            n_nt = int(np.count_nonzero(nt))
            if route is None:
                n_r1 = n_r2 = 0
            else:
                n_r1 = int(np.count_nonzero(route == 1))
                n_r2 = route.size - n_r1
            total = total + CountTable(n_pm, n - n_pm, n_nt, n_r1, n_r2, n)
    return total


def run_trial(config: TrialConfig, index: int) -> TrialOutcome:
    """Replay trial ``index`` of the stream defined by config.seed."""
    if not 0 <= index:
        raise DomainError("trial index must be non-negative")
    _require_kinematics_ready(config)
    b, lane = divmod(index, BLOCK)
    u = block_uniforms(config.seed, b)[:, lane:lane + 1]
    pm, nt, route, t_l, t_r = _simulate_lanes(config, u)
    if nt is None:
        return TrialOutcome(index, math.nan, math.nan, math.nan, False, None, bool(pm[0]), False)
    y = float(t_l[0] - t_r[0])
    return TrialOutcome(
        index=index,
        t_left=float(t_l[0]),
        t_right=float(t_r[0]),
        y=y,
        nontrivial=bool(nt[0]),
        route=int(route[0]) if route is not None else None,
        plus_minus=bool(pm[0]),
        left_first=y < 0.0,
    )


def partition_bounds(n: int, partitions: int) -> list[tuple[int, int]]:
    partitions = max(1, min(int(partitions), n))
    edges = [n * k // partitions for k in range(partitions + 1)]
    return [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def run_batch(config: TrialConfig, partitions: int = 1, workers: int | None = None) -> CountTable:
    """Run config.n_trials trials and return the merged counts.

    ``partitions`` splits the trial range into contiguous sub-ranges; the
    result is identical for any split.  ``workers`` > 1 evaluates partitions
    on a thread pool.  Any failure propagates before a table is returned.
    """
    _require_kinematics_ready(config)
    parts = partition_bounds(config.n_trials, partitions)
    if workers and workers > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            tables = list(pool.map(lambda ab: _count_range(config, *ab), parts))
    else:
        tables = [_count_range(config, a, b) for a, b in parts]
    total = CountTable()
    for t in tables:
        total = total + t
    if total.n_total != config.n_trials:
        raise RuntimeError("trial count mismatch after merge")
    return total


# ------------------------------------------------------------- estimation

@dataclass(frozen=True)
class ProportionEstimate:
    estimate: float
    lower: float
    upper: float
    successes: int
    total: int
    confidence: float


def wilson_interval(successes: int, total: int, confidence: float = 0.95) -> tuple[float, float]:
    if total <= 0:
        raise DomainError("Wilson interval needs at least one trial")
    if not 0.0 < confidence < 1.0:
        raise DomainError("confidence must lie in (0, 1)")
    z = float(sps.norm.ppf(0.5 + 0.5 * confidence))
    n = float(total)
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2.0 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom
    # the bounds are exactly 0 and 1 at the extremes; rounding would leave ~1e-18
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == total else min(1.0, center + half)
    return lo, hi


def estimate_probabilities(table: CountTable, confidence: float = 0.95) -> dict[str, ProportionEstimate]:
    """Point estimates and Wilson intervals for P(+-) and the non-trivial rate."""
    if table.n_total < 1:
        raise DomainError("empty count table")
    out = {}
    for key, k in (("plus_minus", table.n_pm), ("nontrivial", table.n_nontrivial)):
        lo, hi = wilson_interval(k, table.n_total, confidence)
        out[key] = ProportionEstimate(k / table.n_total, lo, hi, k, table.n_total, confidence)
    return out


def resolve_config(config: TrialConfig) -> TrialConfig:
    """Fix any geometry-dependent kinematics (the symmetric family) before a run."""
    from .analytics import CoincidenceInputs, resolve_kinematics

    kin = config.kinematics
    if kin.delta_t == 0.0:
        return config
    resolved = resolve_kinematics(kin, CoincidenceInputs(config.geometry, kin.delta_t))
    return config if resolved is kin else replace(config, kinematics=resolved)
