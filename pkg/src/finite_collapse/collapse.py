"""Kinematic collapse routes over a finite reduction window.

After the first hit the two-photon state follows route 1 (ends in |+->) with
probability |alpha|^2, or route 2 (ends in |-+>).  Within a route the
amplitude of the losing branch (the "doomed" amplitude: b1 on route 1, a2 on
route 2) decays from its initial value to zero over the window delta_t; the
winning ("survivor") amplitude follows from pointwise normalization.

Only the elapsed time tau since the first hit enters, and only |alpha|^2
enters any probability.

Decay families parameterize the doomed amplitude as initial value times a
shape s(x), x = tau / delta_t, with s(0) = 1 and s(1) = 0.  Exponential rates
are dimensionless, in units of 1 / delta_t.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from .errors import ConfigurationError, DomainError

DEFAULT_RATE = 5.0


def exponential_shape(x, rate: float):
    """(exp(-k x) - exp(-k)) / (1 - exp(-k)) for k = rate; exact at both ends.

    rate may be negative (concave decay); rate == 0 is the linear limit.
    """
    x = np.asarray(x, dtype=float)
    k = float(rate)
    if k == 0.0:
        out = 1.0 - x
    elif k > 0.0:
        out = np.exp(-k * x) * (-np.expm1(-k * (1.0 - x))) / (-math.expm1(-k))
    else:
        out = np.expm1(k * (1.0 - x)) / math.expm1(k)
    return out


def power_shape(x, exponent: float):
    x = np.asarray(x, dtype=float)
    return (1.0 - x) ** exponent


@dataclass(frozen=True)
class TwoShapeExponential:
    """Independent exponential decay for each route's doomed amplitude."""

    rate1: float = DEFAULT_RATE
    rate2: float = DEFAULT_RATE
    name = "exponential"

    def shape(self, route: int, x):
        return exponential_shape(x, self.rate1 if route == 1 else self.rate2)

    def swapped(self):
        return replace(self, rate1=self.rate2, rate2=self.rate1)


@dataclass(frozen=True)
class TwoShapeLinear:
    """s(x) = (1 - x)**p with a separate exponent per route."""

    exponent1: float = 1.0
    exponent2: float = 1.0
    name = "linear"

    def __post_init__(self):
        if not (self.exponent1 > 0 and self.exponent2 > 0):
            raise ConfigurationError("linear-family exponents must be positive")

    def shape(self, route: int, x):
        return power_shape(x, self.exponent1 if route == 1 else self.exponent2)

    def swapped(self):
        return replace(self, exponent1=self.exponent2, exponent2=self.exponent1)


@dataclass(frozen=True)
class SingleShapeCovariant:
    """One shape g for both doomed amplitudes: b1 = beta g, a2 = alpha g.

    Null control: the conditional (+-) probability is |alpha|^2 at every tau.
    """

    rate: float = DEFAULT_RATE
    name = "covariant"

    def shape(self, route: int, x):
        return exponential_shape(x, self.rate)

    def swapped(self):
        return self


@dataclass(frozen=True)
class EffectiveSymmetric:
    """Only a2 is prescribed (exponential, rate2).

    The route-1 rate is left open and fixed later so that the left-right
    symmetry constraint holds for a given coincidence geometry; see
    ``analytics.resolve_kinematics``.
    """

    rate2: float = DEFAULT_RATE
    rate1: float | None = None
    name = "symmetric"

    @property
    def resolved(self) -> bool:
        return self.rate1 is not None

    def shape(self, route: int, x):
        if route == 1:
            if self.rate1 is None:
                raise ConfigurationError(
                    "route-1 shape of the symmetric family is fixed by the symmetry "
                    "constraint; resolve it against a geometry first"
                )
            return exponential_shape(x, self.rate1)
        return exponential_shape(x, self.rate2)

    def swapped(self):
        if self.rate1 is None:
            raise ConfigurationError("cannot swap an unresolved symmetric family")
        return replace(self, rate1=self.rate2, rate2=self.rate1)


DecayFamily = Union[TwoShapeExponential, TwoShapeLinear, SingleShapeCovariant, EffectiveSymmetric]

FAMILIES = {
    "exponential": TwoShapeExponential,
    "linear": TwoShapeLinear,
    "covariant": SingleShapeCovariant,
    "symmetric": EffectiveSymmetric,
}


@dataclass(frozen=True)
class StateAmplitudes:
    """alpha|+-> + beta|-+>; beta is taken real and non-negative."""

    alpha: complex = math.sqrt(3.0) / 2.0
    # |alpha|^2 as given to from_alpha2, so that 0.75 stays 0.75 rather than
    # the rounded square of its square root
    weight: float | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.weight is None:
            object.__setattr__(self, "weight", abs(self.alpha) ** 2)
        a2 = self.weight
        if not (0.0 < a2 < 1.0):
            raise ConfigurationError(f"|alpha|^2 must lie strictly in (0, 1), got {a2!r}")

    @classmethod
    def from_alpha2(cls, alpha2: float, phase: float = 0.0) -> "StateAmplitudes":
        if not (0.0 < alpha2 < 1.0):
            raise ConfigurationError(f"alpha2 must lie strictly in (0, 1), got {alpha2!r}")
        mag = math.sqrt(alpha2)
        return cls(mag if phase == 0.0 else mag * cmath.exp(1j * phase), float(alpha2))

    @property
    def alpha2(self) -> float:
        return self.weight

    @property
    def beta2(self) -> float:
        return 1.0 - self.alpha2

    @property
    def beta(self) -> float:
        return math.sqrt(self.beta2)

    def swapped(self) -> "StateAmplitudes":
        return StateAmplitudes(self.beta, self.beta2)


@dataclass(frozen=True)
class RouteKinematics:
    """Amplitude trajectories a_k(tau), b_k(tau) for tau in [0, delta_t]."""

    state: StateAmplitudes = field(default_factory=StateAmplitudes)
    delta_t: float = 0.1
    family: DecayFamily = field(default_factory=EffectiveSymmetric)

    def __post_init__(self):
        if not (self.delta_t >= 0 and math.isfinite(self.delta_t)):
            raise ConfigurationError(f"delta_t must be >= 0, got {self.delta_t!r}")

    def _x(self, tau):
        tau = np.asarray(tau, dtype=float)
        if self.delta_t == 0.0:
            raise DomainError("delta_t = 0: the reduction is instantaneous, no trajectory exists")
        if np.any((tau < 0.0) | (tau > self.delta_t)) or np.any(np.isnan(tau)):
            raise DomainError("tau must lie in [0, delta_t]")
        return tau / self.delta_t

    def doomed_amplitude(self, route: int, tau):
        """|b1(tau)| on route 1, |a2(tau)| on route 2."""
        _check_route(route)
        x = self._x(tau)
        init = self.state.beta if route == 1 else abs(self.state.alpha)
        return _scalar(init * self.family.shape(route, x))

    def survivor_amplitude(self, route: int, tau):
        """|a1(tau)| on route 1, |b2(tau)| on route 2."""
        d = np.asarray(self.doomed_amplitude(route, tau))
        return _scalar(np.sqrt(np.maximum(1.0 - d * d, 0.0)))

    def plus_minus_weight(self, route, tau):
        """|a_route(tau)|^2: probability that an interrupting hit yields (+-)."""
        route = np.asarray(route)
        x = self._x(tau)
        b1sq = self.state.beta2 * self.family.shape(1, x) ** 2 if np.any(route == 1) else 0.0
        a2sq = self.state.alpha2 * self.family.shape(2, x) ** 2 if np.any(route != 1) else 0.0
        return _scalar(np.where(route == 1, 1.0 - b1sq, a2sq))

    def trajectories(self, tau):
        """(a1, b1, a2, b2) magnitudes at tau."""
        b1 = np.asarray(self.doomed_amplitude(1, tau))
        a2 = np.asarray(self.doomed_amplitude(2, tau))
        a1 = np.sqrt(np.maximum(1.0 - b1 * b1, 0.0))
        b2 = np.sqrt(np.maximum(1.0 - a2 * a2, 0.0))
        return a1, b1, a2, b2

    def swapped(self) -> "RouteKinematics":
        """Mirror configuration: alpha <-> beta with the two routes' shapes exchanged."""
        return replace(self, state=self.state.swapped(), family=self.family.swapped())


def doomed_amplitude(kin: RouteKinematics, route: int, tau):
    return kin.doomed_amplitude(route, tau)


def survivor_amplitude(kin: RouteKinematics, route: int, tau):
    return kin.survivor_amplitude(route, tau)


def conditional_plus_minus_prob(kin: RouteKinematics, y):
    """P(+- | second hit at relative time y), valid only for |y| < delta_t.

    Route 1 contributes with weight |alpha|^2 and route 2 with |beta|^2.
    """
    tau = np.abs(np.asarray(y, dtype=float))
    if np.any(tau >= kin.delta_t):
        raise DomainError("|y| >= delta_t: the reduction has completed; use the Born branch")
    a2 = kin.state.alpha2
    x = tau / kin.delta_t
    b1sq = kin.state.beta2 * kin.family.shape(1, x) ** 2
    a2sq = a2 * kin.family.shape(2, x) ** 2
    return _scalar(a2 * (1.0 - b1sq) + (1.0 - a2) * a2sq)


def sample_route(state: StateAmplitudes, rng: np.random.Generator, size=None):
    """Route 1 with probability |alpha|^2, else route 2."""
    u = rng.random(size)
    out = np.where(u < state.alpha2, 1, 2)
    return int(out) if np.ndim(out) == 0 else out


def _check_route(route):
    if route not in (1, 2):
        raise DomainError(f"route must be 1 or 2, got {route!r}")


def _scalar(a):
    a = np.asarray(a)
    return a[()] if a.ndim == 0 else a
