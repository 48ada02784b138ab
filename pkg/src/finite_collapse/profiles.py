"""Temporal pulse profiles used as hit-time probability densities.

All times are in femtoseconds.  A profile is an even density around its
center; the sech^2 shape is the physical one, the Gaussian exists so that
conclusions can be checked against a second shape.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy import special

from .errors import ConfigurationError, DomainError

_LN2 = math.log(2.0)
# Uniform draws are clamped to [eps, 1 - eps] before inversion.
UNIFORM_EPS = 1e-15
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


class Shape(str, Enum):
    SECH2 = "sech2"
    GAUSSIAN = "gaussian"


def logcosh(x):
    """log(cosh(x)) without overflow."""
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - _LN2


def _logsinh(x):
    # x > 0
    x = np.asarray(x, dtype=float)
    small = x < 20.0
    with np.errstate(over="ignore", divide="ignore"):
        direct = np.log(np.sinh(np.where(small, x, 1.0)))
    big = x - _LN2 + np.log1p(-np.exp(-2.0 * np.where(small, 20.0, x)))
    return np.where(small, direct, big)


@dataclass(frozen=True)
class PulseProfile:
    shape: Shape = Shape.SECH2
    sigma_t: float = 1000.0
    center: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "shape", Shape(self.shape))
        if not (self.sigma_t > 0 and math.isfinite(self.sigma_t)):
            raise ConfigurationError(f"sigma_t must be positive, got {self.sigma_t!r}")
        if not math.isfinite(self.center):
            raise ConfigurationError("profile center must be finite")

    def shifted(self, delay: float) -> "PulseProfile":
        return replace(self, center=self.center + delay)

    def pdf(self, t):
        return pdf_at(self, t)

    def cdf(self, t):
        return cdf_at(self, t)

    def quantile(self, u):
        return quantile(self, u)


def pdf_at(profile: PulseProfile, t):
    x = (np.asarray(t, dtype=float) - profile.center) / profile.sigma_t
    if profile.shape is Shape.SECH2:
        # sech^2(x) = exp(-2 logcosh(x)) keeps the tails finite
        out = np.exp(-2.0 * logcosh(x)) / (2.0 * profile.sigma_t)
    else:
        out = np.exp(-0.5 * x * x) / (math.sqrt(2.0 * math.pi) * profile.sigma_t)
    return out[()] if out.ndim == 0 else out


def cdf_at(profile: PulseProfile, t):
    x = (np.asarray(t, dtype=float) - profile.center) / profile.sigma_t
    if profile.shape is Shape.SECH2:
        # (1 + tanh x) / 2 in logistic form, exact in the lower tail
        out = special.expit(2.0 * x)
    else:
        out = special.ndtr(x)
    return out[()] if out.ndim == 0 else out


def _norm_quantile(profile: PulseProfile, u):
    if profile.shape is Shape.SECH2:
        # atanh(2u - 1) == logit(u) / 2; the logit form keeps the lower tail exact
        return 0.5 * special.logit(u)
    return special.ndtri(u)


def quantile(profile: PulseProfile, u):
    """Inverse CDF.  Raises DomainError unless every u lies in (0, 1)."""
    u = np.asarray(u, dtype=float)
    if np.any(~((u > 0.0) & (u < 1.0))):
        raise DomainError("quantile requires 0 < u < 1")
    out = profile.center + profile.sigma_t * _norm_quantile(profile, u)
    return out[()] if out.ndim == 0 else out


def interval_mass(profile: PulseProfile, lo, hi):
    """Probability mass of [lo, hi] (lo <= hi), accurate for narrow intervals."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    return band_mass(profile, 0.5 * (lo + hi), 0.5 * (hi - lo))


def band_mass(profile: PulseProfile, mid, half):
    """Mass of [mid - half, mid + half] without subtracting nearby CDF values."""
    s = profile.sigma_t
    mid = np.asarray(mid, dtype=float)
    half = np.asarray(half, dtype=float)
    a = (mid - half - profile.center) / s
    b = (mid + half - profile.center) / s
    if profile.shape is Shape.SECH2:
        # narrow: tanh(b) - tanh(a) = sinh(b - a) / (cosh a cosh b), in log space
        w = 2.0 * half / s
        with np.errstate(divide="ignore"):
            logm = _logsinh(np.where(w > 0, w, 1.0)) - logcosh(a) - logcosh(b) - _LN2
        narrow = np.where(w > 0, np.exp(logm), 0.0)
        # wide: differences of tail masses, or one minus both tails
        wide = np.where(
            a >= 0.0,
            special.expit(-2.0 * a) - special.expit(-2.0 * b),
            np.where(b <= 0.0, special.expit(2.0 * b) - special.expit(2.0 * a),
                     1.0 - special.expit(2.0 * a) - special.expit(-2.0 * b)),
        )
        out = np.where(w < 1.0, narrow, wide)
    else:
        m = (mid - profile.center) / s
        h = half / s
        a, b, m, h = np.broadcast_arrays(a, b, m, h)
        upper = a > 0.0
        # wide bands: difference of CDFs taken in the tail that keeps it small
        out = np.where(
            upper,
            special.ndtr(-a) - special.ndtr(-b),
            special.ndtr(b) - special.ndtr(a),
        )
        narrow = h <= 0.5
        if np.any(narrow):
            # narrow bands: Gauss-Legendre on the density around the midpoint
            mn, hn = m[narrow][..., None], h[narrow]
            x = mn + hn[..., None] * _GL_X
            dens = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
            out = np.array(out, dtype=float)
            out[narrow] = hn * (dens @ _GL_W)
        out = np.maximum(out, 0.0)
    return out[()] if out.ndim == 0 else out


def truncated_quantile(profile: PulseProfile, u, lo: float, hi: float):
    """Map uniforms u in [0, 1) to draws from the profile restricted to [lo, hi].

    The uniform is rescaled into [F(lo), F(hi)] and inverted.  Draws are
    clipped to the window to absorb rounding at the boundaries.
    """
    u = np.clip(np.asarray(u, dtype=float), UNIFORM_EPS, 1.0 - UNIFORM_EPS)
    f_lo = float(cdf_at(profile, lo))
    f_hi = float(cdf_at(profile, hi))
    if f_hi - f_lo < 1e-12 and float(interval_mass(profile, lo, hi)) < 1e-12:
        raise ConfigurationError("sampling window holds negligible profile mass")
    if f_lo == 0.0 and f_hi == 1.0:
        v = u
    else:
        v = f_lo + u * (f_hi - f_lo)
        v = np.clip(v, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
    if profile.shape is Shape.SECH2:
        # hot path of the trial engine: logit / 2 written out, several times
        # cheaper than special.logit; 1 - v is exact for v >= 1/2
        z = 0.5 * np.log(v / (1.0 - v))
    else:
        z = special.ndtri(v)
    t = profile.center + profile.sigma_t * z
    return np.clip(t, lo, hi)


def sample_hit_time(profile: PulseProfile, window: tuple[float, float], rng: np.random.Generator, size=None):
    """Draw hit times from the profile renormalized on window = (lo, hi)."""
    lo, hi = window
    if not hi > lo:
        raise ConfigurationError("window must have positive width")
    u = rng.random(size)
    out = truncated_quantile(profile, u, lo, hi)
    return out[()] if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ExperimentGeometry:
    """Left/right hit laws.  The right photon trails the left one by delay_T."""

    base: PulseProfile = PulseProfile()
    delay_T: float = 3.3
    window_dt: float = 1.0e6
    window_origin: float | None = None

    def __post_init__(self) -> None:
        if not (self.window_dt > 0 and math.isfinite(self.window_dt)):
            raise ConfigurationError(f"window_dt must be positive, got {self.window_dt!r}")
        if not math.isfinite(self.delay_T):
            raise ConfigurationError("delay_T must be finite")
        if self.window_origin is None:
            # window centered on the midpoint between the two pulse centers
            mid = self.base.center + 0.5 * self.delay_T
            object.__setattr__(self, "window_origin", mid - 0.5 * self.window_dt)

    @property
    def left(self) -> PulseProfile:
        return self.base

    @property
    def right(self) -> PulseProfile:
        return self.base.shifted(self.delay_T)

    @property
    def window(self) -> tuple[float, float]:
        return (self.window_origin, self.window_origin + self.window_dt)

    def window_masses(self) -> tuple[float, float]:
        lo, hi = self.window
        return (float(interval_mass(self.left, lo, hi)), float(interval_mass(self.right, lo, hi)))
