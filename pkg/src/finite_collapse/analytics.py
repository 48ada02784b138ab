"""Coincidence probabilities, the relative-time density and outcome probabilities.

Two integration conventions exist for the coincidence band |t_L - t_R| < delta_t:

``"window"``
    Both hits are drawn from their profiles restricted and renormalized to the
    geometry window [t0, t0 + Dt].  This is the law the trial engine samples.
``"symmetric"``
    The left hit ranges over [c_L - Dt, c_L + Dt] around its own center, the
    right hit is unrestricted, nothing is renormalized.  The sech^2 closed
    form is exact for this convention.

The two agree to rounding whenever the window holds essentially all of
both profiles (the default scenario).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict, replace
from functools import lru_cache
from typing import Literal

import numpy as np
from scipy import integrate, optimize

from .collapse import EffectiveSymmetric, RouteKinematics, StateAmplitudes, exponential_shape
from .errors import ConfigurationError, DomainError, NumericalError
from .profiles import ExperimentGeometry, Shape, band_mass, interval_mass, logcosh, pdf_at

Convention = Literal["window", "symmetric"]
_LN2 = math.log(2.0)

QUAD_EPSABS = 1e-12
_EPSREL = 1e-13
# offsets (in units of sigma_t) at which the integration range is split
_SPLITS = (0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)

# Reference values quoted for the worked scenario.
QUOTED_LAMBDA = 2.0e-4
QUOTED_N = 1.0e9
QUOTED_K = 6.0


@dataclass(frozen=True)
class CoincidenceInputs:
    geometry: ExperimentGeometry
    delta_t: float
    convention: Convention = "window"

    def __post_init__(self):
        if not (self.delta_t >= 0 and math.isfinite(self.delta_t)):
            raise ConfigurationError(f"delta_t must be >= 0, got {self.delta_t!r}")
        if not self.delta_t < self.geometry.window_dt:
            raise ConfigurationError("delta_t must be smaller than window_dt")
        if self.convention not in ("window", "symmetric"):
            raise ConfigurationError(f"unknown convention {self.convention!r}")

    @property
    def left_range(self) -> tuple[float, float]:
        g = self.geometry
        if self.convention == "window":
            return g.window
        c = g.left.center
        return (c - g.window_dt, c + g.window_dt)

    @property
    def norm(self) -> float:
        if self.convention == "symmetric":
            return 1.0
        m_l, m_r = self.geometry.window_masses()
        return 1.0 / (m_l * m_r)


# ---------------------------------------------------------------- quadrature

def _breakpoints(lo, hi, centers, scale, extra=()):
    pts = {lo, hi}
    for c in centers:
        for o in _SPLITS:
            pts.add(c - o * scale)
            pts.add(c + o * scale)
    pts.update(extra)
    return sorted(p for p in pts if lo <= p <= hi)


def _quad_panels(func, points, what):
    total = 0.0
    err = 0.0
    for a, b in zip(points[:-1], points[1:]):
        if b <= a:
            continue
        res = integrate.quad(func, a, b, epsabs=0.0, epsrel=_EPSREL, limit=200, full_output=1)
        val, e = res[0], res[1]
        total += val
        err += e
        if len(res) > 3 and e > max(QUAD_EPSABS * 1e-3, 1e-10 * abs(val)):
            raise NumericalError(
                f"{what}: quadrature did not converge on [{a}, {b}]",
                {"interval": (a, b), "value": val, "error": e, "message": res[3]},
            )
    if err > max(QUAD_EPSABS, 1e-10 * abs(total)):
        raise NumericalError(f"{what}: error estimate {err:.3g} too large", {"value": total, "error": err})
    return total, err


def _logcosh1(x: float) -> float:
    ax = abs(x)
    return ax + math.log1p(math.exp(-2.0 * ax)) - _LN2


def _sech2_symmetric_integrand(c_l: float, c_r: float, s: float, d: float):
    """Scalar f_L(t) * mass_R([t - d, t + d]) for sech^2 profiles, in log space.

    Same quantity as pdf_at * band_mass, without numpy call overhead; quad
    evaluates it one point at a time.
    """
    w = 2.0 * d / s
    log_sinh_w = math.log(math.sinh(w)) if w < 20.0 else w - _LN2 + math.log1p(-math.exp(-2.0 * w))
    const = log_sinh_w - _LN2 - math.log(2.0 * s)

    def integrand(t):
        x = (t - c_l) / s
        a = (t - d - c_r) / s
        b = (t + d - c_r) / s
        return math.exp(const - 2.0 * _logcosh1(x) - _logcosh1(a) - _logcosh1(b))

    return integrand


def p_less_quadrature(inputs: CoincidenceInputs) -> float:
    """Probability that the two hits fall within delta_t of each other.

    The inner integral over the right hit is done exactly with the profile
    CDF, leaving one adaptive quadrature over the left hit time.
    """
    d = inputs.delta_t
    if d == 0.0:
        return 0.0
    g = inputs.geometry
    left, right = g.left, g.right
    lo, hi = inputs.left_range

    if inputs.convention == "symmetric" and g.base.shape is Shape.SECH2:
        integrand = _sech2_symmetric_integrand(left.center, right.center, g.base.sigma_t, d)
        extra = ()
    elif inputs.convention == "symmetric":
        def integrand(t):
            return pdf_at(left, t) * band_mass(right, t, d)
        extra = ()
    else:
        wlo, whi = g.window

        def integrand(t):
            if wlo + d <= t <= whi - d:
                m = band_mass(right, t, d)
            else:
                m = interval_mass(right, max(t - d, wlo), min(t + d, whi))
            return pdf_at(left, t) * m
        extra = (wlo + d, whi - d)

    pts = _breakpoints(lo, hi, (left.center, right.center), g.base.sigma_t, extra)
    val, _ = _quad_panels(integrand, pts, "p_less_quadrature")
    return float(val * inputs.norm)


def _density_limits(inputs: CoincidenceInputs, y):
    lo, hi = inputs.left_range
    if inputs.convention == "symmetric":
        a = np.full_like(y, lo)
        b = np.full_like(y, hi)
    else:
        # right hit t - y must also stay in the window
        a = np.maximum(lo, lo + y)
        b = np.minimum(hi, hi + y)
    return a, b


def relative_time_density(inputs: CoincidenceInputs, y, mode: Literal["exact", "approx"] = "exact"):
    """Density of y = t_L - t_R.

    ``exact`` integrates f_L(t) f_R(t - y) adaptively (all y at once);
    ``approx`` is the small-delay closed form tanh(Dt/s) sech^2((T + y)/s) / (2 s).
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    g = inputs.geometry
    s = g.base.sigma_t
    if mode == "approx":
        if g.base.shape is not Shape.SECH2:
            raise DomainError("approximate density is defined for the sech2 profile only")
        D = g.window_dt / s
        out = math.tanh(D) * np.exp(-2.0 * logcosh((g.delay_T + y) / s)) / (2.0 * s)
        return out[0] if out.size == 1 else out
    if mode != "exact":
        raise DomainError(f"unknown mode {mode!r}")

    left, right = g.left, g.right
    a, b = _density_limits(inputs, y)
    width = b - a
    if np.any(width <= 0):
        raise DomainError("|y| exceeds the window")
    # integrate over u in [0, 1] with t = a + (b - a) u, splitting at the
    # sigma-scale structure seen from the y = 0 mapping
    lo, hi = inputs.left_range
    pts_t = _breakpoints(lo, hi, (left.center, right.center), s)
    pts_u = sorted({min(max((p - lo) / (hi - lo), 0.0), 1.0) for p in pts_t} - {0.0, 1.0})

    def f(u):
        t = a + width * u
        return pdf_at(left, t) * pdf_at(right, t - y) * width

    val, err = integrate.quad_vec(
        f, 0.0, 1.0, epsabs=1e-300, epsrel=_EPSREL, norm="max", points=pts_u or None, limit=20000
    )
    scale = float(np.max(np.abs(val))) if val.size else 0.0
    if err > max(1e-10 * scale, 1e-300):
        raise NumericalError("relative_time_density: quadrature error too large", {"error": err, "scale": scale})
    out = val * inputs.norm
    return out[0] if out.size == 1 else out


# ------------------------------------------------------------- band measure

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class BandMeasure:
    """Discretization of p(y) dy on |y| < delta_t, folded onto tau = |y|.

    ``weights[j]`` already contains p(tau_j) + p(-tau_j); integrating any
    function of tau against the density is then a dot product.
    """

    tau: np.ndarray
    weights: np.ndarray
    delta_t: float

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


def _band_edges(d: float, s: float) -> np.ndarray:
    n_uniform = int(min(max(8, math.ceil(4.0 * d / s)), 256))
    fr = {0.0, 1.0}
    fr.update(np.linspace(0.0, 1.0, n_uniform + 1).tolist())
    for k in range(1, 24):
        fr.add(2.0 ** -k)
        fr.add(1.0 - 2.0 ** -k)
    return np.array(sorted(fr)) * d


@lru_cache(maxsize=64)
def band_measure(inputs: CoincidenceInputs) -> BandMeasure:
    d = inputs.delta_t
    if d == 0.0:
        return BandMeasure(np.zeros(0), np.zeros(0), 0.0)
    edges = _band_edges(d, inputs.geometry.base.sigma_t)
    a, b = edges[:-1, None], edges[1:, None]
    tau = (0.5 * (b - a) * _GL_NODES + 0.5 * (b + a)).ravel()
    w = (0.5 * (b - a) * _GL_WEIGHTS).ravel()
    dens = relative_time_density(inputs, np.concatenate([tau, -tau]))
    dens = np.atleast_1d(dens)
    n = tau.size
    return BandMeasure(tau, w * (dens[:n] + dens[n:]), d)


# --------------------------------------------------------------- closed form

def _atanh_minus_x(x: float) -> float:
    # atanh(x) - x without cancellation for small |x|
    if abs(x) < 0.5:
        x2 = x * x
        term = x * x2
        total = 0.0
        k = 3
        while True:
            add = term / k
            total += add
            if abs(add) <= 1e-18 * abs(total):
                break
            term *= x2
            k += 2
        return total
    return math.atanh(x) - x


def _big_arg_parts(A: float, D: float, T: float) -> float:
    """G(A) + 2 T sign(A) for |A| >= 1/2, free of overflow."""
    a = abs(A)
    sgn = 1.0 if A > 0 else -1.0
    e = math.exp(-2.0 * a)
    om = -math.expm1(-2.0 * a)
    csch2 = 4.0 * e / (om * om)
    coth_minus_sign = sgn * 2.0 * e / om
    # ln cosh(A + D) - ln cosh(A - D), with the linear parts cancelled exactly
    L = (2.0 * sgn * min(a, D)
         + math.log1p(math.exp(-2.0 * abs(A + D)))
         - math.log1p(math.exp(-2.0 * abs(A - D))))
    return csch2 * L - 2.0 * T * coth_minus_sign


def _g_small(A: float, T: float) -> float:
    if A == 0.0:
        return 0.0
    th = math.tanh(A)
    x = T * th
    sh = math.sinh(A)
    return 2.0 * _atanh_minus_x(x) / (sh * sh) - 2.0 * T * th


def sech2_band_kernel(A: float, D: float) -> float:
    """G(A) = csch^2(A) ln[cosh(A + D)/cosh(A - D)] - 2 coth(A) tanh(D).

    Equals the integral of sech^2(x) tanh(x - A) over [-D, D].  Finite at A = 0
    (G(0) = 0) and odd in A.
    """
    T = math.tanh(D)
    if abs(A) < 0.5:
        return _g_small(A, T)
    return _big_arg_parts(A, D, T) - 2.0 * T * (1.0 if A > 0 else -1.0)


def p_less_closed_form(sigma_t: float, T: float, window_dt: float, delta_t: float) -> float:
    """Closed-form coincidence probability for sech^2 pulses.

    P = 1/4 * sum_n (-1)^n G(A_n), A_n = [T + (-1)^(n+1) delta_t] / sigma_t.

    Evaluated in a rearranged form that is stable at A_n -> 0 and for large
    |A_n|, where the two terms nearly cancel.
    """
    if not sigma_t > 0 or not window_dt > 0 or delta_t < 0:
        raise DomainError("need sigma_t > 0, window_dt > 0, delta_t >= 0")
    if delta_t == 0.0:
        return 0.0
    D = window_dt / sigma_t
    A0 = (T - delta_t) / sigma_t
    A1 = (T + delta_t) / sigma_t
    tD = math.tanh(D)
    if abs(A0) >= 0.5 and abs(A1) >= 0.5 and (A0 > 0) == (A1 > 0):
        # same-sign large arguments: the constant -2 T sign(A) parts cancel
        diff = _big_arg_parts(A0, D, tD) - _big_arg_parts(A1, D, tD)
    else:
        diff = sech2_band_kernel(A0, D) - sech2_band_kernel(A1, D)
    return 0.25 * diff


def p_less_approx(sigma_t: float, T: float, window_dt: float, delta_t: float) -> float:
    """Small-delay form 1/2 tanh(Dt/s) [tanh((T + dt)/s) - tanh((T - dt)/s)]."""
    if delta_t == 0.0:
        return 0.0
    a1 = (T + delta_t) / sigma_t
    a0 = (T - delta_t) / sigma_t
    # tanh(a1) - tanh(a0) = sinh(a1 - a0) / (cosh a1 cosh a0)
    diff = math.exp(math.log(math.sinh(2.0 * delta_t / sigma_t)) - logcosh(a1) - logcosh(a0)) \
        if 2.0 * delta_t / sigma_t < 700 else math.tanh(a1) - math.tanh(a0)
    return 0.5 * math.tanh(window_dt / sigma_t) * diff


# --------------------------------------------------- outcome probabilities

@dataclass(frozen=True)
class LambdaGamma:
    lam: float
    gamma: float
    lam_cond: float
    gamma_cond: float


def _check_match(kin: RouteKinematics, inputs: CoincidenceInputs):
    if kin.delta_t != inputs.delta_t:
        raise ConfigurationError("kinematics and coincidence inputs disagree on delta_t")


def _route_weights(kin: RouteKinematics, m: BandMeasure):
    x = m.tau / kin.delta_t
    s1 = kin.family.shape(1, x)
    s2 = kin.family.shape(2, x)
    return s1 * s1, s2 * s2


def lambda_gamma(kin: RouteKinematics, inputs: CoincidenceInputs) -> LambdaGamma:
    """Lambda = int |a2|^2 p, Gamma = int |a1|^2 p - Lambda over |y| < delta_t,
    plus both divided by P_<."""
    _check_match(kin, inputs)
    if kin.delta_t == 0.0:
        return LambdaGamma(0.0, 0.0, 0.0, 0.0)
    st = kin.state
    m = band_measure(inputs)
    s1sq, s2sq = _route_weights(kin, m)
    lam = st.alpha2 * m.integrate(s2sq)
    a1_int = m.integrate(1.0 - st.beta2 * s1sq)
    gamma = a1_int - lam
    p = p_less_quadrature(inputs)
    bound = st.alpha2 * p
    if lam > bound * (1.0 + 1e-9) + 1e-300:
        raise NumericalError(
            "Lambda exceeds |alpha|^2 P_< for a monotone doomed amplitude",
            {"lambda": lam, "bound": bound},
        )
    if p == 0.0:
        return LambdaGamma(lam, gamma, 0.0, 0.0)
    return LambdaGamma(lam, gamma, lam / p, gamma / p)


def p_plus_minus_exact(kin: RouteKinematics, inputs: CoincidenceInputs) -> float:
    """(1 - P_<)|a|^2 + int [|a|^2 |a1|^2 + |b|^2 |a2|^2] p dy, no symmetry assumed.

    Computed as |a|^2 plus the integral of the deviation from |a|^2, which is
    |a|^2 |b|^2 (s2^2 - s1^2) pointwise.
    """
    _check_match(kin, inputs)
    st = kin.state
    if kin.delta_t == 0.0:
        return st.alpha2
    m = band_measure(inputs)
    s1sq, s2sq = _route_weights(kin, m)
    return st.alpha2 + st.alpha2 * st.beta2 * m.integrate(s2sq - s1sq)


def p_minus_plus_exact(kin: RouteKinematics, inputs: CoincidenceInputs) -> float:
    _check_match(kin, inputs)
    st = kin.state
    if kin.delta_t == 0.0:
        return st.beta2
    m = band_measure(inputs)
    s1sq, s2sq = _route_weights(kin, m)
    return st.beta2 - st.alpha2 * st.beta2 * m.integrate(s2sq - s1sq)


def p_plus_minus_symmetric(state: StateAmplitudes, lambda_cond: float, p_less: float) -> float:
    """|a|^2 + (1 - 2|a|^2) Lambda_cond P_< (symmetry constraint imposed)."""
    if not (-1e-12 <= lambda_cond <= state.alpha2 + 1e-12):
        raise DomainError(f"conditional Lambda must lie in [0, |alpha|^2], got {lambda_cond!r}")
    return state.alpha2 + (1.0 - 2.0 * state.alpha2) * lambda_cond * p_less


def symmetry_residual(kin: RouteKinematics, inputs: CoincidenceInputs) -> float:
    """Gamma_cond - (1 - 2 Lambda_cond); zero when the left-right symmetry holds."""
    if kin.delta_t == 0.0:
        raise DomainError("symmetry residual needs delta_t > 0")
    lg = lambda_gamma(kin, inputs)
    return lg.gamma_cond - (1.0 - 2.0 * lg.lam_cond)


def resolve_kinematics(kin: RouteKinematics, inputs: CoincidenceInputs) -> RouteKinematics:
    """Fix the route-1 rate of an EffectiveSymmetric family.

    Chooses b1 = beta s(tau; rate1) with int |b1|^2 p = int |a2|^2 p, which is
    the symmetry constraint Gamma_cond = 1 - 2 Lambda_cond.  Other families
    are returned unchanged.
    """
    fam = kin.family
    if not isinstance(fam, EffectiveSymmetric) or fam.resolved or kin.delta_t == 0.0:
        return kin
    _check_match(kin, inputs)
    st = kin.state
    m = band_measure(inputs)
    x = m.tau / kin.delta_t
    s2 = exponential_shape(x, fam.rate2)
    target = st.alpha2 * m.integrate(s2 * s2) / st.beta2

    def h(k):
        s = exponential_shape(x, k)
        return m.integrate(s * s) - target

    lo, hi = -700.0, 700.0
    if h(lo) < 0.0:
        raise ConfigurationError(
            "symmetry constraint unattainable with a monotone route-1 decay "
            f"(needs Lambda_cond <= |beta|^2; target mass {target:.6g} vs band mass {m.mass:.6g})"
        )
    if h(hi) > 0.0:
        rate1 = hi
    else:
        rate1 = optimize.brentq(h, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=500)
    return replace(kin, family=replace(fam, rate1=float(rate1)))


# -------------------------------------------------------------------- report

@dataclass(frozen=True)
class AnalyticsReport:
    p_less: float
    p_less_closed: float | None
    p_less_approx: float | None
    lambda_uncond: float
    gamma_uncond: float
    lambda_cond: float
    gamma_cond: float
    p_plus_minus_exact: float
    p_minus_plus_exact: float
    p_plus_minus_symmetric: float
    symmetry_residual: float
    delta_n_per_trial: float
    route1_rate: float | None
    lambda_bound: float
    lambda_quoted: float
    lambda_for_quoted_significance: float | None
    lambda_discrepancy: bool
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["notes"] = list(self.notes)
        return d


def analyze(kin: RouteKinematics, geometry: ExperimentGeometry, convention: Convention = "window") -> tuple[AnalyticsReport, RouteKinematics]:
    """Full analytics chain for one configuration.

    Returns the report and the kinematics actually used (symmetric family
    resolved against this geometry).
    """
    inputs = CoincidenceInputs(geometry, kin.delta_t, convention)
    st = kin.state
    base = geometry.base
    p = p_less_quadrature(inputs)
    closed = approx = None
    if base.shape is Shape.SECH2:
        closed = p_less_closed_form(base.sigma_t, geometry.delay_T, geometry.window_dt, kin.delta_t)
        approx = p_less_approx(base.sigma_t, geometry.delay_T, geometry.window_dt, kin.delta_t)
    notes = []
    if kin.delta_t == 0.0:
        lg = LambdaGamma(0.0, 0.0, 0.0, 0.0)
        resolved = kin
        exact, exact_mp = st.alpha2, st.beta2
        resid = 0.0
    else:
        resolved = resolve_kinematics(kin, inputs)
        lg = lambda_gamma(resolved, inputs)
        exact = p_plus_minus_exact(resolved, inputs)
        exact_mp = p_minus_plus_exact(resolved, inputs)
        resid = lg.gamma_cond - (1.0 - 2.0 * lg.lam_cond)
    sym = p_plus_minus_symmetric(st, lg.lam_cond, p)
    bias = 2.0 * st.alpha2 - 1.0
    bound = st.alpha2 * p
    need = QUOTED_K / (2.0 * abs(bias) * math.sqrt(QUOTED_N)) if bias != 0.0 else None
    discrepancy = QUOTED_LAMBDA > bound
    if discrepancy:
        notes.append(
            f"quoted Lambda {QUOTED_LAMBDA:.2g} exceeds the bound |alpha|^2 P_< = {bound:.3g}; "
            "the quoted value is not reachable in unconditional normalization"
        )
    if closed is not None and approx is not None and closed > 0:
        rel = approx / closed - 1.0
        if abs(rel) > 0.01:
            notes.append(f"small-delay approximation differs from the closed form by {rel:+.3%}")
    fam = resolved.family
    rate1 = getattr(fam, "rate1", None)
    report = AnalyticsReport(
        p_less=p,
        p_less_closed=closed,
        p_less_approx=approx,
        lambda_uncond=lg.lam,
        gamma_uncond=lg.gamma,
        lambda_cond=lg.lam_cond,
        gamma_cond=lg.gamma_cond,
        p_plus_minus_exact=exact,
        p_minus_plus_exact=exact_mp,
        p_plus_minus_symmetric=sym,
        symmetry_residual=resid,
        delta_n_per_trial=2.0 * lg.lam * bias,
        route1_rate=rate1 if isinstance(fam, EffectiveSymmetric) else None,
        lambda_bound=bound,
        lambda_quoted=QUOTED_LAMBDA,
        lambda_for_quoted_significance=need,
        lambda_discrepancy=discrepancy,
        notes=tuple(notes),
    )
    return report, resolved
