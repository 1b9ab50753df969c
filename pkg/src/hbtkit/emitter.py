"""Analytic photophysics of a three-level emitter with a shelving state.

States are 1 (ground), 2 (excited) and 3 (shelving).  Transitions are
1->2 (pump), 2->1 (radiative), 2->3 (intersystem crossing) and 3->1
(non-radiative deshelving).  Times are in ns and rates in 1/ns throughout;
count rates (counts/s) and powers (mW) only appear at function boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, erfcx

from .errors import (
    DegenerateCoefficientsError,
    DiscriminantError,
    HbtError,
    InfeasibleRatesError,
)

_SQRT2 = math.sqrt(2.0)


def _relaxation_terms(r12, r21, r23, r31, exact=True):
    A = r12 + r21 + r23 + r31
    B = r12 * r23 + r12 * r31 + r21 * r31
    if exact:
        # sum of principal 2x2 minors of the generator
        B += r23 * r31
    return A, B


@dataclass(frozen=True)
class TransitionRates:
    """Rates of the three-level system in 1/ns."""

    r12: float
    r21: float
    r23: float
    r31: float

    def __post_init__(self):
        vals = (self.r12, self.r21, self.r23, self.r31)
        if not all(math.isfinite(v) and v >= 0 for v in vals):
            raise HbtError(f"rates must be finite and non-negative, got {vals}")
        if self.r21 <= 0:
            raise HbtError("r21 must be positive")
        A, B = _relaxation_terms(*vals)
        if A * A - 4 * B < -1e-12 * A * A:
            raise DiscriminantError(
                f"A^2 - 4B = {A * A - 4 * B:.3g} < 0; relaxation is oscillatory"
            )

    def as_tuple(self):
        return (self.r12, self.r21, self.r23, self.r31)


@dataclass(frozen=True)
class G2Coefficients:
    """Parameters of the double-exponential g2: tau1, tau2 in ns, a dimensionless."""

    tau1: float
    tau2: float
    a: float

    def __post_init__(self):
        if not (self.tau1 > 0 and self.tau2 > 0):
            raise HbtError("tau1 and tau2 must be positive")
        if self.tau1 > self.tau2:
            raise HbtError(f"tau1 ({self.tau1}) must not exceed tau2 ({self.tau2})")
        if not math.isfinite(self.a):
            raise HbtError("a must be finite")


@dataclass(frozen=True)
class DeviceResponse:
    """Gaussian timing jitter of the detector pair; ``w`` is the half 1/sqrt(e) width in ns."""

    w: float = 0.0

    def __post_init__(self):
        if not (self.w >= 0 and math.isfinite(self.w)):
            raise HbtError("device response width must be >= 0")


@dataclass(frozen=True)
class SaturationModel:
    r_inf: float  # counts/s
    p_sat: float  # mW

    def __post_init__(self):
        if not (self.r_inf > 0 and self.p_sat > 0):
            raise HbtError("r_inf and p_sat must be positive")


@dataclass(frozen=True)
class PolarizationModel:
    """Excitation-polarization response; ``theta0`` is folded into [0, 180) degrees."""

    i_max: float
    i_min: float
    theta0: float = 0.0

    def __post_init__(self):
        if not (self.i_max >= self.i_min >= 0):
            raise HbtError("need i_max >= i_min >= 0")
        object.__setattr__(self, "theta0", float(self.theta0) % 180.0)


@dataclass(frozen=True)
class DetectionChain:
    eta: float

    def __post_init__(self):
        if not (0 < self.eta <= 1):
            raise HbtError("eta must lie in (0, 1]")


def derive_coefficients(rates: TransitionRates, exact: bool = True) -> G2Coefficients:
    """Map transition rates to (tau1, tau2, a).

    ``exact=True`` uses the full characteristic polynomial of the rate
    matrix, B = r12 r23 + r12 r31 + r21 r31 + r23 r31, which makes the
    result agree with a stochastic simulation of the same rates.
    ``exact=False`` drops the r23 r31 term, an approximation valid when
    r23 r31 is small against the other products.
    """
    r12, r21, r23, r31 = rates.as_tuple()
    A, B = _relaxation_terms(r12, r21, r23, r31, exact)
    disc = A * A - 4 * B
    if disc < -1e-12 * A * A:
        raise DiscriminantError(f"A^2 - 4B = {disc:.3g} < 0")
    root = math.sqrt(max(disc, 0.0))
    if r31 == 0 or root == 0:
        raise DegenerateCoefficientsError(
            "r31 = 0 or tau1 = tau2; the bunching amplitude is undefined"
        )
    tau1 = 2.0 / (A + root)
    # 2/(A - root) loses precision when B << A^2; use tau1 * tau2 = 1/B
    tau2 = 1.0 / (B * tau1)
    a = (1.0 - r31 * tau2) / (r31 * (tau2 - tau1))
    return G2Coefficients(tau1, tau2, a)


def rates_from_coefficients(
    coeffs: G2Coefficients, r12: float, exact: bool = True
) -> TransitionRates:
    """Invert :func:`derive_coefficients` for a chosen pump rate ``r12``.

    Three observables cannot fix four rates, so the pump rate is supplied.
    """
    if not r12 > 0:
        raise InfeasibleRatesError("pump rate r12 must be positive")
    t1, t2, a = coeffs.tau1, coeffs.tau2, coeffs.a
    lam1, lam2 = 1.0 / t1, 1.0 / t2
    denom = t2 + a * (t2 - t1)
    if not denom > 0:
        raise InfeasibleRatesError("coefficients imply a non-positive deshelving rate")
    r31 = 1.0 / denom
    # (lam1 - r31)(lam2 - r31) = B - r31 (A - r31) without cancellation
    prod = (lam1 - r31) * (lam2 - r31)
    if exact:
        r23 = prod / r12
    else:
        if math.isclose(r12, r31, rel_tol=1e-12):
            raise InfeasibleRatesError(
                "r12 == r31 leaves r21 and r23 undetermined in the approximate model"
            )
        r23 = prod / (r12 - r31)
    r21 = lam1 + lam2 - r31 - r12 - r23
    if r23 < 0 and r23 > -1e-12 * (lam1 + lam2):
        r23 = 0.0
    if r23 < 0 or not r21 > 0:
        raise InfeasibleRatesError(
            f"no non-negative solution for r12={r12}: r21={r21:.4g}, r23={r23:.4g}"
        )
    try:
        return TransitionRates(r12, r21, r23, r31)
    except HbtError as exc:
        raise InfeasibleRatesError(str(exc)) from exc


def g2_ideal(coeffs: G2Coefficients, tau):
    """Detector-free g2(tau) = 1 - (1+a) exp(-|tau|/tau1) + a exp(-|tau|/tau2)."""
    t = np.abs(np.asarray(tau, dtype=float))
    a = coeffs.a
    return 1.0 - (1.0 + a) * np.exp(-t / coeffs.tau1) + a * np.exp(-t / coeffs.tau2)


def _one_sided(s, t, w):
    # exp(w^2/2t^2 - s/t) * erfc((w/t - s/w)/sqrt2), overflow-safe in both regimes
    x = (w / t - s / w) / _SQRT2
    pos = x >= 0
    out = np.empty_like(s)
    out[pos] = np.exp(-s[pos] ** 2 / (2 * w * w)) * erfcx(x[pos])
    neg = ~pos
    out[neg] = np.exp(w * w / (2 * t * t) - s[neg] / t) * erfc(x[neg])
    return out


def smeared_exponential(tau, t, w):
    """Gaussian (std ``w``) convolution of exp(-|tau|/t)."""
    s = np.atleast_1d(np.asarray(tau, dtype=float))
    if w == 0:
        out = np.exp(-np.abs(s) / t)
    else:
        out = 0.5 * (_one_sided(s, t, w) + _one_sided(-s, t, w))
    return out.reshape(np.shape(tau))


def smeared_exponential_dt(tau, t, w):
    """Derivative of :func:`smeared_exponential` with respect to ``t``."""
    s = np.atleast_1d(np.asarray(tau, dtype=float))
    if w == 0:
        out = np.abs(s) / t**2 * np.exp(-np.abs(s) / t)
    else:
        gauss = math.sqrt(2 / math.pi) * w / t**2 * np.exp(-s * s / (2 * w * w))
        out = 0.5 * (
            _one_sided(s, t, w) * (s - w * w / t) / t**2
            + _one_sided(-s, t, w) * (-s - w * w / t) / t**2
        ) + gauss
    return out.reshape(np.shape(tau))


def g2_convolved(coeffs: G2Coefficients, drf: DeviceResponse, tau):
    """g2 as recorded through a Gaussian timing jitter of width ``drf.w``.

    Evaluated in closed form: each two-sided exponential convolved with the
    Gaussian becomes a pair of scaled complementary error functions.
    """
    w = drf.w if isinstance(drf, DeviceResponse) else float(drf)
    if w == 0:
        return g2_ideal(coeffs, tau)
    a = coeffs.a
    return (
        1.0
        - (1.0 + a) * smeared_exponential(tau, coeffs.tau1, w)
        + a * smeared_exponential(tau, coeffs.tau2, w)
    )


def g2_convolved_jacobian(coeffs: G2Coefficients, w, tau):
    """Columns d/d(tau1, tau2, a) of :func:`g2_convolved`, shape (len(tau), 3)."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    a = coeffs.a
    h1 = smeared_exponential(tau, coeffs.tau1, w)
    h2 = smeared_exponential(tau, coeffs.tau2, w)
    return np.column_stack(
        [
            -(1.0 + a) * smeared_exponential_dt(tau, coeffs.tau1, w),
            a * smeared_exponential_dt(tau, coeffs.tau2, w),
            h2 - h1,
        ]
    )


def rate_matrix(rates: TransitionRates):
    """Generator Q with dp/dt = p @ Q for row-vector populations (p1, p2, p3)."""
    r12, r21, r23, r31 = rates.as_tuple()
    return np.array(
        [
            [-r12, r12, 0.0],
            [r21, -(r21 + r23), r23],
            [r31, 0.0, -r31],
        ]
    )


def steady_state_populations(rates: TransitionRates):
    r12, r21, r23, r31 = rates.as_tuple()
    if r12 == 0:
        return (1.0, 0.0, 0.0)
    if r23 == 0:
        # shelving state decoupled
        return (r21 / (r12 + r21), r12 / (r12 + r21), 0.0)
    if r31 == 0:
        return (0.0, 0.0, 1.0)
    w1 = (r21 + r23) * r31
    w2 = r12 * r31
    w3 = r12 * r23
    total = w1 + w2 + w3
    return (w1 / total, w2 / total, w3 / total)


def mean_count_rate(rates: TransitionRates, chain: DetectionChain) -> float:
    """Detected photon rate in counts/s."""
    p2 = steady_state_populations(rates)[1]
    return chain.eta * rates.r21 * p2 * 1e9


def saturation_rate(p, model: SaturationModel):
    p = np.asarray(p, dtype=float)
    return model.r_inf * p / (p + model.p_sat)


def corrected_lifetime(tau1, p, p_sat):
    """Excited-state lifetime from the antibunching time at pump power ``p``."""
    return tau1 * (1.0 + p / p_sat)


def saturation_intensity(p_sat, focus_half_width):
    """Peak intensity in kW/cm^2 for ``p_sat`` in mW and a focus width in nm.

    The focus is treated as a Gaussian intensity profile whose half
    1/sqrt(e) width is ``focus_half_width``, so the peak intensity is
    P / (2 pi w^2).
    """
    if not (p_sat > 0 and focus_half_width > 0):
        raise HbtError("p_sat and focus width must be positive")
    # mW / nm^2 -> kW / cm^2 is a factor 1e8
    return p_sat / (2 * math.pi * focus_half_width**2) * 1e8


def polarization_intensity(theta, model: PolarizationModel):
    theta = np.asarray(theta, dtype=float)
    c = np.cos(np.deg2rad(theta - model.theta0))
    return model.i_min + (model.i_max - model.i_min) * c * c


def visibility(i_max, i_min):
    if i_max + i_min == 0:
        raise HbtError("visibility undefined for i_max + i_min = 0")
    if not (i_max >= i_min >= 0):
        raise HbtError("need i_max >= i_min >= 0")
    return (i_max - i_min) / (i_max + i_min)
