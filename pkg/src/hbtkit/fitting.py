"""Fits of g2 histograms, saturation curves, polarization series and spectra."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks, peak_widths

from .correlate import CorrelationHistogram, Stage
from .emitter import (
    G2Coefficients,
    corrected_lifetime,
    g2_convolved,
    smeared_exponential,
    smeared_exponential_dt,
)
from .errors import FitDataError, HbtError
from .lm import FitResult, nlls_minimize

_TINY = 1e-9


@dataclass(frozen=True, eq=False)
class Series:
    """Sampled (x, y, sigma) data such as count rate vs power or angle."""

    x: np.ndarray
    y: np.ndarray
    sigma: np.ndarray
    kind: str = "series"

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        s = np.broadcast_to(np.asarray(self.sigma, dtype=float), y.shape).copy()
        if not (x.shape == y.shape == s.shape) or x.ndim != 1:
            raise HbtError("x, y and sigma must be 1-D arrays of equal length")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "sigma", s)

    def __len__(self):
        return self.x.size

    def __eq__(self, other):
        if not isinstance(other, Series):
            return NotImplemented
        return self.kind == other.kind and all(
            np.array_equal(getattr(self, k), getattr(other, k)) for k in ("x", "y", "sigma")
        )


@dataclass(frozen=True)
class LorentzianPeak:
    center: float  # nm
    fwhm: float  # nm
    amplitude: float

    def __post_init__(self):
        if not (self.fwhm > 0 and self.amplitude > 0):
            raise HbtError("peak fwhm and amplitude must be positive")


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Intensity vs wavelength.  ``baseline``, if known, seeds the fitted offset."""

    wavelengths: np.ndarray
    intensities: np.ndarray
    sigma: np.ndarray | None = None
    baseline: float | None = None

    def __post_init__(self):
        wl = np.asarray(self.wavelengths, dtype=float)
        it = np.asarray(self.intensities, dtype=float)
        if wl.shape != it.shape or wl.ndim != 1:
            raise HbtError("wavelengths and intensities must have equal length")
        if np.any(np.diff(wl) <= 0):
            raise HbtError("wavelengths must be strictly increasing")
        object.__setattr__(self, "wavelengths", wl)
        object.__setattr__(self, "intensities", it)
        if self.sigma is not None:
            object.__setattr__(self, "sigma", np.broadcast_to(
                np.asarray(self.sigma, dtype=float), it.shape).copy())


# ---------------------------------------------------------------- g2

def g2_model(tau, p, w):
    t1, t2, a = p
    return 1.0 - (1.0 + a) * smeared_exponential(tau, t1, w) + a * smeared_exponential(tau, t2, w)


def g2_jacobian(tau, p, w):
    t1, t2, a = p
    return np.column_stack([
        -(1.0 + a) * smeared_exponential_dt(tau, t1, w),
        a * smeared_exponential_dt(tau, t2, w),
        smeared_exponential(tau, t2, w) - smeared_exponential(tau, t1, w),
    ])


def _moving_average(y, n):
    if n <= 1:
        return y
    kernel = np.ones(n) / n
    return np.convolve(np.pad(y, n // 2, mode="edge"), kernel, mode="valid")[: y.size]


def g2_initial_guess(tau, values):
    """Deterministic starting point (tau1, tau2, a) read off a g2 curve."""
    tau = np.asarray(tau, dtype=float)
    values = np.asarray(values, dtype=float)
    mid = tau.size // 2
    pos = values[mid:]
    # fold the negative-delay half onto the positive one
    neg = values[mid::-1]
    folded = 0.5 * (pos + neg)
    t = tau[mid:]
    step = t[1] - t[0] if t.size > 1 else 1.0
    smooth = _moving_average(folded, max(1, int(round(0.3 / step)) | 1))
    g0 = smooth[0]
    ipk = int(np.argmax(smooth))
    peak = smooth[ipk]
    a0 = max(peak - 1.0, 1e-3)

    half = 0.5 * (g0 + peak)
    above = np.flatnonzero(smooth[: ipk + 1] >= half)
    t_half = t[above[0]] if above.size else step
    tau1 = max(t_half / math.log(2.0), step)

    tau2 = None
    if peak > 1.0:
        target = 1.0 + (peak - 1.0) / math.e
        below = np.flatnonzero(smooth[ipk:] <= target)
        if below.size:
            tau2 = t[ipk + below[0]]
    if tau2 is None:
        tau2 = t[-1] / 3
    tau2 = max(tau2, 3 * tau1)
    return tau1, tau2, a0


def fit_g2(h: CorrelationHistogram, drf_width: float = 0.0, init: G2Coefficients | None = None):
    """Fit the jitter-convolved three-level g2 to a normalized histogram.

    ``drf_width`` is held fixed.  The result carries the fitted g2(0) and
    its standard error under ``derived``.
    """
    if h.stage not in (Stage.NORMALIZED, Stage.BACKGROUND_CORRECTED):
        raise FitDataError("g2 fit needs a normalized or background-corrected histogram")
    if drf_width < 0:
        raise FitDataError("drf width must be >= 0")
    tau, y, s = h.bin_centers, h.values, h.sigma
    if init is None:
        p0 = g2_initial_guess(tau, y)
    else:
        p0 = (init.tau1, init.tau2, max(init.a, 0.0))
    step = float(np.median(np.diff(tau))) if tau.size > 1 else math.inf
    # the dip has to take at least two bins to recover half way
    if p0[0] * math.log(2.0) < 2 * step:
        raise FitDataError(
            f"histogram too coarse: {step:.3g} ns bins do not resolve a dip with tau1 ~ {p0[0]:.3g} ns"
        )
    w = float(drf_width)
    res = nlls_minimize(
        lambda x, p: g2_model(x, p, w), tau, y, s, p0,
        names=("tau1", "tau2", "a"),
        bounds=([_TINY, _TINY, 0.0], [np.inf, np.inf, np.inf]),
        jac=lambda x, p: g2_jacobian(x, p, w),
    )
    p = res.values()
    res.derived["drf_width"] = w
    res.derived["g2_0"] = float(g2_model(np.array([0.0]), p, w)[0])
    if res.covariance is not None:
        grad = g2_jacobian(np.array([0.0]), p, w)[0]
        res.derived["g2_0_stderr"] = float(math.sqrt(max(grad @ res.covariance @ grad, 0.0)))
    return res


def g2_coefficients(res: FitResult) -> G2Coefficients:
    return G2Coefficients(res.params["tau1"], res.params["tau2"], res.params["a"])


def lifetime_from_fit(res: FitResult, power, p_sat):
    """Excited-state lifetime estimate from a g2 fit taken at ``power``."""
    return corrected_lifetime(res.params["tau1"], power, p_sat)


# ---------------------------------------------------------------- saturation

def saturation_model(p, q):
    r_inf, p_sat = q
    return r_inf * p / (p + p_sat)


def saturation_jacobian(p, q):
    r_inf, p_sat = q
    d = p + p_sat
    return np.column_stack([p / d, -r_inf * p / d**2])


def fit_saturation(series: Series):
    """Fit R = R_inf P / (P + P_sat); returns params ``r_inf`` and ``p_sat``."""
    x, y, s = series.x, series.y, series.sigma
    if np.unique(x).size < 3:
        raise FitDataError("saturation fit needs at least 3 distinct powers")
    if np.any(x < 0):
        raise FitDataError("powers must be non-negative")
    p0 = (1.5 * float(np.max(y)), float(np.median(x)))
    if not p0[0] > 0 or not p0[1] > 0:
        raise FitDataError("cannot initialize saturation fit from non-positive data")
    return nlls_minimize(
        saturation_model, x, y, s, p0, names=("r_inf", "p_sat"),
        bounds=([_TINY * p0[0], _TINY * p0[1]], [np.inf, np.inf]),
        jac=saturation_jacobian,
    )


# ---------------------------------------------------------------- polarization

def harmonic_model(theta, q):
    m, c, s = q
    t = np.deg2rad(2.0 * np.asarray(theta, dtype=float))
    return m + c * np.cos(t) + s * np.sin(t)


def harmonic_jacobian(theta, q):
    t = np.deg2rad(2.0 * np.asarray(theta, dtype=float))
    return np.column_stack([np.ones_like(t), np.cos(t), np.sin(t)])


def angular_coverage(angles):
    """Degrees of the 180-degree period covered by ``angles`` (180 minus the largest gap)."""
    a = np.unique(np.mod(np.asarray(angles, dtype=float), 180.0))
    if a.size < 2:
        return 0.0
    gaps = np.diff(np.concatenate([a, [a[0] + 180.0]]))
    return 180.0 - float(gaps.max())


def fit_polarization(series: Series):
    """Fit I_min + (I_max - I_min) cos^2(theta - theta0) and derive the visibility.

    The fit runs on the equivalent harmonic form m + c cos 2θ + s sin 2θ,
    which stays well conditioned when the modulation vanishes; parameters
    and covariance are mapped back to (i_max, i_min, theta0).
    """
    if angular_coverage(series.x) < 120.0:
        raise FitDataError("polarization series must cover at least 120 degrees")
    raw = nlls_minimize(
        harmonic_model, series.x, series.y, series.sigma,
        (float(np.mean(series.y)), 0.0, 0.0), names=("mean", "c", "s"),
        jac=harmonic_jacobian,
    )
    m, c, s = raw.values()
    amp = math.hypot(c, s)
    theta0 = (math.degrees(0.5 * math.atan2(s, c))) % 180.0
    v = amp / m if m != 0 else float("nan")
    params = {"i_max": m + amp, "i_min": m - amp, "theta0": theta0}
    res = FitResult(params, None, raw.residual_norm, raw.converged, raw.iterations,
                    message=raw.message)
    res.derived["visibility"] = v
    if raw.covariance is not None:
        if amp > 0:
            uc, us = c / amp, s / amp
            rad = math.degrees(1.0) / (2.0 * amp * amp)
            G = np.array([
                [1.0, uc, us],
                [1.0, -uc, -us],
                [0.0, -s * rad, c * rad],
                [-amp / m**2, uc / m, us / m],
            ])
            cov = G @ raw.covariance @ G.T
            err = np.sqrt(np.maximum(np.diag(cov), 0.0))
        else:
            base = math.sqrt(raw.covariance[0, 0])
            amp_err = math.sqrt(max(raw.covariance[1, 1], raw.covariance[2, 2]))
            err = np.array([math.hypot(base, amp_err)] * 2 + [float("nan"), amp_err / abs(m)])
            cov = None
        res.stderr = dict(zip(("i_max", "i_min", "theta0"), err[:3].tolist()))
        res.covariance = cov[:3, :3] if cov is not None else None
        res.derived["visibility_stderr"] = float(err[3])
    return res


# ---------------------------------------------------------------- spectra

def lorentzian_spectrum(wl, peaks, baseline=0.0):
    """baseline + sum of Lorentzians with peak height ``amplitude``."""
    wl = np.asarray(wl, dtype=float)
    out = np.full_like(wl, float(baseline))
    for pk in peaks:
        g = 0.5 * pk.fwhm
        out += pk.amplitude * g * g / ((wl - pk.center) ** 2 + g * g)
    return out


def _spectrum_model(wl, q):
    out = np.full_like(wl, q[0])
    for c, f, amp in q[1:].reshape(-1, 3):
        g = 0.5 * f
        out += amp * g * g / ((wl - c) ** 2 + g * g)
    return out


def _spectrum_jacobian(wl, q):
    cols = [np.ones_like(wl)]
    for c, f, amp in q[1:].reshape(-1, 3):
        g = 0.5 * f
        dx = wl - c
        D = dx * dx + g * g
        cols += [
            amp * g * g * 2 * dx / D**2,
            amp * g * dx * dx / D**2,
            g * g / D,
        ]
    return np.column_stack(cols)


def _initial_peaks(wl, y, base, n_peaks):
    step = float(np.median(np.diff(wl)))
    smooth = _moving_average(y - base, 3)
    idx, props = find_peaks(smooth, prominence=0.0)
    order = np.argsort(props["prominences"])[::-1][:n_peaks]
    idx = idx[order]
    peaks = []
    if idx.size:
        widths = peak_widths(smooth, idx, rel_height=0.5)[0]
        for i, wd in zip(idx, widths):
            peaks.append((wl[i], max(wd * step, 2 * step), max(smooth[i], _TINY)))
    # fill missing peaks at the largest positive residual
    while len(peaks) < n_peaks:
        q = np.array([0.0] + [v for pk in peaks for v in pk])
        resid = y - base - _spectrum_model(wl, q)
        i = int(np.argmax(resid))
        peaks.append((wl[i], 4 * step, max(resid[i], _TINY)))
    return peaks


def fit_spectrum(s: Spectrum, n_peaks: int = 1, init=None):
    """Fit a constant baseline plus ``n_peaks`` Lorentzian lines.

    Peaks in the result are sorted by centre and exposed under
    ``derived['peaks']`` as :class:`LorentzianPeak` objects.
    """
    if n_peaks < 1:
        raise FitDataError("need at least one peak")
    wl, y = s.wavelengths, s.intensities
    if 3 * n_peaks + 1 >= wl.size:
        raise FitDataError(f"{3 * n_peaks + 1} parameters need more than {wl.size} samples")
    sigma = s.sigma if s.sigma is not None else np.ones_like(y)
    base = s.baseline if s.baseline is not None else float(np.percentile(y, 5))
    if init is None:
        peaks = _initial_peaks(wl, y, base, n_peaks)
    else:
        if len(init) != n_peaks:
            raise FitDataError("init must list n_peaks peaks")
        peaks = [(pk.center, pk.fwhm, pk.amplitude) for pk in init]
    q0 = np.array([base] + [v for pk in peaks for v in pk])
    names = ["baseline"]
    lo, hi = [-np.inf], [np.inf]
    for k in range(1, n_peaks + 1):
        names += [f"center_{k}", f"fwhm_{k}", f"amplitude_{k}"]
        lo += [wl[0], _TINY, _TINY]
        hi += [wl[-1], np.inf, np.inf]
    q0 = np.clip(q0, lo, hi)
    res = nlls_minimize(_spectrum_model, wl, y, sigma, q0, names=names,
                        bounds=(lo, hi), jac=_spectrum_jacobian)
    _sort_peaks(res, n_peaks)
    return res


def _sort_peaks(res: FitResult, n_peaks):
    q = res.values()
    order = np.argsort(q[1:].reshape(-1, 3)[:, 0])
    perm = [0] + [1 + 3 * k + j for k in order for j in range(3)]
    names = list(res.params)
    res.params = {names[i]: float(q[p]) for i, p in enumerate(perm)}
    if res.stderr is not None:
        err = list(res.stderr.values())
        res.stderr = {names[i]: err[p] for i, p in enumerate(perm)}
    if res.covariance is not None:
        res.covariance = res.covariance[np.ix_(perm, perm)]
    res.derived["peaks"] = [
        LorentzianPeak(res.params[f"center_{k}"], res.params[f"fwhm_{k}"],
                       res.params[f"amplitude_{k}"])
        for k in range(1, n_peaks + 1)
    ]


def fitted_g2_curve(res: FitResult, tau):
    """Evaluate the fitted, jitter-convolved g2 at ``tau``."""
    return g2_convolved(g2_coefficients(res), res.derived.get("drf_width", 0.0), tau)
