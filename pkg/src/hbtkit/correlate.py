"""Start-to-all delay histograms between two timestamp channels.

Delays are b - a.  Bins are half-open, ``[center - w/2, center + w/2)``,
with an odd number of bins so that one is centred on zero delay.  All bin
arithmetic is done on integer picoseconds in doubled coordinates, which
keeps odd bin widths exact.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .errors import HbtError, MetadataError, StageError, StreamError
from .simulate import PS_PER_NS, TimestampStream


class Stage(str, enum.Enum):
    RAW = "raw"
    NORMALIZED = "normalized"
    BACKGROUND_CORRECTED = "backgroundCorrected"


@dataclass(frozen=True)
class CorrelationConfig:
    bin_width: float = 0.1  # ns
    tau_max: float = 100.0  # ns

    def __post_init__(self):
        if not self.bin_width > 0:
            raise HbtError("bin width must be positive")
        if self.tau_max < self.bin_width:
            raise HbtError("tau_max must be at least one bin width")
        w_ps = self.bin_width * PS_PER_NS
        if abs(w_ps - round(w_ps)) > 1e-6:
            raise HbtError("bin width must be a whole number of picoseconds")

    @property
    def bin_width_ps(self):
        return int(round(self.bin_width * PS_PER_NS))

    @property
    def half_bins(self):
        return int(math.floor(self.tau_max / self.bin_width + 1e-9))

    @property
    def n_bins(self):
        return 2 * self.half_bins + 1

    def bin_centers(self):
        n = self.half_bins
        return np.arange(-n, n + 1) * self.bin_width_ps / PS_PER_NS


@dataclass(frozen=True)
class HistogramMeta:
    n1: float | None = None  # counts/s
    n2: float | None = None  # counts/s
    T: float | None = None  # s
    w: float | None = None  # ns
    rho: float | None = None


@dataclass(frozen=True, eq=False)
class CorrelationHistogram:
    bin_centers: np.ndarray  # ns
    counts: np.ndarray
    values: np.ndarray
    sigma: np.ndarray
    stage: Stage
    meta: HistogramMeta

    def __post_init__(self):
        for name in ("bin_centers", "counts", "values", "sigma"):
            arr = np.array(getattr(self, name), dtype=np.int64 if name == "counts" else float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "stage", Stage(self.stage))
        n = self.bin_centers.size
        if not (self.counts.size == self.values.size == self.sigma.size == n) or n % 2 == 0:
            raise HbtError("histogram arrays must share one odd length")
        if np.any(self.counts < 0):
            raise HbtError("counts must be non-negative")

    @property
    def bin_width(self):
        return self.meta.w

    def value_at_zero(self):
        mid = self.bin_centers.size // 2
        return self.values[mid], self.sigma[mid]

    def __eq__(self, other):
        if not isinstance(other, CorrelationHistogram):
            return NotImplemented
        return (
            self.stage == other.stage
            and self.meta == other.meta
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("bin_centers", "counts", "values", "sigma")
            )
        )


@njit(cache=True)
def _xcorr_kernel(a, b, w, n):
    nbins = 2 * n + 1
    span = nbins * w  # doubled half-range
    hist = np.zeros(nbins, dtype=np.int64)
    j0 = 0
    nb = b.size
    for i in range(a.size):
        ta = a[i]
        while j0 < nb and 2 * (b[j0] - ta) < -span:
            j0 += 1
        j = j0
        while j < nb:
            u = 2 * (b[j] - ta) + span
            if u >= 2 * span:
                break
            hist[u // (2 * w)] += 1
            j += 1
    return hist


def _check_pair(a: TimestampStream, b: TimestampStream):
    if a.duration_ps != b.duration_ps:
        raise StreamError(
            f"streams have different durations ({a.duration_ps} vs {b.duration_ps} ps)"
        )
    for s in (a, b):
        bad = np.flatnonzero(np.diff(s.timestamps) < 0)
        if bad.size:
            raise StreamError(f"channel {s.channel} unsorted at index {bad[0] + 1}")


def cross_correlate(a: TimestampStream, b: TimestampStream, cfg: CorrelationConfig):
    """Histogram every pair (t_a, t_b) whose delay t_b - t_a falls in the window.

    Runs a two-pointer sweep over the sorted streams, so the cost is linear
    in the number of events plus the number of in-window pairs.
    """
    _check_pair(a, b)
    counts = _xcorr_kernel(a.timestamps, b.timestamps, cfg.bin_width_ps, cfg.half_bins)
    T = a.duration
    meta = HistogramMeta(n1=len(a) / T, n2=len(b) / T, T=T, w=cfg.bin_width_ps / PS_PER_NS)
    return CorrelationHistogram(
        cfg.bin_centers(), counts, counts.astype(float), np.sqrt(np.maximum(counts, 1)),
        Stage.RAW, meta,
    )


def normalize(h: CorrelationHistogram):
    """Scale raw counts to g2 by 1 / (N1 N2 w T); Poissonian light gives 1."""
    if h.stage is not Stage.RAW:
        raise StageError(f"normalize expects a raw histogram, got {h.stage.value}")
    m = h.meta
    for key in ("n1", "n2", "T", "w"):
        v = getattr(m, key)
        if v is None or not v > 0:
            raise MetadataError(f"normalization needs positive {key}, got {v}")
    factor = 1.0 / (m.n1 * m.n2 * (m.w * 1e-9) * m.T)
    sigma = np.sqrt(np.maximum(h.counts, 1)) * factor
    return replace(h, values=h.counts * factor, sigma=sigma, stage=Stage.NORMALIZED)


def snr_to_rho(snr):
    """Signal fraction S / (S + B) from a signal-to-background ratio S / B."""
    if not snr > 0:
        raise HbtError("snr must be positive")
    if math.isinf(snr):
        return 1.0
    return snr / (snr + 1.0)


def background_correct(h: CorrelationHistogram, rho: float):
    """Remove uncorrelated-background coincidences: g = (c - (1 - rho^2)) / rho^2."""
    if h.stage is not Stage.NORMALIZED:
        raise StageError(f"background correction expects a normalized histogram, got {h.stage.value}")
    if not 0 < rho <= 1:
        raise HbtError(f"rho must lie in (0, 1], got {rho}")
    r2 = rho * rho
    return replace(
        h,
        values=(h.values - (1.0 - r2)) / r2,
        sigma=h.sigma / r2,
        stage=Stage.BACKGROUND_CORRECTED,
        meta=replace(h.meta, rho=rho),
    )
