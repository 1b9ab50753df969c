"""Exact stochastic simulation of photon timestamps from a three-level emitter.

The emitter trajectory is an event-driven continuous-time Markov chain.
Because state 1 can only go to 2 and state 3 only back to 1, the chain
decomposes into independent excitation cycles:

    1 --Exp(r12)--> 2 --Exp(r21 + r23)--> { 1 with a photon   (p = r21 / (r21 + r23))
                                          { 3 --Exp(r31)--> 1 (silent)

so whole blocks of cycles can be drawn at once without a per-event loop.

Randomness comes from numpy's PCG64 bit generator (``numpy.random.default_rng``)
seeded through ``SeedSequence`` with a 64-bit integer plus fixed stream
labels, so a seed reproduces the same streams on every platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .emitter import (
    DeviceResponse,
    PolarizationModel,
    SaturationModel,
    TransitionRates,
    polarization_intensity,
    saturation_rate,
)
from .errors import HbtError, StreamError

PS_PER_NS = 1000
PS_PER_S = 10**12

# emissions are routed through the detector in blocks of this many events
DETECTION_BLOCK = 1 << 20
_MAX_CYCLE_CHUNK = 1 << 21

# stream labels mixed into the seed
_EMISSION, _DETECTION, _BACKGROUND, _SERIES = 0, 1, 2, 3


def _rng(seed, *labels):
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), *labels]))


@dataclass(frozen=True, eq=False)
class TimestampStream:
    """Arrival times in integer picoseconds for one detector channel."""

    timestamps: np.ndarray
    duration_ps: int
    channel: str = "A"

    def __post_init__(self):
        ts = np.ascontiguousarray(self.timestamps, dtype=np.int64)
        if ts.ndim != 1:
            raise StreamError("timestamps must be one-dimensional")
        duration = int(self.duration_ps)
        if duration <= 0:
            raise StreamError("duration must be positive")
        if ts.size:
            if ts[0] < 0 or ts[-1] > duration:
                raise StreamError("timestamps must lie within [0, duration]")
            bad = np.flatnonzero(np.diff(ts) < 0)
            if bad.size:
                raise StreamError(f"timestamps out of order at index {bad[0] + 1}")
        ts.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "duration_ps", duration)

    @property
    def duration(self):
        """Acquisition time in seconds."""
        return self.duration_ps / PS_PER_S

    @property
    def rate(self):
        return len(self) / self.duration

    def __len__(self):
        return self.timestamps.size

    def __eq__(self, other):
        if not isinstance(other, TimestampStream):
            return NotImplemented
        return (
            self.duration_ps == other.duration_ps
            and self.channel == other.channel
            and np.array_equal(self.timestamps, other.timestamps)
        )


@dataclass(frozen=True)
class DetectorConfig:
    """Detector pair behind a 50/50 splitter.

    ``jitter.w`` is the combined width of the two-detector response; each
    channel receives independent Gaussian jitter of width w / sqrt(2).
    """

    eta: float = 1.0
    jitter: DeviceResponse = field(default_factory=DeviceResponse)
    background_rate: float = 0.0  # counts/s per channel
    dead_time: float = 0.0  # ns

    def __post_init__(self):
        if not 0 <= self.eta <= 1:
            raise HbtError("eta must lie in [0, 1]")
        if self.background_rate < 0 or self.dead_time < 0:
            raise HbtError("background rate and dead time must be >= 0")
        if not isinstance(self.jitter, DeviceResponse):
            object.__setattr__(self, "jitter", DeviceResponse(float(self.jitter)))


@dataclass(frozen=True)
class SimulationPlan:
    rates: TransitionRates
    detector: DetectorConfig
    duration: float  # s
    seed: int = 0

    def __post_init__(self):
        if not self.duration > 0:
            raise HbtError("duration must be positive")


def _cycle_blocks(rates: TransitionRates, duration_ns: float, rng):
    """Yield (start, d1, d2, emit, d3) arrays for consecutive excitation cycles."""
    r12, r21, r23, r31 = rates.as_tuple()
    if r12 == 0:
        return
    k2 = r21 + r23
    p_emit = r21 / k2
    mean_cycle = 1 / r12 + 1 / k2 + ((1 - p_emit) / r31 if r31 > 0 else math.inf)
    t = 0.0
    while t < duration_ns:
        if math.isfinite(mean_cycle):
            n = int(min(_MAX_CYCLE_CHUNK, (duration_ns - t) / mean_cycle * 1.02 + 64))
        else:
            n = 64
        d1 = rng.exponential(1 / r12, n)
        d2 = rng.exponential(1 / k2, n)
        emit = rng.random(n) < p_emit
        d3 = rng.exponential(1 / r31, n) if r31 > 0 else np.full(n, np.inf)
        d3[emit] = 0.0
        ends = t + np.cumsum(d1 + d2 + d3)
        starts = np.empty(n)
        starts[0] = t
        starts[1:] = ends[:-1]
        keep = starts < duration_ns
        yield starts[keep], d1[keep], d2[keep], emit[keep], d3[keep]
        t = ends[-1]


def _emission_blocks(rates, duration, seed):
    duration_ns = duration * 1e9
    rng = _rng(seed, _EMISSION)
    for starts, d1, d2, emit, _ in _cycle_blocks(rates, duration_ns, rng):
        times = (starts + d1 + d2)[emit]
        yield times[times <= duration_ns]


def simulate_emission_times(rates: TransitionRates, duration: float, seed: int = 0):
    """Photon emission times (ns, float64, ascending) over ``duration`` seconds.

    The emitter starts in the ground state at t = 0.
    """
    if not duration > 0:
        raise HbtError("duration must be positive")
    blocks = list(_emission_blocks(rates, duration, seed))
    return np.concatenate(blocks) if blocks else np.empty(0)


def state_occupancy(rates: TransitionRates, duration: float, seed: int = 0):
    """Fractions of time spent in states 1, 2, 3 along the simulated trajectory.

    Uses the same random stream as :func:`simulate_emission_times`, so both
    describe one trajectory for a given seed.
    """
    duration_ns = duration * 1e9
    occ = np.zeros(3)
    rng = _rng(seed, _EMISSION)
    for starts, d1, d2, _, d3 in _cycle_blocks(rates, duration_ns, rng):
        e1 = np.minimum(starts + d1, duration_ns)
        e2 = np.minimum(e1 + d2, duration_ns)
        e3 = np.minimum(e2 + d3, duration_ns)
        occ += [np.sum(e1 - starts), np.sum(e2 - e1), np.sum(e3 - e2)]
    if rates.r12 == 0:
        return np.array([1.0, 0.0, 0.0])
    return occ / duration_ns


def _detect_block(times_ns, detector, rng, sigma_ns):
    n = times_ns.size
    detected = rng.random(n) < detector.eta
    to_a = rng.random(n) < 0.5
    shifted = times_ns + rng.normal(0.0, 1.0, n) * sigma_ns if sigma_ns > 0 else times_ns
    ps = np.rint(shifted * PS_PER_NS).astype(np.int64)
    return ps[detected & to_a], ps[detected & ~to_a]


@njit(cache=True)
def _dead_time_mask(ts, dead):
    keep = np.ones(ts.size, dtype=np.bool_)
    last = np.int64(0)
    have = False
    for i in range(ts.size):
        if have and ts[i] - last < dead:
            keep[i] = False
        else:
            last = ts[i]
            have = True
    return keep


class _Detection:
    """Accumulates detector output block by block; see :func:`apply_detection`."""

    def __init__(self, detector: DetectorConfig, duration: float, seed: int):
        self.detector = detector
        self.duration_ps = int(round(duration * PS_PER_S))
        self.seed = seed
        self.sigma = detector.jitter.w / math.sqrt(2.0)
        self.parts = ([], [])
        self.block = 0

    def feed(self, block_times):
        rng = _rng(self.seed, _DETECTION, self.block)
        a, b = _detect_block(block_times, self.detector, rng, self.sigma)
        self.parts[0].append(a)
        self.parts[1].append(b)
        self.block += 1

    def finish(self):
        out = []
        dead_ps = int(round(self.detector.dead_time * PS_PER_NS))
        for ch, name in enumerate("AB"):
            sig = np.concatenate(self.parts[ch]) if self.parts[ch] else np.empty(0, np.int64)
            rng = _rng(self.seed, _BACKGROUND, ch)
            nbg = rng.poisson(self.detector.background_rate * self.duration_ps / PS_PER_S)
            bg = rng.integers(0, self.duration_ps, nbg, endpoint=True)
            ts = np.sort(np.concatenate([sig, bg.astype(np.int64)]), kind="stable")
            np.clip(ts, 0, self.duration_ps, out=ts)
            if dead_ps > 0 and ts.size:
                ts = ts[_dead_time_mask(ts, dead_ps)]
            out.append(TimestampStream(ts, self.duration_ps, name))
        return out[0], out[1]


def apply_detection(emissions, detector: DetectorConfig, duration: float, seed: int = 0):
    """Route emission times (ns) through a lossy, jittery HBT detector pair.

    Every photon is kept with probability ``eta``, sent to channel A or B
    with equal odds and shifted by Gaussian jitter.  Uncorrelated Poisson
    background is added per channel and events closer than the dead time to
    the previous accepted event are dropped.  Returns ``(stream_a, stream_b)``.
    """
    emissions = np.asarray(emissions, dtype=float)
    if emissions.size and np.any(np.diff(emissions) < 0):
        raise StreamError("emission times must be ordered")
    det = _Detection(detector, duration, seed)
    for start in range(0, emissions.size, DETECTION_BLOCK):
        det.feed(emissions[start:start + DETECTION_BLOCK])
    return det.finish()


def simulate_plan(plan: SimulationPlan):
    """Run emitter and detector for a plan without holding all emissions in memory.

    Produces exactly the same streams as ``apply_detection`` applied to
    ``simulate_emission_times`` with the plan's seed.
    """
    det = _Detection(plan.detector, plan.duration, plan.seed)
    pending = []
    n_pending = 0
    for block in _emission_blocks(plan.rates, plan.duration, plan.seed):
        pending.append(block)
        n_pending += block.size
        while n_pending >= DETECTION_BLOCK:
            buf = np.concatenate(pending)
            det.feed(buf[:DETECTION_BLOCK])
            rest = buf[DETECTION_BLOCK:]
            pending, n_pending = [rest], rest.size
    if n_pending:
        det.feed(np.concatenate(pending))
    return det.finish()


def apply_jitter(stream: TimestampStream, w: float, seed: int = 0):
    """Add independent Gaussian jitter of width ``w`` (ns) to every event."""
    rng = _rng(seed, _DETECTION, 2**31)
    shifted = stream.timestamps + np.rint(rng.normal(0.0, w * PS_PER_NS, len(stream)))
    ts = np.clip(np.sort(shifted.astype(np.int64)), 0, stream.duration_ps)
    return TimestampStream(ts, stream.duration_ps, stream.channel)


def simulate_poisson_stream(rate: float, duration: float, seed: int = 0, channel: str = "A"):
    """Homogeneous Poisson process with ``rate`` counts/s over ``duration`` s."""
    if rate < 0:
        raise HbtError("rate must be >= 0")
    duration_ps = int(round(duration * PS_PER_S))
    rng = _rng(seed, _BACKGROUND, 7)
    n = rng.poisson(rate * duration)
    ts = np.sort(rng.integers(0, duration_ps, n, endpoint=True))
    return TimestampStream(ts, duration_ps, channel)


def _noisy(values, shot_noise, integration_time, rng):
    counts = values * integration_time
    if shot_noise:
        counts = rng.poisson(counts).astype(float)
    sigma = np.sqrt(np.maximum(counts, 1.0)) / integration_time
    return counts / integration_time, sigma


def generate_saturation_series(
    model: SaturationModel, powers, shot_noise=True, seed=0, integration_time=1.0
):
    """Synthetic count rate vs power; returns a :class:`~hbtkit.fitting.Series`."""
    from .fitting import Series

    powers = np.asarray(powers, dtype=float)
    if powers.size == 0 or np.any(powers < 0):
        raise HbtError("powers must be non-empty and non-negative")
    y, sigma = _noisy(saturation_rate(powers, model), shot_noise, integration_time,
                      _rng(seed, _SERIES, 0))
    return Series(powers, y, sigma, kind="saturation")


def generate_polarization_series(
    model: PolarizationModel, angles, shot_noise=True, seed=0, integration_time=1.0
):
    """Synthetic count rate vs excitation polarization angle (degrees)."""
    from .fitting import Series

    angles = np.asarray(angles, dtype=float)
    if angles.size == 0:
        raise HbtError("angles must be non-empty")
    y, sigma = _noisy(polarization_intensity(angles, model), shot_noise, integration_time,
                      _rng(seed, _SERIES, 1))
    return Series(angles, y, sigma, kind="polarization")
