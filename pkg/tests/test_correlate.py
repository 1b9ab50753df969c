import math
import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from hbtkit import (
    CorrelationConfig,
    CorrelationHistogram,
    DetectorConfig,
    HistogramMeta,
    Stage,
    TimestampStream,
    apply_detection,
    background_correct,
    cross_correlate,
    normalize,
    rates_from_coefficients,
    simulate_emission_times,
    simulate_poisson_stream,
    snr_to_rho,
)
from hbtkit import reference as ref
from hbtkit.acceptance import brute_force_histogram
from hbtkit.errors import HbtError, MetadataError, StageError, StreamError


def all_pairs(a, b, width_ps, half_bins):
    """Plain-Python delay histogram: bin k covers [c_k - w/2, c_k + w/2)."""
    hist = [0] * (2 * half_bins + 1)
    for ta in a:
        for tb in b:
            # compare 2*delay against doubled edges to stay in integers
            k = math.floor((2 * (tb - ta) + width_ps) / (2 * width_ps)) + half_bins
            if 0 <= k < len(hist):
                hist[k] += 1
    return np.array(hist)


def stream(ts, duration):
    return TimestampStream(np.sort(np.asarray(ts, dtype=np.int64)), duration)


sorted_stamps = st.lists(st.integers(0, 20_000), max_size=60)


# ---------------------------------------------------------------- configuration

def test_bin_layout_is_odd_and_centred():
    cfg = CorrelationConfig(0.1, 100.0)
    c = cfg.bin_centers()
    assert cfg.n_bins == 2001 and c.size == 2001
    assert c[1000] == 0.0 and c[0] == -100.0 and c[-1] == 100.0
    assert CorrelationConfig(0.3, 1.0).n_bins == 7


def test_config_validation():
    with pytest.raises(HbtError):
        CorrelationConfig(0.0, 1.0)
    with pytest.raises(HbtError):
        CorrelationConfig(1.0, 0.5)
    with pytest.raises(HbtError):
        CorrelationConfig(0.0005, 1.0)


# ---------------------------------------------------------------- raw correlation

def test_empty_channel_gives_zero_histogram():
    h = cross_correlate(stream([], 1000), stream([1, 2, 3], 1000), CorrelationConfig(0.01, 0.1))
    assert h.stage is Stage.RAW
    assert not h.counts.any()


def test_single_pair_lands_in_its_bin():
    cfg = CorrelationConfig(0.1, 5.0)
    h = cross_correlate(stream([1000], 10**5), stream([3260], 10**5), cfg)
    assert h.counts.sum() == 1
    assert h.bin_centers[np.argmax(h.counts)] == pytest.approx(2.3)


@pytest.mark.parametrize("delay, centre", [(-50, 0.0), (49, 0.0), (50, 0.1), (-51, -0.1),
                                           (5050, None), (-5050, -5.0), (-5051, None)])
def test_half_open_bin_edges(delay, centre):
    cfg = CorrelationConfig(0.1, 5.0)
    h = cross_correlate(stream([10_000], 10**5), stream([10_000 + delay], 10**5), cfg)
    if centre is None:
        assert h.counts.sum() == 0
    else:
        assert h.counts.sum() == 1
        assert h.bin_centers[np.argmax(h.counts)] == pytest.approx(centre)


def test_metadata_filled():
    a, b = stream([1, 5, 9], 10**6), stream([2, 3], 10**6)
    h = cross_correlate(a, b, CorrelationConfig(0.001, 0.01))
    assert h.meta.n1 == pytest.approx(3 / 1e-6) and h.meta.n2 == pytest.approx(2 / 1e-6)
    assert h.meta.T == pytest.approx(1e-6) and h.meta.w == pytest.approx(0.001)


def test_mismatched_durations_rejected():
    with pytest.raises(StreamError):
        cross_correlate(stream([1], 10), stream([1], 11), CorrelationConfig(0.001, 0.01))


@given(sorted_stamps, sorted_stamps, st.integers(1, 400), st.integers(1, 30))
def test_two_pointer_equals_all_pairs(a, b, width_ps, half_bins):
    cfg = CorrelationConfig(width_ps / 1000, half_bins * width_ps / 1000)
    assert cfg.half_bins == half_bins
    h = cross_correlate(stream(a, 20_000), stream(b, 20_000), cfg)
    assert np.array_equal(h.counts, all_pairs(sorted(a), sorted(b), width_ps, half_bins))


def test_ten_thousand_events_equal_oracle():
    rng = np.random.default_rng(3)
    dur = 5 * 10**6
    a = np.sort(rng.integers(0, dur, 10_000))
    b = np.sort(np.concatenate([rng.integers(0, dur, 7_000), a[:3_000] + 120]))
    cfg = CorrelationConfig(0.1, 30.0)
    h = cross_correlate(TimestampStream(a, dur), TimestampStream(b, dur), cfg)
    assert np.array_equal(h.counts, brute_force_histogram(a, b, cfg.bin_width_ps, cfg.half_bins))


@given(sorted_stamps, sorted_stamps, st.integers(0, 50).map(lambda k: 2 * k + 1))
def test_channel_swap_mirrors_with_odd_bin_width(a, b, width_ps):
    # with an odd width in ps no integer delay sits on a bin edge
    cfg = CorrelationConfig(width_ps / 1000, 10 * width_ps / 1000)
    ab = cross_correlate(stream(a, 20_000), stream(b, 20_000), cfg)
    ba = cross_correlate(stream(b, 20_000), stream(a, 20_000), cfg)
    assert np.array_equal(ab.counts, ba.counts[::-1])


def test_channel_swap_differs_only_by_edge_ties():
    rng = np.random.default_rng(4)
    a, b = np.sort(rng.integers(0, 10**6, 2000)), np.sort(rng.integers(0, 10**6, 2000))
    cfg = CorrelationConfig(0.1, 5.0)
    ab = cross_correlate(stream(a, 10**6), stream(b, 10**6), cfg).counts
    ba = cross_correlate(stream(b, 10**6), stream(a, 10**6), cfg).counts[::-1]
    # a delay exactly on an edge moves one bin when reflected
    d = (b[None, :] - a[:, None]).ravel()
    ties = d[(np.abs(d) <= 5050) & ((d - 50) % 100 == 0)]
    assert np.abs(ab - ba).sum() <= 2 * ties.size
    # the window [-5050, 5050) ps reflects to (-5050, 5050]
    assert ab.sum() == ba.sum() + np.sum(ties == -5050) - np.sum(ties == 5050)


@given(sorted_stamps, sorted_stamps, st.integers(0, 10**6))
def test_time_shift_invariance(a, b, offset):
    cfg = CorrelationConfig(0.05, 2.0)
    dur = 20_000 + 10**6
    h0 = cross_correlate(stream(a, dur), stream(b, dur), cfg)
    h1 = cross_correlate(stream(np.array(a, dtype=np.int64) + offset, dur),
                         stream(np.array(b, dtype=np.int64) + offset, dur), cfg)
    assert np.array_equal(h0.counts, h1.counts)


def test_throughput_ten_million_events():
    a = simulate_poisson_stream(1e7, 1.0, seed=1)
    b = simulate_poisson_stream(1e7, 1.0, seed=2)
    cfg = CorrelationConfig(0.1, 100.0)
    cross_correlate(a, b, CorrelationConfig(0.1, 1.0))  # compile outside the timing
    t0 = time.perf_counter()
    h = cross_correlate(a, b, cfg)
    elapsed = time.perf_counter() - t0
    assert h.counts.sum() > 10**7
    assert elapsed < 30.0


# ---------------------------------------------------------------- normalization

@pytest.fixture(scope="module")
def poisson_histogram():
    a = simulate_poisson_stream(5e5, 1.0, seed=21)
    b = simulate_poisson_stream(5e5, 1.0, seed=22)
    return normalize(cross_correlate(a, b, CorrelationConfig(0.2, 100.0)))


def test_normalization_factor(poisson_histogram):
    h = poisson_histogram
    m = h.meta
    factor = 1.0 / (m.n1 * m.n2 * m.w * 1e-9 * m.T)
    assert np.allclose(h.values, h.counts * factor, rtol=1e-15)
    assert np.allclose(h.sigma, np.sqrt(np.maximum(h.counts, 1)) * factor, rtol=1e-15)
    assert h.stage is Stage.NORMALIZED


def test_poisson_histogram_is_flat(poisson_histogram):
    h = poisson_histogram
    mean_err = 1 / math.sqrt(h.counts.sum())
    assert abs(h.values.mean() - 1) <= 3 * mean_err
    assert np.mean(np.abs(h.values - 1) <= 3 * h.sigma) > 0.99
    expected = h.meta.n1 * h.meta.n2 * h.meta.w * 1e-9 * h.meta.T
    chi2 = float(np.sum((h.counts - expected) ** 2 / expected))
    p = stats.chi2.sf(chi2, h.counts.size)
    assert 0.005 < p < 0.995


def test_longer_acquisition_same_values():
    cfg = CorrelationConfig(0.5, 50.0)
    short = [normalize(cross_correlate(simulate_poisson_stream(4e5, 0.5, seed=s),
                                       simulate_poisson_stream(4e5, 0.5, seed=s + 100), cfg))
             for s in range(2)]
    long = normalize(cross_correlate(simulate_poisson_stream(4e5, 1.0, seed=7),
                                     simulate_poisson_stream(4e5, 1.0, seed=8), cfg))
    for h in short:
        err = math.hypot(1 / math.sqrt(h.counts.sum()), 1 / math.sqrt(long.counts.sum()))
        assert abs(h.values.mean() - long.values.mean()) <= 3 * err
    assert long.counts.sum() == pytest.approx(2 * short[0].counts.sum(), rel=0.02)


def test_normalize_needs_raw_and_metadata():
    h = cross_correlate(stream([1], 100), stream([1], 100), CorrelationConfig(0.001, 0.005))
    with pytest.raises(StageError):
        normalize(normalize(h))
    bare = CorrelationHistogram(h.bin_centers, h.counts, h.values, h.sigma, Stage.RAW,
                                HistogramMeta(n1=1.0, n2=1.0, T=None, w=0.001))
    with pytest.raises(MetadataError):
        normalize(bare)


# ---------------------------------------------------------------- background correction

def test_snr_to_rho():
    assert snr_to_rho(6) == pytest.approx(6 / 7)
    assert snr_to_rho(1) == 0.5
    assert snr_to_rho(math.inf) == 1.0
    assert snr_to_rho(1e12) == pytest.approx(1.0)
    with pytest.raises(HbtError):
        snr_to_rho(0)


def test_background_correct_identities(poisson_histogram):
    h = poisson_histogram
    same = background_correct(h, 1.0)
    assert np.array_equal(same.values, h.values) and np.array_equal(same.sigma, h.sigma)
    assert same.stage is Stage.BACKGROUND_CORRECTED and same.meta.rho == 1.0
    rho = 0.6
    c = background_correct(h, rho)
    assert np.allclose(c.values, (h.values - (1 - rho**2)) / rho**2, rtol=1e-15)
    assert np.array_equal(c.counts, h.counts) and np.array_equal(c.bin_centers, h.bin_centers)
    assert (c.meta.n1, c.meta.n2, c.meta.T, c.meta.w) == (h.meta.n1, h.meta.n2, h.meta.T, h.meta.w)


@given(st.floats(0.01, 1.0))
def test_poissonian_value_is_fixed_point(rho):
    ones = CorrelationHistogram(np.array([-1.0, 0.0, 1.0]), np.array([5, 5, 5]), np.ones(3),
                                np.ones(3), Stage.NORMALIZED, HistogramMeta(1, 1, 1, 1))
    assert np.allclose(background_correct(ones, rho).values, 1.0, rtol=0, atol=1e-12)


def test_background_correct_guards(poisson_histogram):
    with pytest.raises(HbtError):
        background_correct(poisson_histogram, 0.0)
    with pytest.raises(HbtError):
        background_correct(poisson_histogram, 1.2)
    with pytest.raises(StageError):
        background_correct(background_correct(poisson_histogram, 0.9), 0.9)


def test_corrected_mixture_matches_pure_emitter():
    rates = rates_from_coefficients(ref.COEFFS, ref.PUMP_RATE)
    e = simulate_emission_times(rates, 0.01, seed=31)
    cfg = CorrelationConfig(0.1, 20.0)
    det = DetectorConfig(jitter=ref.DRF)
    pure = normalize(cross_correlate(*apply_detection(e, det, 0.01, seed=32), cfg))
    signal = e.size / 0.01 / 2
    snr = 6.0
    noisy_det = DetectorConfig(jitter=ref.DRF, background_rate=signal / snr)
    mixed = normalize(cross_correlate(*apply_detection(e, noisy_det, 0.01, seed=32), cfg))
    corrected = background_correct(mixed, snr_to_rho(snr))
    g_pure, s_pure = pure.value_at_zero()
    g_corr, s_corr = corrected.value_at_zero()
    assert abs(mixed.value_at_zero()[0] - g_pure) > 5 * s_pure  # background does lift the dip
    assert abs(g_corr - g_pure) <= 3 * math.hypot(s_pure, s_corr)
