import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pairlink import presets
from pairlink.constants import FWHM_PER_SIGMA
from pairlink.correlator import (
    CorrelationHistogram,
    PeakFit,
    cross_correlate,
    find_peak,
    fit_fwhm,
    pair_events,
)
from pairlink.detection import TimestampStream, jitter_floor_fwhm
from pairlink.errors import FitError
from pairlink.experiment import simulate


def stream(ticks, res=1, channel=0):
    return TimestampStream(channel, np.sort(np.asarray(ticks, dtype=np.int64)), res)


def brute_force(a_ps, b_ps, bin_ps, tau_min, nbins):
    d = (b_ps[None, :] - a_ps[:, None]).ravel()
    k = np.floor_divide(d - tau_min, bin_ps)
    k = k[(k >= 0) & (k < nbins)]
    return np.bincount(k, minlength=nbins)


def test_hand_example():
    a = stream([0, 10000])
    b = stream([1000, 11000])
    h = cross_correlate(a, b, 1000, -5000, 5000)
    assert len(h.counts) == 10
    nz = np.flatnonzero(h.counts)
    assert nz.tolist() == [6]
    assert h.edges[6] == 1000 and h.counts[6] == 2


def test_autocorrelation_zero_lag():
    a = stream(np.unique(np.random.default_rng(0).integers(0, 10**9, 500)))
    h = cross_correlate(a, a, 10, -5, 5)
    assert h.counts.tolist() == [len(a)]


@given(
    st.lists(st.integers(0, 200000), min_size=0, max_size=300, unique=True),
    st.lists(st.integers(0, 200000), min_size=0, max_size=300, unique=True),
    st.integers(1, 3000),
    st.integers(-20000, 5000),
    st.integers(1, 30000),
    st.sampled_from([1, 4]),
)
def test_matches_brute_force(a, b, bin_ps, tau_min, span, workers):
    sa, sb = stream(a), stream(b)
    h = cross_correlate(sa, sb, bin_ps, tau_min, tau_min + span, workers=workers)
    expected = brute_force(sa.times_ps(), sb.times_ps(), bin_ps, tau_min, len(h.counts))
    assert np.array_equal(h.counts, expected)


def test_brute_force_1e4_events():
    rng = np.random.default_rng(1)
    sa = stream(np.unique(rng.integers(0, 10**8, 10000)), res=125)
    sb = stream(np.unique(rng.integers(0, 10**8, 10000)), res=125)
    h = cross_correlate(sa, sb, 125, -100000, 100000)
    assert np.array_equal(h.counts, brute_force(sa.times_ps(), sb.times_ps(), 125, -100000, len(h.counts)))


@given(st.integers(-5000, 5000))
def test_translation_equivariance(shift):
    rng = np.random.default_rng(2)
    sa = stream(np.unique(rng.integers(0, 10**6, 400)))
    sb = stream(np.unique(rng.integers(0, 10**6, 400)))
    h0 = cross_correlate(sa, sb, 37, -3000, 3000)
    h1 = cross_correlate(sa, sb.shifted(shift), 37, -3000 + shift, 3000 + shift)
    assert np.array_equal(h0.counts, h1.counts)
    assert h1.tau_start_ps == h0.tau_start_ps + shift


def test_count_conservation():
    rng = np.random.default_rng(3)
    sa = stream(np.unique(rng.integers(0, 10**5, 300)))
    sb = stream(np.unique(rng.integers(0, 10**5, 300)))
    h = cross_correlate(sa, sb, 100, -2000, 2000)
    d = sb.times_ps()[None, :] - sa.times_ps()[:, None]
    assert h.total == np.count_nonzero((d >= -2000) & (d < 2000))


def test_histogram_rejects_bad_args():
    a = stream([1, 2])
    with pytest.raises(ValueError):
        cross_correlate(a, a, 0, -5, 5)
    with pytest.raises(ValueError):
        cross_correlate(a, a, 1, 5, -5)
    with pytest.raises(ValueError):
        cross_correlate(a, stream([1], res=2), 1, -5, 5)


def test_csv_round_trip(tmp_path):
    h = CorrelationHistogram(125, -500, np.array([1, 0, 5, 2, 0, 0, 3, 4]))
    text = h.to_csv(tmp_path / "h.csv")
    assert text.splitlines()[0] == "tau_ps,count"
    back = CorrelationHistogram.from_csv(tmp_path / "h.csv")
    assert back.bin_width_ps == 125 and back.tau_start_ps == -500
    assert np.array_equal(back.counts, h.counts)


def test_find_peak_single_bin():
    h = CorrelationHistogram(10, -50, np.array([0, 0, 0, 7, 0, 0, 0, 0, 0, 0]))
    assert find_peak(h) == -15.0


def test_find_peak_tie_goes_to_smaller_tau():
    h = CorrelationHistogram(10, -50, np.array([0, 0, 0, 0, 5, 5, 0, 0, 0, 0]))
    assert find_peak(h) == -5.0


def test_find_peak_empty():
    with pytest.raises(FitError):
        find_peak(CorrelationHistogram(10, 0, np.zeros(5, dtype=np.int64)))


def _gauss_hist(amplitude, sigma, bin_ps, background=0.0, half_span=3000, rng=None):
    n = int(2 * half_span / bin_ps)
    h = CorrelationHistogram(bin_ps, -n // 2 * bin_ps, np.zeros(n, dtype=np.int64))
    mu = background + amplitude * np.exp(-0.5 * (h.centers / sigma) ** 2)
    counts = rng.poisson(mu) if rng is not None else np.round(mu)
    return CorrelationHistogram(bin_ps, h.tau_start_ps, counts.astype(np.int64))


def test_fit_exact_gaussian():
    fit = fit_fwhm(_gauss_hist(1e6, 100.0, 10))
    assert fit.fwhm_ps == pytest.approx(235.5, rel=0.005)
    assert fit.converged
    assert abs(fit.center_ps) < 1.0


def test_fit_flat_background_fails():
    h = CorrelationHistogram(125, -5000, np.random.default_rng(0).poisson(100, 80))
    with pytest.raises(FitError):
        fit_fwhm(h)


def test_fit_empty_fails():
    with pytest.raises(FitError):
        fit_fwhm(CorrelationHistogram(125, -5000, np.zeros(80, dtype=np.int64)))


def test_fit_poisson_noisy():
    true = FWHM_PER_SIGMA * 200.0
    assert true == pytest.approx(471, abs=0.5)
    rng = np.random.default_rng(7)
    draws = [fit_fwhm(_gauss_hist(1e4, 200.0, 125, background=5.0, half_span=5000, rng=rng)) for _ in range(60)]
    widths = np.array([f.fwhm_ps for f in draws])
    spread = widths.std(ddof=1)
    one = draws[0]
    assert abs(one.fwhm_ps - true) < 3 * spread
    # Covariance stderr agrees with the replicate scatter.
    assert np.median([f.fwhm_stderr_ps for f in draws]) == pytest.approx(spread, rel=0.3)


def test_fit_unbiased_over_replicates():
    rng = np.random.default_rng(11)
    true = FWHM_PER_SIGMA * 150.0
    widths = np.array(
        [fit_fwhm(_gauss_hist(2000, 150.0, 25, background=3.0, rng=rng)).fwhm_ps for _ in range(100)]
    )
    assert abs(widths.mean() - true) < 3 * widths.std(ddof=1) / math.sqrt(len(widths))


def test_fit_block_round_trip():
    fit = fit_fwhm(_gauss_hist(1e4, 80.0, 10))
    back = PeakFit.from_block(fit.to_block())
    assert back.fwhm_ps == pytest.approx(fit.fwhm_ps, abs=1e-6)
    assert back.center_ps == pytest.approx(fit.center_ps, abs=1e-6)


def test_pairing_disjoint():
    res = pair_events(stream([0, 100, 200]), stream([5000, 6000]), 0, 50)
    assert len(res) == 0


def test_pairing_earlier_candidate():
    res = pair_events(stream([1000]), stream([990, 1020]), 0, 100)
    assert res.pairs.tolist() == [[0, 0]]


def test_pairing_one_to_one():
    res = pair_events(stream([0, 10]), stream([5]), 0, 40)
    assert res.pairs.tolist() == [[0, 0]]


def test_pairing_recovers_ground_truth():
    cfg = presets.local()
    sim = simulate(cfg.replace(duration_s=0.2))
    a, b = sim.stream_signal, sim.stream_idler
    window = 4 * jitter_floor_fwhm(cfg.detector_signal, cfg.detector_idler)
    h = cross_correlate(a, b, 125, -2000, 2000)
    res = pair_events(a, b, find_peak(h), window)
    truth = np.intersect1d(sim.origin_signal[sim.origin_signal >= 0], sim.origin_idler)
    matched = sim.origin_signal[res.pairs[:, 0]] == sim.origin_idler[res.pairs[:, 1]]
    assert matched.sum() >= 0.99 * len(truth)
    assert res.accidental_estimate < 0.01 * len(truth)
