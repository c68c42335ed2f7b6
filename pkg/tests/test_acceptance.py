"""Acceptance criteria, run at their stated tolerances.

Each test records one PASS/FAIL line, repeated in the pytest terminal summary.
"""

import math
import time
import tracemalloc

import numba
import numpy as np
import pytest

from pairlink import presets
from pairlink.analytics import dispersion_budget, franson_width, pair_delays
from pairlink.config import CorrelatorSettings, SweepSpec
from pairlink.constants import FWHM_PER_SIGMA
from pairlink.correlator import cross_correlate
from pairlink.detection import DetectorSpec, TimestampStream
from pairlink.experiment import run_experiment, run_sweep, simulate
from pairlink.fiber import FiberChain, GVDSegment
from pairlink.source import SourceSpec, sample_emissions

pytestmark = pytest.mark.slow

_RUNS = {}


def preset_run(name, out_root, workers=1):
    """Run a preset once per session into ``out_root/name``; later calls reuse it."""
    key = (name, workers)
    if key not in _RUNS:
        cfg = presets.get_preset(name)
        out = out_root / f"{name}_w{workers}"
        t0 = time.perf_counter()
        if isinstance(cfg, SweepSpec):
            report = run_sweep(cfg, out, workers=workers)
        else:
            report = run_experiment(cfg, out, workers=workers)
        _RUNS[key] = (report, out, time.perf_counter() - t0)
    return _RUNS[key]


@pytest.fixture(scope="module")
def out_root(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


# -- 1 ----------------------------------------------------------------------


@numba.njit(cache=True)
def _all_pairs(a, b, tau_min, bin_ps, nbins):
    counts = np.zeros(nbins, dtype=np.int64)
    for i in range(a.size):
        for j in range(b.size):
            k = (b[j] - a[i] - tau_min) // bin_ps
            if 0 <= k < nbins:
                counts[k] += 1
    return counts


def test_criterion_1_correlator_oracle(acceptance_report):
    rng = np.random.default_rng(101)
    mismatches = 0
    for trial in range(200):
        n_a, n_b = rng.integers(0, 10_001, 2)
        res = int(rng.choice([1, 10, 125]))
        span = int(rng.integers(10**4, 10**8)) // res
        a = TimestampStream(0, np.unique(rng.integers(0, span, n_a)), res)
        b = TimestampStream(1, np.unique(rng.integers(0, span, n_b)), res)
        bin_ps = int(rng.integers(1, 2000))
        tau_min = int(rng.integers(-10**6, 10**5))
        tau_max = tau_min + int(rng.integers(1, 2 * 10**6))
        hist = cross_correlate(a, b, bin_ps, tau_min, tau_max, workers=int(rng.integers(1, 5)))
        oracle = _all_pairs(a.times_ps(), b.times_ps(), tau_min, bin_ps, len(hist.counts))
        mismatches += not np.array_equal(hist.counts, oracle)
    passed = mismatches == 0
    acceptance_report(1, passed, f"sort-merge vs all-pairs histograms: {200 - mismatches}/200 identical")
    assert passed


# -- 2 ----------------------------------------------------------------------


def test_criterion_2_energy_conservation(acceptance_report):
    worst = 0.0
    n = 0
    for spec in (SourceSpec(), SourceSpec(spectral_shape="gaussian", spectral_fwhm_nm=20.0, signal_side="long")):
        batch = sample_emissions(spec, 1.0, seed=2, rate_hz=5e5)
        inv_p = 1.0 / spec.pump_wavelength_nm
        err = np.abs(1.0 / batch.lambda_signal_nm + 1.0 / batch.lambda_idler_nm - inv_p) / inv_p
        worst = max(worst, float(err.max()))
        n += len(batch)
    passed = n >= 1e6 and worst < 1e-12
    acceptance_report(2, passed, f"{n} pairs, max relative error {worst:.2e} (< 1e-12)")
    assert passed


# -- 3 ----------------------------------------------------------------------

# (β1·x1, β2·x2, σ0): from perfect compensation to fully additive dispersion.
EQ1_CASES = [
    (20.0, -20.0, 1.0),
    (20.0, -19.5, 1.0),
    (20.0, -18.0, 1.0),
    (20.0, -10.0, 1.0),
    (20.0, 0.0, 1.0),
    (20.0, 20.0, 1.0),
    (-50.0, -30.0, 2.0),
    (300.0, -100.0, 1.5),
    (100.0, 100.0, 1.0),
    (500.0, 500.0, 1.0),
]


def _eq1_config(b1x1, b2x2, sigma0):
    # Transform-limited gaussian spectrum, β2-only arms, ideal 1 ps detectors.
    src = SourceSpec(spectral_shape="gaussian", sigma0_ps=sigma0, pair_rate_hz=2e4)
    ideal = DetectorSpec(jitter_fwhm_ps=0.0, efficiency=1.0, dark_count_rate_hz=0.0, dead_time_ps=0.0, resolution_ps=1)
    base = presets.local()
    return base.replace(
        source=src,
        arm_signal=FiberChain((GVDSegment(1.0, b1x1),), "arm1"),
        arm_idler=FiberChain((GVDSegment(1.0, b2x2),), "arm2"),
        detector_signal=ideal,
        detector_idler=ideal,
        correlator=CorrelatorSettings(bin_width_ps=1, window_ps=2000),
        duration_s=5.0,
        seed=303,
    )


def _mc_sigma(cfg, expected):
    sim = simulate(cfg)
    # The spectrum is centered mid-band, so the peak sits at the delay of the center wavelength.
    center = int(round(float(pair_delays(cfg.arm_signal, cfg.arm_idler, cfg.source, cfg.source.signal_center_nm()))))
    half = int(10 * expected) + 20
    hist = cross_correlate(sim.stream_signal, sim.stream_idler, 1, center - half, center + half + 1)
    w = hist.counts.astype(float)
    x = hist.centers
    mean = np.sum(w * x) / w.sum()
    return math.sqrt(np.sum(w * (x - mean) ** 2) / w.sum())


def test_criterion_3_eq1_cross_check(acceptance_report):
    worst = 0.0
    rows = []
    for b1x1, b2x2, sigma0 in EQ1_CASES:
        cfg = _eq1_config(b1x1, b2x2, sigma0)
        f = franson_width(dispersion_budget(cfg.arm_signal, cfg.arm_idler, cfg.source))
        assert f == pytest.approx(abs(b1x1 + b2x2) / (math.sqrt(2) * sigma0), rel=1e-9)
        # Emission spread and the two 1 ps floors bound the compensated limit.
        floor_sq = sigma0**2 + 1.0 / 6.0
        expected = math.sqrt(f**2 + floor_sq)
        got = _mc_sigma(cfg, expected)
        dev = abs(got - expected) / expected
        worst = max(worst, dev)
        rows.append(f"{b1x1 + b2x2:+g}:{got:.3g}/{expected:.3g}")
    passed = worst <= 0.05
    acceptance_report(3, passed, f"MC σ vs franson_width over 10 configs, worst deviation {100 * worst:.2f}% (≤ 5%)")
    print("  " + "  ".join(rows))
    assert passed


# -- 4 ----------------------------------------------------------------------


def test_criterion_4_jitter_floor(acceptance_report, out_root):
    report, _, _ = preset_run("local", out_root)
    jitter = math.hypot(87.0, 110.0)
    floor = math.sqrt(jitter**2 + FWHM_PER_SIGMA**2 * 125.0**2 / 12.0)
    dev = abs(report.fwhm_ps - floor) / floor
    passed = dev <= 0.15
    acceptance_report(
        4,
        passed,
        f"local FWHM {report.fwhm_ps:.1f} ps vs floor {floor:.1f} ps: {100 * dev:.1f}% (≤ 15%); "
        f"profile prediction {report.prediction.fwhm_ps:.1f} ps",
    )
    assert passed


# -- 5, 6 -------------------------------------------------------------------


def _calibration():
    return ", ".join(f"{k}={v}" for k, v in presets.CALIBRATION.items())


def test_criterion_5_asymmetric_slope(acceptance_report, out_root):
    report, _, seconds = preset_run("asymmetric_sweep", out_root)
    slope_ok = 0.8 * 167.0 <= report.slope <= 1.2 * 167.0
    r2_ok = report.r_squared > 0.99
    time_ok = seconds < 300
    passed = slope_ok and r2_ok and time_ok
    acceptance_report(
        5,
        passed,
        f"slope {report.slope:.2f}±{report.slope_stderr:.2f} ps/km (167 ± 20%), R² {report.r_squared:.4f} (> 0.99), "
        f"{seconds:.0f} s; calibration: {_calibration()}",
    )
    assert passed


def test_criterion_6_symmetric_suppression(acceptance_report, out_root):
    asym, _, _ = preset_run("asymmetric_sweep", out_root)
    sym, _, _ = preset_run("symmetric_sweep", out_root)
    ratio = sym.slope / asym.slope
    ratio_ok = ratio <= 0.2
    abs_ok = 0.4 * 18.0 <= sym.slope <= 1.6 * 18.0
    passed = ratio_ok and abs_ok
    acceptance_report(
        6,
        passed,
        f"symmetric slope {sym.slope:.2f}±{sym.slope_stderr:.2f} ps/km, ratio {ratio:.3f} (≤ 0.2: "
        f"{'ok' if ratio_ok else 'no'}), absolute 18 ± 60% ({'ok' if abs_ok else 'no'})",
    )
    assert passed


# -- 7 ----------------------------------------------------------------------


def test_criterion_7_deployed_contrast(acceptance_report):
    ratios, one_arm, both_arm = [], [], []
    for seed in range(1, 21):
        both = run_experiment(presets.deployed_link(seed)).fwhm_ps
        one = run_experiment(presets.deployed_link_one_arm(seed)).fwhm_ps
        ratios.append(one / both)
        one_arm.append(one)
        both_arm.append(both)
    frac = np.mean(np.array(ratios) >= 4.0)
    one_med, both_med = float(np.median(one_arm)), float(np.median(both_arm))
    contrast_ok = frac >= 0.9
    one_ok = abs(one_med - 1938.0) <= 0.3 * 1938.0
    both_ok = abs(both_med - 258.0) <= 0.5 * 258.0
    passed = contrast_ok and one_ok and both_ok
    acceptance_report(
        7,
        passed,
        f"ratio ≥ 4 in {100 * frac:.0f}% of 20 seeds (≥ 90%), median ratio {np.median(ratios):.2f}; "
        f"one-arm median {one_med:.0f} ps (1.9 ns ± 30%: {'ok' if one_ok else 'no'}); "
        f"both-arm median {both_med:.0f} ps (0.26 ns ± 50%: {'ok' if both_ok else 'no'})",
    )
    assert passed


# -- 8 ----------------------------------------------------------------------


def test_criterion_8_long_spools(acceptance_report, out_root):
    both, _, _ = preset_run("long_spools", out_root)
    one, _, _ = preset_run("long_spools_one_arm", out_root)
    both_ok = both.fwhm_ps < 600.0
    one_ok = one.fwhm_ps > 5000.0
    passed = both_ok and one_ok
    acceptance_report(
        8,
        passed,
        f"80 km both-arm {both.fwhm_ps:.0f} ps (< 600: {'ok' if both_ok else 'no'}), "
        f"one-arm {one.fwhm_ps:.0f} ps (> 5000: {'ok' if one_ok else 'no'})",
    )
    assert passed


# -- 9 ----------------------------------------------------------------------


def test_criterion_9_performance(acceptance_report):
    n = 10_000_000
    rng = np.random.default_rng(9)
    res = 125
    # 1e7 events per stream over one second of 125 ps ticks.
    a = TimestampStream(0, np.unique(rng.integers(0, 8 * 10**9, int(n * 1.0007))), res)
    b = TimestampStream(1, np.unique(rng.integers(0, 8 * 10**9, int(n * 1.0007))), res)
    a = TimestampStream(0, a.ticks[:n], res)
    b = TimestampStream(1, b.ticks[:n], res)
    cross_correlate(TimestampStream(0, a.ticks[:1000], res), TimestampStream(1, b.ticks[:1000], res), 125, -1000, 1000)
    tracemalloc.start()
    t0 = time.perf_counter()
    hist = cross_correlate(a, b, 125, -1_000_000, 1_000_000)
    seconds = time.perf_counter() - t0
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    linear_bound = 8 * (len(a) + len(b)) * 2 + 8 * len(hist.counts) * 4
    passed = len(a) == len(b) == n and seconds < 10.0 and peak <= linear_bound
    acceptance_report(
        9,
        passed,
        f"1e7 × 1e7 events, 125 ps bins over ±1 µs: {seconds:.2f} s (< 10 s), "
        f"peak extra memory {peak / 1e6:.0f} MB (bound {linear_bound / 1e6:.0f} MB), {hist.total} pairs",
    )
    assert passed


# -- 10 ---------------------------------------------------------------------


def test_criterion_10_determinism(acceptance_report, out_root):
    differing = []
    for name in presets.presets():
        _, out1, _ = preset_run(name, out_root, workers=1)
        _, out4, _ = preset_run(name, out_root, workers=4)
        files1 = sorted(p.relative_to(out1) for p in out1.rglob("*") if p.is_file())
        files4 = sorted(p.relative_to(out4) for p in out4.rglob("*") if p.is_file())
        if files1 != files4 or any((out1 / f).read_bytes() != (out4 / f).read_bytes() for f in files1):
            differing.append(name)
    passed = not differing
    n = len(presets.presets())
    acceptance_report(
        10, passed, f"{n - len(differing)}/{n} presets byte-identical between 1 and 4 workers" + (f"; differ: {differing}" if differing else "")
    )
    assert passed
