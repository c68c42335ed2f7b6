"""Cross-correlation of two timestamp streams and coincidence-peak analysis.

``cross_correlate`` counts delays ``t_b - t_a`` into fixed-width bins with a
sort-merge sweep. It never materializes the n_a × n_b difference matrix. The
sweep runs in integer picoseconds, so the histogram is exact.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import curve_fit

from ._kernels import correlate_into, greedy_pairs
from .constants import FWHM_PER_SIGMA
from .detection import TimestampStream
from .errors import FitError

DEFAULT_BIN_PS = 125
MIN_FIT_BINS = 5
FIT_WINDOW_WIDTHS = 5.0
PEAK_SIGNIFICANCE = 5.0
SIDEBAND_OFFSET_WINDOWS = 10


def _as_int_ps(value, name):
    iv = int(round(value))
    if abs(iv - value) > 1e-9:
        raise ValueError(f"{name} must be a whole number of picoseconds, got {value}")
    return iv


@dataclass(frozen=True)
class CorrelationHistogram:
    bin_width_ps: int
    tau_start_ps: int
    counts: np.ndarray

    def __post_init__(self):
        if self.bin_width_ps <= 0:
            raise ValueError("bin width must be positive")
        if len(self.counts) == 0:
            raise ValueError("histogram needs at least one bin")

    def __len__(self):
        return len(self.counts)

    @property
    def edges(self) -> np.ndarray:
        return self.tau_start_ps + self.bin_width_ps * np.arange(len(self.counts) + 1, dtype=float)

    @property
    def centers(self) -> np.ndarray:
        return self.tau_start_ps + self.bin_width_ps * (np.arange(len(self.counts)) + 0.5)

    @property
    def tau_stop_ps(self) -> int:
        return self.tau_start_ps + self.bin_width_ps * len(self.counts)

    @property
    def total(self):
        return self.counts.sum()

    def to_csv(self, path=None, offset_ps=0.0) -> str:
        lines = ["tau_ps,count"]
        for c, n in zip(self.centers - offset_ps, self.counts):
            lines.append(f"{c:.1f},{n}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "CorrelationHistogram":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        centers, counts = data[:, 0], data[:, 1].astype(np.int64)
        if len(centers) > 1:
            bin_ps = _as_int_ps(centers[1] - centers[0], "bin width")
        else:
            raise ValueError("cannot infer bin width from a single-row histogram")
        return cls(bin_ps, _as_int_ps(centers[0] - 0.5 * bin_ps, "tau start"), counts)


def _check_resolution(stream_a: TimestampStream, stream_b: TimestampStream):
    if stream_a.resolution_ps != stream_b.resolution_ps:
        raise ValueError(
            f"streams have resolutions {stream_a.resolution_ps} ps and {stream_b.resolution_ps} ps; rescale first"
        )


def cross_correlate(
    stream_a: TimestampStream,
    stream_b: TimestampStream,
    bin_width_ps=DEFAULT_BIN_PS,
    tau_min_ps=-5000,
    tau_max_ps=5000,
    workers=1,
) -> CorrelationHistogram:
    """Histogram of ``t_b - t_a`` over ``[tau_min, tau_max)``.

    If the window is not a whole number of bins, the last bin runs past ``tau_max``.
    With ``workers > 1``, stream A is split into shards that are counted in
    parallel and summed, which gives the same result.
    """
    _check_resolution(stream_a, stream_b)
    bin_ps = _as_int_ps(bin_width_ps, "bin_width_ps")
    tau_min = _as_int_ps(tau_min_ps, "tau_min_ps")
    tau_max = _as_int_ps(tau_max_ps, "tau_max_ps")
    if bin_ps <= 0:
        raise ValueError("bin_width_ps must be positive")
    if not tau_min < tau_max:
        raise ValueError("tau_min_ps must be below tau_max_ps")
    nbins = -(-(tau_max - tau_min) // bin_ps)
    span_end = tau_min + nbins * bin_ps
    a = stream_a.times_ps()
    b = stream_b.times_ps()

    def shard(lo, hi):
        counts = np.zeros(nbins, dtype=np.int64)
        if hi > lo:
            a_part = a[lo:hi]
            b_lo = np.searchsorted(b, a_part[0] + tau_min, "left")
            b_hi = np.searchsorted(b, a_part[-1] + span_end, "left")
            correlate_into(a_part, b[b_lo:b_hi], tau_min, bin_ps, counts)
        return counts

    n_shards = max(1, min(int(workers), len(a)))
    cuts = np.linspace(0, len(a), n_shards + 1).astype(np.int64)
    if n_shards == 1:
        counts = shard(0, len(a))
    else:
        with ThreadPoolExecutor(max_workers=n_shards) as pool:
            parts = list(pool.map(shard, cuts[:-1], cuts[1:]))
        counts = np.sum(parts, axis=0)
    return CorrelationHistogram(bin_ps, tau_min, counts)


def find_peak(hist: CorrelationHistogram) -> float:
    """Center of the fullest bin; ties go to the smaller delay."""
    if not np.any(hist.counts > 0):
        raise FitError("histogram is empty; no peak to find")
    return float(hist.centers[int(np.argmax(hist.counts))])


@dataclass(frozen=True)
class PeakFit:
    center_ps: float
    fwhm_ps: float
    fwhm_stderr_ps: float
    amplitude: float
    background_per_bin: float
    # reduced chi-square of the fit; NaN marks the half-maximum fallback
    goodness: float

    @property
    def converged(self) -> bool:
        return not math.isnan(self.goodness)

    def to_block(self, offset_ps=0.0) -> str:
        rows = [
            ("center_ps", self.center_ps - offset_ps),
            ("fwhm_ps", self.fwhm_ps),
            ("fwhm_stderr_ps", self.fwhm_stderr_ps),
            ("amplitude", self.amplitude),
            ("background", self.background_per_bin),
            ("goodness", self.goodness),
        ]
        return "".join(f"{k}={v:.6f}\n" for k, v in rows)

    @classmethod
    def from_block(cls, text: str) -> "PeakFit":
        kv = parse_block(text)
        return cls(
            kv["center_ps"], kv["fwhm_ps"], kv["fwhm_stderr_ps"], kv["amplitude"], kv["background"], kv["goodness"]
        )


def parse_block(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        try:
            out[key.strip()] = float(value)
        except ValueError:
            out[key.strip()] = value.strip()
    return out


def _gauss_const(x, amp, mu, sigma, bg):
    return amp * np.exp(-0.5 * ((x - mu) / sigma) ** 2) + bg


def _half_max_width(x, y, k0, level):
    """Width between the interpolated crossings of ``level`` on either side of bin k0."""
    n = len(y)
    left = k0
    while left > 0 and y[left - 1] >= level:
        left -= 1
    right = k0
    while right < n - 1 and y[right + 1] >= level:
        right += 1
    if left > 0:
        xl = np.interp(level, [y[left - 1], y[left]], [x[left - 1], x[left]])
    else:
        xl = x[0]
    if right < n - 1:
        xr = np.interp(level, [y[right + 1], y[right]], [x[right + 1], x[right]])
    else:
        xr = x[-1]
    return float(xr - xl)


def _background_guess(y):
    edge = max(1, len(y) // 5)
    return float(np.median(np.concatenate([y[:edge], y[-edge:]])))


def fit_fwhm(hist: CorrelationHistogram) -> PeakFit:
    """Fit a Gaussian plus a constant around the coincidence peak.

    The fit uses bins within ±5 half-maximum widths of the fullest bin,
    weighted by Poisson errors. If the least-squares fit fails, the directly
    interpolated half-maximum width is returned with ``goodness = NaN``.
    """
    y = np.asarray(hist.counts, dtype=float)
    x = hist.centers
    if not np.any(y > 0):
        raise FitError("histogram is empty; no peak to fit")
    k0 = int(np.argmax(y))
    bg0 = _background_guess(y)
    amp0 = y[k0] - bg0
    if amp0 <= PEAK_SIGNIFICANCE * math.sqrt(max(bg0, 1.0)):
        raise FitError("no peak stands out above the background")

    width_x = np.concatenate([[x[0] - hist.bin_width_ps], x, [x[-1] + hist.bin_width_ps]])
    width_y = np.concatenate([[bg0], y, [bg0]])
    fwhm0 = max(_half_max_width(width_x, width_y, k0 + 1, bg0 + 0.5 * amp0), float(hist.bin_width_ps))
    sel = np.abs(x - x[k0]) <= FIT_WINDOW_WIDTHS * fwhm0
    if sel.sum() < MIN_FIT_BINS:
        raise FitError(f"only {int(sel.sum())} usable bins around the peak; need {MIN_FIT_BINS}")
    xs, ys = x[sel] - x[k0], y[sel]
    weights = np.sqrt(np.maximum(ys, 1.0))
    try:
        popt, pcov = curve_fit(
            _gauss_const,
            xs,
            ys,
            p0=[amp0, 0.0, fwhm0 / FWHM_PER_SIGMA, bg0],
            sigma=weights,
            absolute_sigma=True,
            maxfev=10000,
        )
        amp, mu, sigma, bg = popt
        sigma = abs(sigma)
        ok = (
            np.all(np.isfinite(popt))
            and np.all(np.isfinite(pcov))
            and sigma > 0
            and amp > 0
            and xs[0] <= mu <= xs[-1]
        )
    except (RuntimeError, ValueError):
        ok = False
    if ok:
        resid = (ys - _gauss_const(xs, *popt)) / weights
        dof = max(len(xs) - 4, 1)
        return PeakFit(
            center_ps=float(mu + x[k0]),
            fwhm_ps=float(FWHM_PER_SIGMA * sigma),
            fwhm_stderr_ps=float(FWHM_PER_SIGMA * math.sqrt(pcov[2, 2])),
            amplitude=float(amp),
            background_per_bin=float(bg),
            goodness=float(np.sum(resid**2) / dof),
        )
    return PeakFit(
        center_ps=float(x[k0]),
        fwhm_ps=fwhm0,
        fwhm_stderr_ps=float("nan"),
        amplitude=float(amp0),
        background_per_bin=bg0,
        goodness=float("nan"),
    )


@dataclass(frozen=True)
class PairingResult:
    pairs: np.ndarray  # shape (n, 2): indices into stream A and stream B
    accidental_estimate: int

    def __len__(self):
        return len(self.pairs)


def _greedy(a, b, lo_off, hi_off):
    out = np.empty((min(len(a), len(b)), 2), dtype=np.int64)
    k = greedy_pairs(a, b, float(lo_off), float(hi_off), out)
    return out[:k]


def pair_events(stream_a, stream_b, tau_peak_ps, window_ps) -> PairingResult:
    """One-to-one earliest-first matching of events with ``|t_b - t_a - tau_peak| <= window/2``.

    The accidental estimate repeats the matching in a sideband of equal width
    that is offset by ten windows.
    """
    if not window_ps > 0:
        raise ValueError("window_ps must be positive")
    _check_resolution(stream_a, stream_b)
    a, b = stream_a.times_ps(), stream_b.times_ps()
    half = 0.5 * window_ps
    pairs = _greedy(a, b, tau_peak_ps - half, tau_peak_ps + half)
    side = tau_peak_ps + SIDEBAND_OFFSET_WINDOWS * window_ps
    accidentals = len(_greedy(a, b, side - half, side + half))
    return PairingResult(pairs, accidentals)
