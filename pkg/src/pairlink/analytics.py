"""Closed-form and quadrature predictions used to cross-check the Monte-Carlo.

The predicted coincidence profile uses the same physics as the simulation,
computed deterministically:

    delay density over the pair spectrum  ⊛  Gaussian (jitter and σ0)
      ⊛  triangle (floor quantization of both timestamps)

The profile is evaluated at integer tick lags and then summed into the
histogram bins. ``predict_fwhm`` runs the same Gaussian-plus-constant fit
on this expected histogram, so the prediction and the measurement share
their definition of FWHM.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import C_NM_PER_PS, FWHM_PER_SIGMA, angular_frequency, wavelength_from_angular
from .correlator import CorrelationHistogram, fit_fwhm
from .detection import jitter_floor_fwhm
from .errors import FitError
from .fiber import FiberChain, relative_group_delay
from .source import SourceSpec

DEFAULT_GRID = 512
PROFILE_QUADRATURE = 20001


@dataclass(frozen=True)
class DispersionBudget:
    beta1_x1_ps2: float
    beta2_x2_ps2: float
    sigma0_ps: float

    def __post_init__(self):
        if not self.sigma0_ps > 0:
            raise ValueError("sigma0_ps must be positive")


def franson_width(budget: DispersionBudget) -> float:
    """Dispersive broadening σ (a Gaussian σ, not a FWHM) of the pair timing correlation."""
    total = budget.beta1_x1_ps2 + budget.beta2_x2_ps2
    return abs(total) / (math.sqrt(2.0) * budget.sigma0_ps)


def beta2_from_D(D_ps_per_nm_km, lambda_nm):
    """GVD coefficient β2 in ps²/km from D in ps/(nm·km)."""
    if np.any(np.asarray(lambda_nm) <= 0):
        raise ValueError("wavelength must be positive")
    return -np.asarray(D_ps_per_nm_km) * np.asarray(lambda_nm) ** 2 / (2.0 * math.pi * C_NM_PER_PS) + 0.0


def chain_beta2_length(chain: FiberChain, lambda_nm: float) -> float:
    """Σ β2·L over the chain, ps², evaluated at one wavelength."""
    return float(sum(beta2_from_D(seg.dispersion(lambda_nm), lambda_nm) * seg.length_km for seg in chain.segments))


def dispersion_budget(chain_a, chain_b, source: SourceSpec) -> DispersionBudget:
    """β·x for both arms at the signal and idler band centers."""
    lam_s = source.signal_center_nm()
    lam_i = source.conjugate(lam_s)
    return DispersionBudget(chain_beta2_length(chain_a, lam_s), chain_beta2_length(chain_b, lam_i), source.sigma0_ps)


@dataclass(frozen=True)
class DelayBounds:
    dtau_min_ps: float
    dtau_max_ps: float
    tau_s_center_ps: float
    tau_i_center_ps: float

    @property
    def spread_ps(self) -> float:
        return self.dtau_max_ps - self.dtau_min_ps

    @property
    def dtau_center_ps(self) -> float:
        return self.tau_i_center_ps - self.tau_s_center_ps


def _signal_grid(source: SourceSpec, n):
    lo, hi = source.signal_band()
    return np.linspace(lo, hi, n)


def pair_delays(chain_a, chain_b, source: SourceSpec, lambda_signal_nm, lambda_ref_nm=None):
    """Dispersive Δτ = delay_B(λ_i) − delay_A(λ_s) for signal wavelengths, bulk latency excluded."""
    ref = source.degenerate_wavelength_nm if lambda_ref_nm is None else lambda_ref_nm
    lam_s = np.asarray(lambda_signal_nm, dtype=float)
    lam_i = source.conjugate(lam_s)
    return relative_group_delay(chain_b, lam_i, ref) - relative_group_delay(chain_a, lam_s, ref)


def delay_bounds(chain_a, chain_b, source: SourceSpec, n_grid=DEFAULT_GRID, lambda_ref_nm=None) -> DelayBounds:
    """Extreme pair delays over the signal band (bulk latency excluded).

    The centers are taken at the band's frequency midpoint, so the signal
    and idler centers are exact conjugates.
    """
    ref = source.degenerate_wavelength_nm if lambda_ref_nm is None else lambda_ref_nm
    dtau = pair_delays(chain_a, chain_b, source, _signal_grid(source, n_grid), ref)
    lo, hi = source.signal_band()
    lam_c = wavelength_from_angular(0.5 * (angular_frequency(lo) + angular_frequency(hi)))
    return DelayBounds(
        float(dtau.min()),
        float(dtau.max()),
        float(relative_group_delay(chain_a, lam_c, ref)),
        float(relative_group_delay(chain_b, source.conjugate(lam_c), ref)),
    )


def bulk_offset_ps(config) -> float:
    return config.arm_idler.latency_ps - config.arm_signal.latency_ps


def _delay_samples(config, n=PROFILE_QUADRATURE):
    """Quadrature nodes and weights for the dispersive Δτ distribution."""
    src = config.source
    lam = _signal_grid(src, n)
    w = src.signal_density(lam)
    w = w / w.sum()
    return pair_delays(config.arm_signal, config.arm_idler, src, lam, config.reference_nm), w


def _floor_sigma(config) -> float:
    floor = jitter_floor_fwhm(config.detector_signal, config.detector_idler, config.source.sigma0_ps)
    return floor / FWHM_PER_SIGMA


def expected_rates(config):
    """``(coincidence_rate, singles_signal, singles_idler)`` in Hz, dark counts included."""
    src = config.source
    eta_a = config.arm_signal.survival_probability * config.detector_signal.efficiency
    eta_b = config.arm_idler.survival_probability * config.detector_idler.efficiency
    singles_a = src.pair_rate_hz * eta_a + config.detector_signal.dark_count_rate_hz
    singles_b = src.pair_rate_hz * eta_b + config.detector_idler.dark_count_rate_hz
    return src.pair_rate_hz * eta_a * eta_b, singles_a, singles_b


def predicted_profile(config, n_coincidences=None, tau_min_ps=None, tau_max_ps=None) -> CorrelationHistogram:
    """Expected coincidence histogram with the config's binning.

    By default the peak holds the expected number of true coincidences for the run,
    on top of the expected accidental background. Passing ``n_coincidences``
    normalizes the peak to that count and drops the background.
    """
    det_a, det_b = config.detector_signal, config.detector_idler
    if det_a.resolution_ps != det_b.resolution_ps:
        raise ValueError("detectors must share a timestamp resolution")
    res = det_a.resolution_ps
    bin_ps = config.correlator.bin_width_ps
    offset = bulk_offset_ps(config)
    dtau, weights = _delay_samples(config)
    dtau = dtau + offset
    sigma = _floor_sigma(config)

    reach = 8.0 * sigma + 2.0 * res + 2.0 * bin_ps
    lo = math.floor((dtau.min() - reach) / res) * res
    hi = math.ceil((dtau.max() + reach) / res) * res
    # Fine grid that resolves the Gaussian and the quantization triangle.
    step = min(res, max(sigma, 0.5)) / 16.0
    n_fine = int(math.ceil((hi - lo) / step)) + 1
    grid = lo + step * np.arange(n_fine)

    density, _ = np.histogram(dtau, bins=n_fine, range=(lo - 0.5 * step, lo + (n_fine - 0.5) * step), weights=weights)
    kernel_x = step * np.arange(-int(math.ceil(reach / step)), int(math.ceil(reach / step)) + 1)
    kern = np.exp(-0.5 * (kernel_x / sigma) ** 2) if sigma > 0 else (kernel_x == 0).astype(float)
    if res > 1:
        kern = np.convolve(kern, np.clip(1.0 - np.abs(kernel_x) / res, 0.0, None), mode="same")
    kern /= kern.sum()
    smooth = np.convolve(density, kern, mode="same")

    # Probability mass of each integer tick lag, then summed into histogram bins.
    lags = np.arange(lo, hi + res, res, dtype=float)
    mass = np.interp(lags, grid, smooth, left=0.0, right=0.0)
    background = 0.0
    if n_coincidences is None:
        rate, singles_a, singles_b = expected_rates(config)
        n_coincidences = rate * config.duration_s
        background = singles_a * singles_b * bin_ps * 1e-12 * config.duration_s
    mass *= n_coincidences / mass.sum()

    if tau_min_ps is None:
        center = config.correlator.center_ps if config.correlator.center_ps is not None else offset
        half = 0.5 * config.correlator.window_ps
        tau_min_ps, tau_max_ps = histogram_range(center, half, bin_ps)
    nbins = int(-(-(tau_max_ps - tau_min_ps) // bin_ps))
    idx = np.floor((lags - tau_min_ps) / bin_ps).astype(np.int64)
    inside = (idx >= 0) & (idx < nbins)
    counts = np.bincount(idx[inside], weights=mass[inside], minlength=nbins) + background
    return CorrelationHistogram(bin_ps, int(tau_min_ps), counts)


def histogram_range(center_ps, half_width_ps, bin_ps):
    """Bin-aligned ``(tau_min, tau_max)`` around a center, in whole picoseconds."""
    c = int(round(center_ps / bin_ps)) * bin_ps
    n_half = int(math.ceil(half_width_ps / bin_ps))
    return c - n_half * bin_ps, c + n_half * bin_ps


def predict_peak(config) -> float:
    """Delay of the fullest bin of the expected histogram, bulk latency included."""
    prof = predicted_profile(config, n_coincidences=1.0e6)
    return float(prof.centers[int(np.argmax(prof.counts))])


def spread_fwhm(config) -> float:
    """FWHM of the dispersive delay distribution alone.

    Flat spectrum: measured on the quadrature density histogram.
    Gaussian spectrum: 2√(2 ln 2) times its standard deviation.
    """
    dtau, w = _delay_samples(config)
    if config.source.spectral_shape == "gaussian":
        mean = np.sum(w * dtau)
        return float(FWHM_PER_SIGMA * math.sqrt(np.sum(w * (dtau - mean) ** 2)))
    span = np.ptp(dtau)
    if span <= 0:
        return 0.0
    density, edges = np.histogram(dtau, bins=256, weights=w)
    above = np.nonzero(density >= 0.5 * density.max())[0]
    return float(edges[above[-1] + 1] - edges[above[0]])


def quantization_variance(config) -> float:
    """Variance (ps²) added by flooring both timestamps and then binning the lags."""
    res = config.detector_signal.resolution_ps
    bin_ps = config.correlator.bin_width_ps
    return (res**2 + bin_ps**2) / 12.0


def predict_fwhm(config, method="profile") -> float:
    """Predicted fitted coincidence FWHM, ps.

    ``method="profile"`` fits the expected histogram. ``method="quadrature"`` adds
    the dispersive spread, the jitter floor and the quantization width in
    quadrature.
    """
    if method == "quadrature":
        floor = jitter_floor_fwhm(config.detector_signal, config.detector_idler, config.source.sigma0_ps)
        return math.sqrt(spread_fwhm(config) ** 2 + floor**2 + FWHM_PER_SIGMA**2 * quantization_variance(config))
    if method != "profile":
        raise ValueError(f"unknown method {method!r}")
    try:
        return fit_fwhm(predicted_profile(config)).fwhm_ps
    except FitError:
        # Too few expected counts for a fit; fall back to the background-free shape.
        return fit_fwhm(predicted_profile(config, n_coincidences=1.0e6)).fwhm_ps


@dataclass(frozen=True)
class Prediction:
    fwhm_ps: float
    quadrature_fwhm_ps: float
    peak_ps: float
    bulk_offset_ps: float
    spread_ps: float
    franson_sigma_ps: float

    def to_block(self) -> str:
        rows = [
            ("predicted_fwhm_ps", self.fwhm_ps),
            ("predicted_fwhm_quadrature_ps", self.quadrature_fwhm_ps),
            ("predicted_peak_ps", self.peak_ps - self.bulk_offset_ps),
            ("bulk_offset_ps", self.bulk_offset_ps),
            ("delay_spread_ps", self.spread_ps),
            ("franson_sigma_ps", self.franson_sigma_ps),
        ]
        return "".join(f"{k}={v:.6f}\n" for k, v in rows)


def predict(config) -> Prediction:
    bounds = delay_bounds(config.arm_signal, config.arm_idler, config.source, lambda_ref_nm=config.reference_nm)
    budget = dispersion_budget(config.arm_signal, config.arm_idler, config.source)
    return Prediction(
        fwhm_ps=predict_fwhm(config),
        quadrature_fwhm_ps=predict_fwhm(config, method="quadrature"),
        peak_ps=predict_peak(config),
        bulk_offset_ps=bulk_offset_ps(config),
        spread_ps=bounds.spread_ps,
        franson_sigma_ps=franson_width(budget),
    )
