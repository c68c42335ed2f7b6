"""Photon-pair emission model.

Pairs come from a monochromatic pump, so the signal and idler frequencies
always add up to the pump frequency. A bandpass window around the degenerate
wavelength and a WDM edge split each pair into two bands. Emission times
follow a homogeneous Poisson process. Within a pair, the signal-minus-idler
emission offset is Gaussian with standard deviation ``sigma0_ps``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterator, Optional

import numpy as np
from scipy.special import ndtr, ndtri

from . import _rng
from .constants import C_NM_PER_PS, FWHM_PER_SIGMA, angular_frequency, wavelength_from_angular
from .errors import ConfigError

SHAPES = ("flat", "gaussian")
SIDES = ("short", "long")

# Emission sampling is chunked in time; the chunk length is fixed so results
# never depend on how many workers process the chunks.
CHUNK_DURATION_S = 0.1


def conjugate_wavelength(lambda_one_nm, pump_nm):
    """Wavelength of the partner photon, ``1/λ = 1/pump − 1/lambda_one``.

    Works on scalars and arrays. Raises ``ValueError`` if ``lambda_one_nm <= pump_nm``,
    because then the partner would need zero or negative frequency.
    """
    lam = np.asarray(lambda_one_nm, dtype=float)
    if np.any(lam <= pump_nm):
        raise ValueError(f"no conjugate photon for {lambda_one_nm} nm with a {pump_nm} nm pump")
    out = 1.0 / (1.0 / pump_nm - 1.0 / lam)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SourceSpec:
    pump_wavelength_nm: float = 658.0
    window_full_width_nm: float = 50.0
    wdm_edge_nm: Optional[float] = None
    spectral_shape: str = "flat"
    # gaussian only: FWHM in wavelength around spectral_center_nm. When unset the
    # width is the transform limit of a sigma0_ps coherence time.
    spectral_fwhm_nm: Optional[float] = None
    spectral_center_nm: Optional[float] = None
    pair_rate_hz: float = 1.0e6
    sigma0_ps: float = 0.1
    signal_side: str = "short"

    def __post_init__(self):
        if self.pump_wavelength_nm <= 0:
            raise ConfigError("pump_wavelength_nm must be positive")
        if self.window_full_width_nm <= 0:
            raise ConfigError("window_full_width_nm must be positive")
        if self.spectral_shape not in SHAPES:
            raise ConfigError(f"spectral_shape must be one of {SHAPES}, got {self.spectral_shape!r}")
        if self.signal_side not in SIDES:
            raise ConfigError(f"signal_side must be one of {SIDES}, got {self.signal_side!r}")
        if not self.sigma0_ps > 0:
            raise ConfigError("sigma0_ps must be positive")
        if not self.pair_rate_hz > 0:
            raise ConfigError("pair_rate_hz must be positive")
        lo, hi = self.window_nm
        if not lo < self.edge_nm < hi:
            raise ConfigError(f"wdm_edge_nm {self.edge_nm} lies outside the window [{lo}, {hi}]")
        if self.spectral_fwhm_nm is not None and not self.spectral_fwhm_nm > 0:
            raise ConfigError("spectral_fwhm_nm must be positive")

    @property
    def degenerate_wavelength_nm(self) -> float:
        return 2.0 * self.pump_wavelength_nm

    @property
    def edge_nm(self) -> float:
        return self.degenerate_wavelength_nm if self.wdm_edge_nm is None else self.wdm_edge_nm

    @property
    def window_nm(self) -> tuple[float, float]:
        half = 0.5 * self.window_full_width_nm
        return self.degenerate_wavelength_nm - half, self.degenerate_wavelength_nm + half

    def conjugate(self, lambda_nm):
        return conjugate_wavelength(lambda_nm, self.pump_wavelength_nm)

    def signal_band(self) -> tuple[float, float]:
        """Signal wavelengths whose pair has both photons in the window and in their own WDM band."""
        w_lo, w_hi = self.window_nm
        edge = self.edge_nm
        conj = self.conjugate
        if self.signal_side == "short":
            lo, hi = max(w_lo, conj(w_hi)), min(edge, conj(edge))
        else:
            lo, hi = max(edge, conj(edge)), min(w_hi, conj(w_lo))
        if not lo < hi:
            raise ConfigError("signal band is empty after applying the window and WDM edge")
        return lo, hi

    def idler_band(self) -> tuple[float, float]:
        lo, hi = self.signal_band()
        return self.conjugate(hi), self.conjugate(lo)

    def signal_center_nm(self) -> float:
        """Center used by the gaussian shape; defaults to the band's frequency midpoint."""
        if self.spectral_center_nm is not None:
            return self.spectral_center_nm
        lo, hi = self.signal_band()
        return wavelength_from_angular(0.5 * (angular_frequency(lo) + angular_frequency(hi)))

    def gaussian_sigma_omega(self) -> float:
        """Standard deviation of the signal angular frequency (rad/ps) for the gaussian shape."""
        if self.spectral_fwhm_nm is None:
            # Transform-limited wavepacket with field envelope exp(-t^2 / 2 sigma0^2).
            return 1.0 / (math.sqrt(2.0) * self.sigma0_ps)
        lam = self.signal_center_nm()
        return 2.0 * math.pi * C_NM_PER_PS * self.spectral_fwhm_nm / lam**2 / FWHM_PER_SIGMA

    def signal_density(self, lambda_nm):
        """Unnormalized spectral density of the signal wavelength (per nm)."""
        lam = np.asarray(lambda_nm, dtype=float)
        lo, hi = self.signal_band()
        inside = (lam >= lo) & (lam <= hi)
        if self.spectral_shape == "flat":
            return inside.astype(float)
        omega = angular_frequency(lam)
        w0 = angular_frequency(self.signal_center_nm())
        s = self.gaussian_sigma_omega()
        # Jacobian d(omega)/d(lambda) converts the frequency-domain gaussian to per-nm.
        return inside * np.exp(-0.5 * ((omega - w0) / s) ** 2) * omega / lam

    def with_rate(self, pair_rate_hz: float) -> "SourceSpec":
        return replace(self, pair_rate_hz=pair_rate_hz)


@dataclass(frozen=True)
class PhotonPairEvent:
    t_emit_ps: float
    lambda_signal_nm: float
    lambda_idler_nm: float
    dt_pair_ps: float


@dataclass(frozen=True)
class PairBatch:
    """Column store of emitted pairs, sorted by emission time."""

    t_emit_ps: np.ndarray
    lambda_signal_nm: np.ndarray
    lambda_idler_nm: np.ndarray
    dt_pair_ps: np.ndarray

    def __len__(self):
        return len(self.t_emit_ps)

    def __getitem__(self, i) -> PhotonPairEvent:
        return PhotonPairEvent(
            float(self.t_emit_ps[i]),
            float(self.lambda_signal_nm[i]),
            float(self.lambda_idler_nm[i]),
            float(self.dt_pair_ps[i]),
        )

    def __iter__(self) -> Iterator[PhotonPairEvent]:
        for i in range(len(self)):
            yield self[i]

    def take(self, mask_or_index) -> "PairBatch":
        return PairBatch(
            self.t_emit_ps[mask_or_index],
            self.lambda_signal_nm[mask_or_index],
            self.lambda_idler_nm[mask_or_index],
            self.dt_pair_ps[mask_or_index],
        )

    @classmethod
    def concatenate(cls, batches) -> "PairBatch":
        batches = list(batches)
        if not batches:
            empty = np.empty(0)
            return cls(empty, empty.copy(), empty.copy(), empty.copy())
        return cls(*(np.concatenate([getattr(b, f) for b in batches]) for f in _FIELDS))


_FIELDS = ("t_emit_ps", "lambda_signal_nm", "lambda_idler_nm", "dt_pair_ps")


def _sample_signal(spec: SourceSpec, rng, n):
    lo, hi = spec.signal_band()
    if spec.spectral_shape == "flat":
        return rng.uniform(lo, hi, n)
    # Truncated normal in angular frequency via the inverse CDF.
    w0 = angular_frequency(spec.signal_center_nm())
    s = spec.gaussian_sigma_omega()
    a = ndtr((angular_frequency(hi) - w0) / s)
    b = ndtr((angular_frequency(lo) - w0) / s)
    if not b > a:
        raise ConfigError("gaussian spectrum has no weight inside the signal band")
    u = rng.uniform(a, b, n)
    return wavelength_from_angular(w0 + s * ndtri(u))


def _sample_chunk(spec: SourceSpec, rate_hz, seed, index, t0_ps, t1_ps):
    rng = _rng.substream(seed, _rng.EMISSION, index)
    n = rng.poisson(rate_hz * (t1_ps - t0_ps) * 1e-12)
    t = np.sort(rng.uniform(t0_ps, t1_ps, n))
    lam_s = _sample_signal(spec, rng, n)
    lam_i = spec.conjugate(lam_s) if n else np.empty(0)
    dt = rng.normal(0.0, spec.sigma0_ps, n)
    return PairBatch(t, lam_s, np.asarray(lam_i, dtype=float), dt)


def sample_emissions(spec: SourceSpec, duration_s, seed, *, rate_hz=None, workers=1) -> PairBatch:
    """Sample every pair emitted during ``[0, duration_s)``.

    ``rate_hz`` overrides ``spec.pair_rate_hz``. The loss-aware pipeline uses it to
    sample only the thinned process of pairs that have a surviving photon.
    Output is identical for any ``workers`` value.
    """
    if duration_s < 0:
        raise ValueError("duration_s must be non-negative")
    spec.signal_band()  # raises ConfigError early on an empty band
    rate = spec.pair_rate_hz if rate_hz is None else rate_hz
    total_ps = duration_s * 1e12
    chunk_ps = CHUNK_DURATION_S * 1e12
    n_chunks = int(math.ceil(total_ps / chunk_ps)) if total_ps > 0 else 0
    bounds = [(k, k * chunk_ps, min((k + 1) * chunk_ps, total_ps)) for k in range(n_chunks)]

    def job(b):
        return _sample_chunk(spec, rate, seed, *b)

    if workers > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, bounds))
    else:
        parts = [job(b) for b in bounds]
    return PairBatch.concatenate(parts)
