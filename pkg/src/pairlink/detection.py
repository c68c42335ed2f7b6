"""Detector model: efficiency, jitter, dark counts, quantization, dead time."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _rng
from ._kernels import dead_time_mask
from .constants import FWHM_PER_SIGMA
from .errors import ConfigError


@dataclass(frozen=True)
class DetectorSpec:
    jitter_fwhm_ps: float = 87.0
    efficiency: float = 1.0
    dark_count_rate_hz: float = 0.0
    dead_time_ps: float = 10e6
    resolution_ps: int = 125

    def __post_init__(self):
        for name in ("jitter_fwhm_ps", "efficiency", "dark_count_rate_hz", "dead_time_ps"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.efficiency > 1:
            raise ConfigError("efficiency must not exceed 1")
        if int(self.resolution_ps) != self.resolution_ps or self.resolution_ps <= 0:
            raise ConfigError("resolution_ps must be a positive whole number of picoseconds")
        object.__setattr__(self, "resolution_ps", int(self.resolution_ps))

    @property
    def jitter_sigma_ps(self) -> float:
        return self.jitter_fwhm_ps / FWHM_PER_SIGMA


@dataclass(frozen=True)
class TimestampStream:
    """Detection times of one channel as integer ticks of ``resolution_ps``."""

    channel_id: int
    ticks: np.ndarray
    resolution_ps: int

    def __post_init__(self):
        object.__setattr__(self, "ticks", np.ascontiguousarray(self.ticks, dtype=np.int64))

    def __len__(self):
        return len(self.ticks)

    def times_ps(self) -> np.ndarray:
        return self.ticks * np.int64(self.resolution_ps)

    def shifted(self, n_ticks: int) -> "TimestampStream":
        return TimestampStream(self.channel_id, self.ticks + np.int64(n_ticks), self.resolution_ps)

    def is_strictly_sorted(self) -> bool:
        return bool(np.all(np.diff(self.ticks) > 0))


def detect(arrivals_ps, spec: DetectorSpec, duration_s, seed, channel_id=0, return_origin=False):
    """Turn photon arrival times into a timestamp stream.

    ``arrivals_ps`` must be sorted. With ``return_origin=True``, also returns the
    index into ``arrivals_ps`` of every output tick. Dark counts get index -1.
    """
    rng = _rng.substream(seed, _rng.DETECT, channel_id)
    t = np.asarray(arrivals_ps, dtype=float)
    origin = np.arange(len(t), dtype=np.int64)

    if spec.efficiency < 1.0:
        kept = rng.random(len(t)) < spec.efficiency
        t, origin = t[kept], origin[kept]
    if spec.jitter_fwhm_ps > 0:
        t = t + rng.normal(0.0, spec.jitter_sigma_ps, len(t))

    if spec.dark_count_rate_hz > 0 and duration_s > 0:
        n_dark = rng.poisson(spec.dark_count_rate_hz * duration_s)
        dark = rng.uniform(0.0, duration_s * 1e12, n_dark)
        t = np.concatenate([t, dark])
        origin = np.concatenate([origin, np.full(n_dark, -1, dtype=np.int64)])

    ticks = np.floor(t / spec.resolution_ps).astype(np.int64)
    order = np.argsort(ticks, kind="stable")
    ticks, origin = ticks[order], origin[order]
    valid = ticks >= 0
    ticks, origin = ticks[valid], origin[valid]

    keep = dead_time_mask(ticks, spec.resolution_ps, float(spec.dead_time_ps))
    stream = TimestampStream(channel_id, ticks[keep], spec.resolution_ps)
    if return_origin:
        return stream, origin[keep]
    return stream


def jitter_floor_fwhm(spec_a: DetectorSpec, spec_b: DetectorSpec, sigma0_ps: float = 0.0) -> float:
    """Dispersion-free coincidence FWHM from detector jitter plus pair emission spread.

    Quantization is excluded.
    """
    sigma0_fwhm = FWHM_PER_SIGMA * sigma0_ps
    return math.sqrt(spec_a.jitter_fwhm_ps**2 + spec_b.jitter_fwhm_ps**2 + sigma0_fwhm**2)
