"""Chromatic dispersion and loss along an ordered chain of fiber segments.

Each photon is treated as a single sampled wavelength. Its dispersive delay is
found by integrating D(λ) from a reference wavelength. The G.652 three-term
model ``D(λ) = (S0/4)(λ − λ0⁴/λ³)`` has the closed-form antiderivative
``(S0/4)(λ²/2 + λ0⁴/(2λ²))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .constants import C_NM_PER_PS, DEFAULT_LATENCY_PS_PER_KM, angular_frequency
from .errors import ConfigError

DEFAULT_S0 = 0.092  # ps/(nm^2 km), G.652 / SMF-28e maximum slope
DEFAULT_ATTENUATION = 0.35  # dB/km, O-band
LAMBDA0_VALID_NM = (1250.0, 1400.0)


@dataclass(frozen=True)
class FiberSegment:
    length_km: float
    lambda0_nm: float = 1316.0
    s0_ps_per_nm2_km: float = DEFAULT_S0
    attenuation_db_per_km: float = DEFAULT_ATTENUATION
    lambda0_valid_nm: tuple = field(default=LAMBDA0_VALID_NM, compare=False, repr=False)

    def __post_init__(self):
        if not self.length_km > 0:
            raise ConfigError(f"segment length must be positive, got {self.length_km}")
        if not self.s0_ps_per_nm2_km > 0:
            raise ConfigError("dispersion slope s0 must be positive")
        if self.attenuation_db_per_km < 0:
            raise ConfigError("attenuation must be non-negative")
        lo, hi = self.lambda0_valid_nm
        if not lo <= self.lambda0_nm <= hi:
            raise ConfigError(f"lambda0 {self.lambda0_nm} nm outside validity band [{lo}, {hi}] nm")

    kind = "g652"

    def dispersion(self, lambda_nm):
        """D(λ) in ps/(nm km)."""
        lam = np.asarray(lambda_nm, dtype=float)
        out = 0.25 * self.s0_ps_per_nm2_km * (lam - self.lambda0_nm**4 / lam**3)
        return float(out) if out.ndim == 0 else out

    def _antiderivative(self, lam):
        return 0.25 * self.s0_ps_per_nm2_km * (0.5 * lam**2 + 0.5 * self.lambda0_nm**4 / lam**2)

    def group_delay(self, lambda_nm, lambda_ref_nm):
        """Delay of λ relative to λref accumulated over the segment, ps."""
        lam = np.asarray(lambda_nm, dtype=float)
        return self.length_km * (self._antiderivative(lam) - self._antiderivative(lambda_ref_nm))

    @property
    def loss_db(self):
        return self.length_km * self.attenuation_db_per_km


@dataclass(frozen=True)
class GVDSegment:
    """Segment with a constant group-velocity dispersion β2 and no higher orders.

    Its group delay is exactly linear in angular frequency. This is the
    regime where the width formula for entangled pairs is derived.
    """

    length_km: float
    beta2_ps2_per_km: float
    attenuation_db_per_km: float = 0.0

    kind = "gvd"

    def __post_init__(self):
        if not self.length_km > 0:
            raise ConfigError(f"segment length must be positive, got {self.length_km}")
        if self.attenuation_db_per_km < 0:
            raise ConfigError("attenuation must be non-negative")

    def dispersion(self, lambda_nm):
        lam = np.asarray(lambda_nm, dtype=float)
        out = -2.0 * math.pi * C_NM_PER_PS * self.beta2_ps2_per_km / lam**2
        return float(out) if out.ndim == 0 else out

    def group_delay(self, lambda_nm, lambda_ref_nm):
        omega = angular_frequency(np.asarray(lambda_nm, dtype=float))
        return self.length_km * self.beta2_ps2_per_km * (omega - angular_frequency(lambda_ref_nm))

    @property
    def loss_db(self):
        return self.length_km * self.attenuation_db_per_km


def dispersion_D(segment, lambda_nm):
    if np.any(np.asarray(lambda_nm) <= 0):
        raise ValueError("wavelength must be positive")
    return segment.dispersion(lambda_nm)


@dataclass(frozen=True)
class FiberChain:
    segments: tuple
    label: str = ""
    # None means the default of 4.9 µs per km of fiber.
    bulk_latency_ps: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ConfigError(f"fiber chain {self.label!r} has no segments")

    @property
    def total_length_km(self) -> float:
        return sum(s.length_km for s in self.segments)

    @property
    def total_loss_db(self) -> float:
        return sum(s.loss_db for s in self.segments)

    @property
    def survival_probability(self) -> float:
        return 10.0 ** (-self.total_loss_db / 10.0)

    @property
    def latency_ps(self) -> float:
        if self.bulk_latency_ps is not None:
            return self.bulk_latency_ps
        return self.total_length_km * DEFAULT_LATENCY_PS_PER_KM

    def __add__(self, other: "FiberChain") -> "FiberChain":
        latency = None
        if self.bulk_latency_ps is not None or other.bulk_latency_ps is not None:
            latency = self.latency_ps + other.latency_ps
        return FiberChain(self.segments + other.segments, f"{self.label}+{other.label}", latency)


def patch_cord(length_m: float = 4.0, lambda0_nm: float = 1316.0) -> FiberChain:
    """Short lab jumper: negligible dispersion, routes a photon straight to its detector."""
    return FiberChain((FiberSegment(length_m * 1e-3, lambda0_nm),), label=f"patch_{length_m:g}m")


def relative_group_delay(chain: FiberChain, lambda_nm, lambda_ref_nm):
    """Accumulated delay (ps) of λ relative to λref across the whole chain."""
    lam = np.asarray(lambda_nm, dtype=float)
    if np.any(lam <= 0) or lambda_ref_nm <= 0:
        raise ValueError("wavelengths must be positive")
    total = sum(seg.group_delay(lam, lambda_ref_nm) for seg in chain.segments)
    return float(total) if np.ndim(total) == 0 else total


def propagate(event_arrival_ps, lambda_nm, chain: FiberChain, lambda_ref_nm, rng):
    """Send photons through ``chain``.

    For scalar input, returns the arrival time, or ``None`` if the photon is lost.
    For array input, returns ``(arrival_ps, survived)`` with one entry per photon.
    """
    t = np.asarray(event_arrival_ps, dtype=float)
    arrival = t + chain.latency_ps + relative_group_delay(chain, lambda_nm, lambda_ref_nm)
    p = chain.survival_probability
    survived = np.ones(t.shape, dtype=bool) if p >= 1.0 else rng.random(t.shape) < p
    if t.ndim == 0:
        return float(arrival) if survived else None
    return arrival, survived


def chain_from_rows(rows: Sequence[Sequence[float]], label: str = "", bulk_latency_ps=None) -> FiberChain:
    """Build a chain from ``(length_km, lambda0_nm, s0, attenuation)`` rows."""
    return FiberChain(tuple(FiberSegment(*map(float, r)) for r in rows), label, bulk_latency_ps)
