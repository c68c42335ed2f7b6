"""Named scenarios that mirror the laboratory and field measurements.

``CALIBRATION`` is the committed spectral and fiber model used by every
preset. Presets size their pair rate to reach ``TARGET_COINCIDENCES`` in the
run duration, so each fit has plenty of counts.
"""

from __future__ import annotations

import numpy as np

from . import _rng
from .config import CorrelatorSettings, ExperimentConfig, FIBER_LENGTH, SweepSpec
from .detection import DetectorSpec
from .fiber import DEFAULT_ATTENUATION, FiberChain, FiberSegment, patch_cord
from .source import SourceSpec

CALIBRATION = {
    "spectral_shape": "flat",
    "window_full_width_nm": 50.0,
    # The photon in the dispersive arm is the long-wavelength partner.
    "signal_side": "long",
    "lambda0_nm": 1314.0,
    "s0_ps_per_nm2_km": 0.092,
}

TARGET_COINCIDENCES = 1.2e5
DEFAULT_SEED = 20190101
SWEEP_LENGTHS_KM = tuple(float(v) for v in range(1, 11))
LAMBDA0_RANGE_NM = (1302.0, 1322.0)

# Spans of the two deployed loops; the second is 26 m longer (128 ns of latency).
DEPLOYED_SEGMENTS_A_KM = (1.87, 2.41, 1.96, 2.28, 1.90)
DEPLOYED_SEGMENTS_B_KM = (2.05, 1.93, 2.36, 1.84, 2.266)
SPOOL_SEGMENTS_KM = (10.0, 20.0, 50.0)
SPOOL_LAMBDA0_NM = (1314.0, 1315.0, 1313.5)


def source() -> SourceSpec:
    return SourceSpec(
        spectral_shape=CALIBRATION["spectral_shape"],
        window_full_width_nm=CALIBRATION["window_full_width_nm"],
        signal_side=CALIBRATION["signal_side"],
    )


def detectors():
    """InGaAs APDs with 87 ps and 110 ps jitter on a 125 ps timestamping clock."""
    sig = DetectorSpec(jitter_fwhm_ps=87.0, efficiency=0.25, dark_count_rate_hz=0.0, dead_time_ps=0.0, resolution_ps=125)
    idl = DetectorSpec(jitter_fwhm_ps=110.0, efficiency=0.25, dark_count_rate_hz=0.0, dead_time_ps=0.0, resolution_ps=125)
    return sig, idl


def spool(length_km, lambda0_nm=None, attenuation=DEFAULT_ATTENUATION, label=None) -> FiberChain:
    lam0 = CALIBRATION["lambda0_nm"] if lambda0_nm is None else lambda0_nm
    seg = FiberSegment(length_km, lam0, CALIBRATION["s0_ps_per_nm2_km"], attenuation)
    return FiberChain((seg,), label or f"spool_{length_km:g}km")


def _rated(cfg: ExperimentConfig, target=TARGET_COINCIDENCES) -> ExperimentConfig:
    eta = (
        cfg.arm_signal.survival_probability
        * cfg.arm_idler.survival_probability
        * cfg.detector_signal.efficiency
        * cfg.detector_idler.efficiency
    )
    rate = float(f"{target / (eta * cfg.duration_s):.3g}")
    return cfg.replace(source=cfg.source.with_rate(rate))


def _experiment(name, arm_signal, arm_idler, seed, window_ps=20000, duration_s=1.0, notes=""):
    sig, idl = detectors()
    cfg = ExperimentConfig(
        source=source(),
        arm_signal=arm_signal,
        arm_idler=arm_idler,
        detector_signal=sig,
        detector_idler=idl,
        correlator=CorrelatorSettings(bin_width_ps=125, window_ps=window_ps),
        duration_s=duration_s,
        seed=DEFAULT_SEED if seed is None else seed,
        name=name,
        notes=notes,
    )
    return _rated(cfg)


def local(seed=None):
    return _experiment("local", patch_cord(), patch_cord(), seed, notes="about 4 m of fiber to each detector")


def asymmetric_10km(seed=None):
    return _experiment("asymmetric_10km", spool(10.0), patch_cord(), seed)


def _sweep(mode, seed):
    base = _experiment(f"{mode}_sweep", spool(1.0), patch_cord(), seed)
    # Size the rate for the longest (lossiest) point of the sweep.
    longest = spool(max(SWEEP_LENGTHS_KM))
    probe = base.replace(arm_signal=longest, arm_idler=longest if mode == "symmetric" else base.arm_idler)
    base = base.replace(source=_rated(probe).source)
    return SweepSpec(base, FIBER_LENGTH, SWEEP_LENGTHS_KM, mode)


def asymmetric_sweep(seed=None):
    return _sweep("asymmetric", seed)


def symmetric_sweep(seed=None):
    return _sweep("symmetric", seed)


def spool_chain() -> FiberChain:
    # Loss-free so the Monte-Carlo stays tractable: 80 km at O-band loss would
    # remove all but ~1e-6 of the pairs, and loss does not change widths here.
    segs = tuple(
        FiberSegment(L, lam0, CALIBRATION["s0_ps_per_nm2_km"], 0.0) for L, lam0 in zip(SPOOL_SEGMENTS_KM, SPOOL_LAMBDA0_NM)
    )
    return FiberChain(segs, "spools_10_20_50km")


def long_spools(seed=None):
    """Both photons through the same 80 km (10 + 20 + 50 km) spool chain."""
    chain = spool_chain()
    return _experiment("long_spools", chain, chain, seed, window_ps=40000)


def long_spools_one_arm(seed=None):
    return _experiment("long_spools_one_arm", spool_chain(), patch_cord(), seed, window_ps=100000)


def deployed_lambda0(seed, n_a=len(DEPLOYED_SEGMENTS_A_KM), n_b=len(DEPLOYED_SEGMENTS_B_KM)):
    """Per-segment zero-dispersion wavelengths of both deployed spans, drawn from the seed."""
    rng = _rng.substream(DEFAULT_SEED if seed is None else seed, _rng.PRESET, 0)
    lo, hi = LAMBDA0_RANGE_NM
    return np.round(rng.uniform(lo, hi, n_a), 4), np.round(rng.uniform(lo, hi, n_b), 4)


def deployed_chains(seed=None):
    sig, idl = deployed_lambda0(seed)
    s0 = CALIBRATION["s0_ps_per_nm2_km"]
    a = FiberChain(tuple(FiberSegment(L, float(l0), s0) for L, l0 in zip(DEPLOYED_SEGMENTS_A_KM, sig)), "deployed_a")
    b = FiberChain(tuple(FiberSegment(L, float(l0), s0) for L, l0 in zip(DEPLOYED_SEGMENTS_B_KM, idl)), "deployed_b")
    return a, b


def deployed_link(seed=None):
    """Each photon over its own five-segment deployed span."""
    a, b = deployed_chains(seed)
    return _experiment("deployed_link", a, b, seed)


def deployed_link_one_arm(seed=None):
    a, _ = deployed_chains(seed)
    return _experiment("deployed_link_one_arm", a, patch_cord(), seed)


PRESETS = {
    "local": local,
    "asymmetric_10km": asymmetric_10km,
    "asymmetric_sweep": asymmetric_sweep,
    "symmetric_sweep": symmetric_sweep,
    "long_spools": long_spools,
    "long_spools_one_arm": long_spools_one_arm,
    "deployed_link": deployed_link,
    "deployed_link_one_arm": deployed_link_one_arm,
}


def presets() -> dict:
    """Name → factory taking an optional seed."""
    return dict(PRESETS)


def get_preset(name, seed=None):
    try:
        factory = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return factory(seed)
