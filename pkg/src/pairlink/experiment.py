"""End-to-end runs: emission → fiber → detection → correlation → fit → report."""

from __future__ import annotations

import logging
import math
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import stats

from . import _rng, __version__
from .analytics import Prediction, bulk_offset_ps, histogram_range, predict
from .config import FIBER_LENGTH, ExperimentConfig, SweepSpec, dump_config, with_path
from .correlator import CorrelationHistogram, PeakFit, cross_correlate, find_peak, fit_fwhm, pair_events
from .detection import TimestampStream, detect, jitter_floor_fwhm
from .errors import ConfigError, FitError
from .fiber import FiberChain, FiberSegment, GVDSegment, propagate, relative_group_delay
from .source import sample_emissions
from .tagfile import write_ptag

log = logging.getLogger(__name__)


@dataclass
class SimulationResult:
    """Raw products of one run, before any file output."""

    stream_signal: TimestampStream
    stream_idler: TimestampStream
    # index of the emitted pair behind each detection, -1 for dark counts
    origin_signal: np.ndarray
    origin_idler: np.ndarray
    n_pairs: int


@dataclass
class SummaryReport:
    name: str
    seed: int
    duration_s: float
    pair_rate_hz: float
    simulated_pairs: int
    singles_signal: int
    singles_idler: int
    coincidences: int
    accidental_estimate: int
    bulk_offset_ps: float
    tau_peak_ps: Optional[float]
    fit: Optional[PeakFit]
    prediction: Prediction
    fit_error: Optional[str] = None
    histogram: Optional[CorrelationHistogram] = field(default=None, repr=False)
    segment_lambda0_nm: dict = field(default_factory=dict)

    @property
    def fwhm_ps(self) -> float:
        return self.fit.fwhm_ps if self.fit is not None else float("nan")

    @property
    def fwhm_stderr_ps(self) -> float:
        return self.fit.fwhm_stderr_ps if self.fit is not None else float("nan")

    def to_block(self) -> str:
        peak = float("nan") if self.tau_peak_ps is None else self.tau_peak_ps - self.bulk_offset_ps
        rows = [
            ("name", self.name),
            ("seed", self.seed),
            ("duration_s", f"{self.duration_s:.6f}"),
            ("pair_rate_hz", f"{self.pair_rate_hz:.6f}"),
            ("simulated_pairs", self.simulated_pairs),
            ("singles_signal", self.singles_signal),
            ("singles_idler", self.singles_idler),
            ("coincidences", self.coincidences),
            ("accidental_estimate", self.accidental_estimate),
            ("bulk_offset_ps", f"{self.bulk_offset_ps:.6f}"),
            ("tau_peak_ps", f"{peak:.6f}"),
            ("fwhm_ps", f"{self.fwhm_ps:.6f}"),
            ("fwhm_stderr_ps", f"{self.fwhm_stderr_ps:.6f}"),
            ("predicted_fwhm_ps", f"{self.prediction.fwhm_ps:.6f}"),
        ]
        for arm, values in self.segment_lambda0_nm.items():
            rows.append((f"{arm}_lambda0_nm", " ".join(f"{v:.4f}" for v in values)))
        if self.fit_error:
            rows.append(("fit_error", self.fit_error))
        return "".join(f"{k}={v}\n" for k, v in rows)


def _arm_arrivals(t_ps, lam, chain: FiberChain, ref_nm):
    return t_ps + chain.latency_ps + relative_group_delay(chain, lam, ref_nm)


def simulate(config: ExperimentConfig, workers=1) -> SimulationResult:
    """Monte-Carlo up to the two timestamp streams."""
    src = config.source
    a, b = config.arm_signal, config.arm_idler
    ref = config.reference_nm
    p_a, p_b = a.survival_probability, b.survival_probability
    surv_rng = _rng.substream(config.seed, _rng.SURVIVAL)

    if config.loss_aware:
        # Pairs with at least one surviving photon form a thinned Poisson process;
        # the survival pattern is then drawn conditionally on that.
        q = 1.0 - (1.0 - p_a) * (1.0 - p_b)
        events = sample_emissions(src, config.duration_s, config.seed, rate_hz=src.pair_rate_hz * q, workers=workers)
        u = surv_rng.random(len(events)) * q
        both = p_a * p_b
        keep_a = u < p_a
        keep_b = (u < both) | (u >= p_a)
        t_a = _arm_arrivals(events.t_emit_ps + events.dt_pair_ps, events.lambda_signal_nm, a, ref)
        t_b = _arm_arrivals(events.t_emit_ps, events.lambda_idler_nm, b, ref)
    else:
        events = sample_emissions(src, config.duration_s, config.seed, workers=workers)
        t_a, keep_a = propagate(events.t_emit_ps + events.dt_pair_ps, events.lambda_signal_nm, a, ref, surv_rng)
        t_b, keep_b = propagate(events.t_emit_ps, events.lambda_idler_nm, b, ref, surv_rng)

    idx = np.arange(len(events), dtype=np.int64)
    streams, origins = [], []
    for channel, (t, keep, det) in enumerate(
        ((t_a, keep_a, config.detector_signal), (t_b, keep_b, config.detector_idler))
    ):
        t, src_idx = t[keep], idx[keep]
        order = np.argsort(t, kind="stable")
        stream, origin = detect(t[order], det, config.duration_s, config.seed, channel, return_origin=True)
        streams.append(stream)
        origins.append(np.where(origin >= 0, src_idx[order][np.maximum(origin, 0)], -1))
    return SimulationResult(streams[0], streams[1], origins[0], origins[1], len(events))


def _histogram_window(config: ExperimentConfig):
    c = config.correlator
    center = c.center_ps if c.center_ps is not None else bulk_offset_ps(config)
    return histogram_range(center, 0.5 * c.window_ps, c.bin_width_ps)


def _lambda0_listing(config):
    out = {}
    for arm in ("arm_signal", "arm_idler"):
        segs = getattr(config, arm).segments
        out[arm] = [s.lambda0_nm for s in segs if isinstance(s, FiberSegment)]
    return out


def analyze(config: ExperimentConfig, sim: SimulationResult, workers=1) -> SummaryReport:
    c = config.correlator
    tau_min, tau_max = _histogram_window(config)
    hist = cross_correlate(sim.stream_signal, sim.stream_idler, c.bin_width_ps, tau_min, tau_max, workers=workers)
    prediction = predict(config)
    fit, tau_peak, error = None, None, None
    try:
        tau_peak = find_peak(hist)
        fit = fit_fwhm(hist)
    except FitError as exc:
        error = str(exc)
    coincidences = accidentals = 0
    if tau_peak is not None:
        if c.pair_window_ps is not None:
            window = c.pair_window_ps
        elif fit is not None:
            window = 4.0 * fit.fwhm_ps
        else:
            window = 4.0 * jitter_floor_fwhm(config.detector_signal, config.detector_idler)
        center = fit.center_ps if fit is not None else tau_peak
        pairing = pair_events(sim.stream_signal, sim.stream_idler, center, max(window, c.bin_width_ps))
        coincidences, accidentals = len(pairing), pairing.accidental_estimate
    return SummaryReport(
        name=config.name,
        seed=config.seed,
        duration_s=config.duration_s,
        pair_rate_hz=config.source.pair_rate_hz,
        simulated_pairs=sim.n_pairs,
        singles_signal=len(sim.stream_signal),
        singles_idler=len(sim.stream_idler),
        coincidences=coincidences,
        accidental_estimate=accidentals,
        bulk_offset_ps=bulk_offset_ps(config),
        tau_peak_ps=tau_peak,
        fit=fit,
        prediction=prediction,
        fit_error=error,
        histogram=hist,
        segment_lambda0_nm=_lambda0_listing(config),
    )


def _run_log(config: ExperimentConfig, workers: int) -> str:
    import numba
    import scipy

    lines = [
        f"pairlink {__version__}",
        f"python {platform.python_version()}",
        f"numpy {np.__version__}",
        f"scipy {scipy.__version__}",
        f"numba {numba.__version__}",
        f"seed {config.seed}",
        f"loss_aware {config.loss_aware}",
    ]
    return "\n".join(lines) + "\n"


def write_outputs(config: ExperimentConfig, sim: SimulationResult, report: SummaryReport, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(dump_config(config))
    write_ptag(out / "signal.ptag", sim.stream_signal)
    write_ptag(out / "idler.ptag", sim.stream_idler)
    report.histogram.to_csv(out / "histogram.csv")
    (out / "fit.txt").write_text(report.fit.to_block() if report.fit else f"error={report.fit_error}\n")
    (out / "prediction.txt").write_text(report.prediction.to_block())
    (out / "summary.txt").write_text(report.to_block())
    (out / "run.log").write_text(_run_log(config, 1))
    return out


def run_experiment(config: ExperimentConfig, output_dir=None, workers=1) -> SummaryReport:
    """Simulate and analyze one scenario, writing files if an output directory is known.

    Results are bit-identical for a given seed whatever the value of ``workers``.
    """
    log.info("running %s (seed %d, %.3g s)", config.name, config.seed, config.duration_s)
    sim = simulate(config, workers=workers)
    report = analyze(config, sim, workers=workers)
    out = output_dir if output_dir is not None else config.output_dir
    if out is not None:
        write_outputs(config, sim, report, out)
    return report


# -- sweeps ------------------------------------------------------------------


def point_seed(base_seed: int, index: int) -> int:
    return int(_rng.substream(base_seed, _rng.PRESET, 1000 + index).integers(0, 2**31 - 1))


def _scaled_chain(template: FiberChain, length_km: float, label: str) -> FiberChain:
    total = template.total_length_km
    segs = []
    for s in template.segments:
        new_len = s.length_km * length_km / total
        if isinstance(s, GVDSegment):
            segs.append(GVDSegment(new_len, s.beta2_ps2_per_km, s.attenuation_db_per_km))
        else:
            segs.append(FiberSegment(new_len, s.lambda0_nm, s.s0_ps_per_nm2_km, s.attenuation_db_per_km))
    return FiberChain(tuple(segs), label)


def sweep_point(sweep: SweepSpec, index: int) -> ExperimentConfig:
    value = sweep.values[index]
    base = sweep.base
    if sweep.swept_parameter == FIBER_LENGTH:
        fiber = _scaled_chain(base.arm_signal, value, f"{value:g}km")
        idler = fiber if sweep.mode == "symmetric" else base.arm_idler
        cfg = base.replace(arm_signal=fiber, arm_idler=idler)
    else:
        cfg = with_path(base, sweep.swept_parameter, value)
    return cfg.replace(
        seed=point_seed(base.seed, index),
        name=f"{base.name}_{index:02d}",
        output_dir=None,
    )


@dataclass
class SweepReport:
    values: list
    fwhm_ps: list
    fwhm_stderr_ps: list
    predicted_fwhm_ps: list
    reports: list = field(repr=False)
    slope: float = float("nan")
    slope_stderr: float = float("nan")
    intercept: float = float("nan")
    r_squared: float = float("nan")

    def to_csv(self, path=None) -> str:
        lines = ["length_km,fwhm_ps,fwhm_stderr_ps"]
        for v, f, e in zip(self.values, self.fwhm_ps, self.fwhm_stderr_ps):
            lines.append(f"{v:.6f},{f:.6f},{e:.6f}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    def to_block(self) -> str:
        rows = [
            ("slope_ps_per_unit", self.slope),
            ("slope_stderr", self.slope_stderr),
            ("intercept_ps", self.intercept),
            ("r_squared", self.r_squared),
        ]
        return "".join(f"{k}={v:.6f}\n" for k, v in rows)


def fit_line(x, y):
    """Ordinary least-squares line: ``(slope, slope_stderr, intercept, r_squared)``."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    if len(x) < 3:
        raise FitError(f"need at least 3 valid sweep points for a line fit, have {len(x)}")
    if np.ptp(x) == 0:
        # No spread in x: report the scatter of y with a zero slope estimate unavailable.
        return float("nan"), float("nan"), float(np.mean(y)), float("nan")
    res = stats.linregress(x, y)
    return float(res.slope), float(res.stderr), float(res.intercept), float(res.rvalue**2)


def run_sweep(sweep: SweepSpec, output_dir=None, workers=1) -> SweepReport:
    if len(sweep.values) < 3:
        raise ConfigError("a sweep needs at least 3 points")
    configs = [sweep_point(sweep, i) for i in range(len(sweep.values))]
    out = Path(output_dir) if output_dir is not None else (Path(sweep.base.output_dir) if sweep.base.output_dir else None)

    def job(i):
        point_dir = out / f"point_{i:02d}" if out is not None else None
        return run_experiment(configs[i], point_dir)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(job, range(len(configs))))
    else:
        reports = [job(i) for i in range(len(configs))]

    fwhm = [r.fwhm_ps for r in reports]
    report = SweepReport(
        values=list(sweep.values),
        fwhm_ps=fwhm,
        fwhm_stderr_ps=[r.fwhm_stderr_ps for r in reports],
        predicted_fwhm_ps=[r.prediction.fwhm_ps for r in reports],
        reports=reports,
    )
    report.slope, report.slope_stderr, report.intercept, report.r_squared = fit_line(sweep.values, fwhm)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(dump_config(sweep))
        report.to_csv(out / "sweep.csv")
        (out / "slope.txt").write_text(report.to_block())
    return report
