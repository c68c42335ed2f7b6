"""Monte-Carlo and analytic tools for entangled photon pairs sent over dispersive fiber."""

__version__ = "0.1.0"

from .analytics import (
    DelayBounds,
    DispersionBudget,
    beta2_from_D,
    delay_bounds,
    franson_width,
    predict,
    predict_fwhm,
    predict_peak,
)
from .config import CorrelatorSettings, ExperimentConfig, SweepSpec, dump_config, load_config, parse_config
from .correlator import CorrelationHistogram, PeakFit, cross_correlate, find_peak, fit_fwhm, pair_events
from .detection import DetectorSpec, TimestampStream, detect, jitter_floor_fwhm
from .errors import ConfigError, FitError
from .experiment import run_experiment, run_sweep
from .fiber import FiberChain, FiberSegment, GVDSegment, dispersion_D, patch_cord, propagate, relative_group_delay
from .source import PhotonPairEvent, SourceSpec, conjugate_wavelength, sample_emissions
