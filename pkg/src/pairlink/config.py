"""Scenario files.

Scenarios are INI files with explicit units in the key names. Example::

    [experiment]
    name = asymmetric_10km
    duration_s = 0.5
    seed = 7

    [source]
    pair_rate_hz = 2e6
    spectral_shape = flat

    [arm_signal]
    label = spool
    [arm_signal.segment.1]
    length_km = 10
    lambda0_nm = 1316

    [arm_idler.segment.1]
    length_km = 0.004

    [detector_signal]
    jitter_fwhm_ps = 87
    [detector_idler]
    jitter_fwhm_ps = 110

    [correlator]
    bin_width_ps = 125
    window_ps = 20000

An optional ``[sweep]`` section (``parameter``, ``values``, ``mode``) turns
the file into a sweep. ``auto`` selects a key's default.
"""

from __future__ import annotations

import configparser
import io
import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .detection import DetectorSpec
from .errors import ConfigError
from .fiber import FiberChain, FiberSegment, GVDSegment
from .source import SourceSpec


@dataclass(frozen=True)
class CorrelatorSettings:
    bin_width_ps: int = 125
    window_ps: int = 20000
    # None: center the histogram on the bulk-latency difference of the arms
    center_ps: Optional[float] = None
    # None: four fitted widths
    pair_window_ps: Optional[float] = None

    def __post_init__(self):
        if self.bin_width_ps <= 0 or int(self.bin_width_ps) != self.bin_width_ps:
            raise ConfigError("bin_width_ps must be a positive whole number")
        if self.window_ps <= 0:
            raise ConfigError("window_ps must be positive")
        if self.pair_window_ps is not None and self.pair_window_ps <= 0:
            raise ConfigError("pair_window_ps must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    source: SourceSpec
    arm_signal: FiberChain
    arm_idler: FiberChain
    detector_signal: DetectorSpec
    detector_idler: DetectorSpec
    correlator: CorrelatorSettings = field(default_factory=CorrelatorSettings)
    duration_s: float = 1.0
    seed: int = 0
    name: str = "experiment"
    output_dir: Optional[str] = None
    # Sample only pairs with at least one surviving photon (exact by Poisson thinning).
    loss_aware: bool = True
    # None: the degenerate wavelength
    lambda_ref_nm: Optional[float] = None
    notes: str = ""

    def __post_init__(self):
        if self.duration_s < 0:
            raise ConfigError("duration_s must be non-negative")
        if self.seed is None or int(self.seed) != self.seed:
            raise ConfigError("seed must be an explicit integer")

    @property
    def reference_nm(self) -> float:
        if self.lambda_ref_nm is None:
            return self.source.degenerate_wavelength_nm
        return self.lambda_ref_nm

    def replace(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


SWEEP_MODES = ("asymmetric", "symmetric")
FIBER_LENGTH = "fiber_length_km"


@dataclass(frozen=True)
class SweepSpec:
    """Runs ``base`` once per entry in ``values``.

    ``swept_parameter`` is either ``fiber_length_km`` or a dotted ``section.key`` path
    into the scenario file, for example ``source.sigma0_ps``. For ``fiber_length_km``,
    the signal arm's segments set the fiber design and are rescaled to each
    length. In ``asymmetric`` mode only the signal photon passes through that
    fiber. In ``symmetric`` mode both photons pass through it.
    """

    base: ExperimentConfig
    swept_parameter: str
    values: tuple
    mode: str = "asymmetric"

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not self.values:
            raise ConfigError("sweep needs at least one value")
        if self.mode not in SWEEP_MODES:
            raise ConfigError(f"sweep mode must be one of {SWEEP_MODES}")


# -- parsing -----------------------------------------------------------------

_SEGMENT = re.compile(r"^(arm_signal|arm_idler)\.segment\.(\d+)$")


def _opt(section, key, conv, default):
    if section is None or key not in section:
        return default
    raw = section[key].strip()
    if raw.lower() in ("", "auto", "none"):
        return default
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section.name}] {key} = {raw!r}: {exc}") from None


def _bool(raw):
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _int(raw):
    value = float(raw)
    if value != int(value):
        raise ValueError("expected an integer")
    return int(value)


def _dataclass_from_section(cls, section, convs):
    kwargs = {}
    for f in fields(cls):
        if f.name in convs:
            value = _opt(section, f.name, convs[f.name], None)
            if value is not None:
                kwargs[f.name] = value
    if section is not None:
        unknown = set(section.keys()) - set(convs)
        if unknown:
            raise ConfigError(f"[{section.name}] unknown keys: {sorted(unknown)}")
    return cls(**kwargs)


_SOURCE_KEYS = {
    "pump_wavelength_nm": float,
    "window_full_width_nm": float,
    "wdm_edge_nm": float,
    "spectral_shape": str,
    "spectral_fwhm_nm": float,
    "spectral_center_nm": float,
    "pair_rate_hz": float,
    "sigma0_ps": float,
    "signal_side": str,
}
_DETECTOR_KEYS = {
    "jitter_fwhm_ps": float,
    "efficiency": float,
    "dark_count_rate_hz": float,
    "dead_time_ps": float,
    "resolution_ps": _int,
}
_CORRELATOR_KEYS = {
    "bin_width_ps": _int,
    "window_ps": float,
    "center_ps": float,
    "pair_window_ps": float,
}
_SEGMENT_KEYS = {
    "kind",
    "length_km",
    "lambda0_nm",
    "s0_ps_per_nm2_km",
    "attenuation_db_per_km",
    "beta2_ps2_per_km",
}


def _segment(section):
    unknown = set(section.keys()) - _SEGMENT_KEYS
    if unknown:
        raise ConfigError(f"[{section.name}] unknown keys: {sorted(unknown)}")
    kind = _opt(section, "kind", str, "g652")
    length = _opt(section, "length_km", float, None)
    if length is None:
        raise ConfigError(f"[{section.name}] length_km is required")
    att = _opt(section, "attenuation_db_per_km", float, None)
    if kind == "g652":
        kwargs = {"length_km": length}
        for key in ("lambda0_nm", "s0_ps_per_nm2_km"):
            value = _opt(section, key, float, None)
            if value is not None:
                kwargs[key] = value
        if att is not None:
            kwargs["attenuation_db_per_km"] = att
        return FiberSegment(**kwargs)
    if kind == "gvd":
        beta2 = _opt(section, "beta2_ps2_per_km", float, None)
        if beta2 is None:
            raise ConfigError(f"[{section.name}] beta2_ps2_per_km is required for kind = gvd")
        return GVDSegment(length, beta2, 0.0 if att is None else att)
    raise ConfigError(f"[{section.name}] unknown segment kind {kind!r}")


def _chain(parser, arm):
    head = parser[arm] if parser.has_section(arm) else None
    seg_sections = sorted(
        (int(m.group(2)), name) for name in parser.sections() if (m := _SEGMENT.match(name)) and m.group(1) == arm
    )
    if not seg_sections:
        raise ConfigError(f"{arm} needs at least one [{arm}.segment.N] section")
    segments = tuple(_segment(parser[name]) for _, name in seg_sections)
    if head is not None:
        unknown = set(head.keys()) - {"label", "bulk_latency_ps"}
        if unknown:
            raise ConfigError(f"[{arm}] unknown keys: {sorted(unknown)}")
    label = _opt(head, "label", str, arm)
    latency = _opt(head, "bulk_latency_ps", float, None)
    return FiberChain(segments, label, latency)


def _read(text: str):
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return parser


def _experiment_from_parser(parser) -> ExperimentConfig:
    known = {"experiment", "source", "arm_signal", "arm_idler", "detector_signal", "detector_idler", "correlator", "sweep"}
    for name in parser.sections():
        if name not in known and not _SEGMENT.match(name):
            raise ConfigError(f"unknown section [{name}]")
    exp = parser["experiment"] if parser.has_section("experiment") else None
    if exp is None or "seed" not in exp:
        raise ConfigError("[experiment] seed is required")
    exp_keys = {"name", "duration_s", "seed", "output_dir", "loss_aware", "lambda_ref_nm", "notes"}
    unknown = set(exp.keys()) - exp_keys
    if unknown:
        raise ConfigError(f"[experiment] unknown keys: {sorted(unknown)}")
    get = parser.__getitem__
    has = parser.has_section
    return ExperimentConfig(
        source=_dataclass_from_section(SourceSpec, get("source") if has("source") else None, _SOURCE_KEYS),
        arm_signal=_chain(parser, "arm_signal"),
        arm_idler=_chain(parser, "arm_idler"),
        detector_signal=_dataclass_from_section(
            DetectorSpec, get("detector_signal") if has("detector_signal") else None, _DETECTOR_KEYS
        ),
        detector_idler=_dataclass_from_section(
            DetectorSpec, get("detector_idler") if has("detector_idler") else None, _DETECTOR_KEYS
        ),
        correlator=_dataclass_from_section(
            CorrelatorSettings, get("correlator") if has("correlator") else None, _CORRELATOR_KEYS
        ),
        duration_s=_opt(exp, "duration_s", float, 1.0),
        seed=_opt(exp, "seed", _int, None),
        name=_opt(exp, "name", str, "experiment"),
        output_dir=_opt(exp, "output_dir", str, None),
        loss_aware=_opt(exp, "loss_aware", _bool, True),
        lambda_ref_nm=_opt(exp, "lambda_ref_nm", float, None),
        notes=_opt(exp, "notes", str, ""),
    )


def parse_config(text: str):
    """Parse scenario text into an ExperimentConfig, or a SweepSpec if it has a [sweep] section."""
    parser = _read(text)
    base = _experiment_from_parser(parser)
    if not parser.has_section("sweep"):
        return base
    sw = parser["sweep"]
    unknown = set(sw.keys()) - {"parameter", "values", "mode"}
    if unknown:
        raise ConfigError(f"[sweep] unknown keys: {sorted(unknown)}")
    param = _opt(sw, "parameter", str, FIBER_LENGTH)
    raw_values = _opt(sw, "values", str, "")
    try:
        values = tuple(float(v) for v in raw_values.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"[sweep] values = {raw_values!r} is not a list of numbers") from None
    return SweepSpec(base, param, values, _opt(sw, "mode", str, "asymmetric"))


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text)


# -- writing -----------------------------------------------------------------


def _fmt(value):
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isfinite(value) and value == int(value) and abs(value) < 1e15:
            return str(int(value))
        return repr(value)
    return str(value)


def _segment_items(seg):
    if isinstance(seg, GVDSegment):
        return {
            "kind": "gvd",
            "length_km": seg.length_km,
            "beta2_ps2_per_km": seg.beta2_ps2_per_km,
            "attenuation_db_per_km": seg.attenuation_db_per_km,
        }
    return {
        "kind": "g652",
        "length_km": seg.length_km,
        "lambda0_nm": seg.lambda0_nm,
        "s0_ps_per_nm2_km": seg.s0_ps_per_nm2_km,
        "attenuation_db_per_km": seg.attenuation_db_per_km,
    }


def config_sections(cfg: ExperimentConfig) -> dict:
    """Ordered ``{section: {key: value}}`` view of a config, as written to disk."""
    out = {
        "experiment": {
            "name": cfg.name,
            "duration_s": cfg.duration_s,
            "seed": cfg.seed,
            "output_dir": cfg.output_dir,
            "loss_aware": cfg.loss_aware,
            "lambda_ref_nm": cfg.lambda_ref_nm,
        },
        "source": {f.name: getattr(cfg.source, f.name) for f in fields(SourceSpec)},
    }
    if cfg.notes:
        out["experiment"]["notes"] = cfg.notes
    for arm in ("arm_signal", "arm_idler"):
        chain = getattr(cfg, arm)
        out[arm] = {"label": chain.label, "bulk_latency_ps": chain.bulk_latency_ps}
        for k, seg in enumerate(chain.segments, start=1):
            out[f"{arm}.segment.{k}"] = _segment_items(seg)
    for det in ("detector_signal", "detector_idler"):
        spec = getattr(cfg, det)
        out[det] = {f.name: getattr(spec, f.name) for f in fields(DetectorSpec)}
    out["correlator"] = {f.name: getattr(cfg.correlator, f.name) for f in fields(CorrelatorSettings)}
    return out


def dump_config(cfg) -> str:
    base = cfg.base if isinstance(cfg, SweepSpec) else cfg
    sections = config_sections(base)
    if isinstance(cfg, SweepSpec):
        sections["sweep"] = {
            "parameter": cfg.swept_parameter,
            "values": ", ".join(_fmt(v) for v in cfg.values),
            "mode": cfg.mode,
        }
    buf = io.StringIO()
    for name, items in sections.items():
        buf.write(f"[{name}]\n")
        for key, value in items.items():
            buf.write(f"{key} = {_fmt(value)}\n")
        buf.write("\n")
    return buf.getvalue()


def with_path(cfg: ExperimentConfig, path: str, value) -> ExperimentConfig:
    """Copy of ``cfg`` with the dotted ``section.key`` set to ``value``.

    Segment keys use ``arm_signal.segment.N.key``.
    """
    section, _, key = path.rpartition(".")
    if not section or not key:
        raise ConfigError(f"parameter path {path!r} must look like section.key")
    sections = config_sections(cfg)
    if section not in sections or key not in sections[section]:
        raise ConfigError(f"no config entry {path!r}")
    sections[section][key] = value
    buf = io.StringIO()
    for name, items in sections.items():
        buf.write(f"[{name}]\n")
        for k, v in items.items():
            buf.write(f"{k} = {_fmt(v)}\n")
    return _experiment_from_parser(_read(buf.getvalue()))
