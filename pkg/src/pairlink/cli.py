"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime or fit error.
``PAIRLINK_OUTPUT_DIR`` sets the default output directory.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .analytics import predict
from .config import ExperimentConfig, SweepSpec, load_config
from .correlator import cross_correlate, find_peak, fit_fwhm
from .errors import ConfigError, FitError
from .experiment import run_experiment, run_sweep
from .presets import get_preset, presets
from .tagfile import TagFileError, read_ptag

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
ENV_OUTPUT = "PAIRLINK_OUTPUT_DIR"


def _output_dir(explicit, cfg_dir, name):
    if explicit:
        return Path(explicit)
    if cfg_dir:
        return Path(cfg_dir)
    return Path(os.environ.get(ENV_OUTPUT, "runs")) / name


def _run_one(cfg: ExperimentConfig, out, workers):
    report = run_experiment(cfg, out, workers=workers)
    sys.stdout.write(report.to_block())
    print(f"outputs: {out}", file=sys.stderr)
    if report.fit_error:
        print(f"error: {report.fit_error}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _run_sweep(sweep: SweepSpec, out, workers):
    report = run_sweep(sweep, out, workers=workers)
    sys.stdout.write(report.to_csv())
    sys.stdout.write(report.to_block())
    print(f"outputs: {out}", file=sys.stderr)
    return EXIT_OK


def cmd_run(args):
    cfg = load_config(args.config)
    if isinstance(cfg, SweepSpec):
        raise ConfigError(f"{args.config} contains a [sweep] section; use 'sweep'")
    return _run_one(cfg, _output_dir(args.out, cfg.output_dir, cfg.name), args.workers)


def cmd_sweep(args):
    sweep = load_config(args.config)
    if not isinstance(sweep, SweepSpec):
        raise ConfigError(f"{args.config} has no [sweep] section")
    return _run_sweep(sweep, _output_dir(args.out, sweep.base.output_dir, sweep.base.name), args.workers)


def cmd_preset(args):
    if args.list:
        for name in presets():
            print(name)
        return EXIT_OK
    if not args.name:
        raise ConfigError("preset name required (or --list)")
    try:
        cfg = get_preset(args.name, args.seed)
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from None
    if isinstance(cfg, SweepSpec):
        return _run_sweep(cfg, _output_dir(args.out, None, cfg.base.name), args.workers)
    return _run_one(cfg, _output_dir(args.out, None, cfg.name), args.workers)


def cmd_correlate(args):
    a = read_ptag(args.file_a, args.channel_a)
    b = read_ptag(args.file_b, args.channel_b)
    half = 0.5 * args.window_ps
    hist = cross_correlate(a, b, args.bin_ps, args.center_ps - half, args.center_ps + half)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        hist.to_csv(out / "histogram.csv")
    else:
        sys.stdout.write(hist.to_csv())
    peak = find_peak(hist)
    fit = fit_fwhm(hist)
    if args.out:
        (Path(args.out) / "fit.txt").write_text(fit.to_block())
    print(f"tau_peak_ps={peak:.6f}", file=sys.stderr)
    sys.stderr.write(fit.to_block())
    return EXIT_OK


def cmd_predict(args):
    cfg = load_config(args.config)
    if isinstance(cfg, SweepSpec):
        from .experiment import sweep_point

        for i, value in enumerate(cfg.values):
            p = predict(sweep_point(cfg, i))
            print(f"value={value:g} predicted_fwhm_ps={p.fwhm_ps:.6f}")
        return EXIT_OK
    sys.stdout.write(predict(cfg).to_block())
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="pairlink", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario file")
    r.add_argument("config")
    r.add_argument("--out")
    r.add_argument("--workers", type=int, default=1)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a scenario file with a [sweep] section")
    s.add_argument("config")
    s.add_argument("--out")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    pr = sub.add_parser("preset", help="run a named preset")
    pr.add_argument("name", nargs="?")
    pr.add_argument("--out")
    pr.add_argument("--seed", type=int)
    pr.add_argument("--workers", type=int, default=1)
    pr.add_argument("--list", action="store_true", help="list preset names")
    pr.set_defaults(func=cmd_preset)

    c = sub.add_parser("correlate", help="cross-correlate two PTAG files")
    c.add_argument("file_a")
    c.add_argument("file_b")
    c.add_argument("--bin-ps", type=int, default=125)
    c.add_argument("--window-ps", type=float, default=20000)
    c.add_argument("--center-ps", type=float, default=0.0)
    c.add_argument("--channel-a", type=int)
    c.add_argument("--channel-b", type=int)
    c.add_argument("--out")
    c.set_defaults(func=cmd_correlate)

    pd = sub.add_parser("predict", help="analytic FWHM prediction for a scenario file")
    pd.add_argument("config")
    pd.set_defaults(func=cmd_predict)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FitError, TagFileError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
