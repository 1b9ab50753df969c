"""Command-line entry point: ``hbtkit {simulate,poisson,correlate,fit,run,selftest}``."""

from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .correlate import (
    CorrelationConfig,
    Stage,
    background_correct,
    cross_correlate,
    normalize,
    snr_to_rho,
)
from .emitter import saturation_intensity
from .errors import ConfigError, FileFormatError, HbtError
from .fileio import (
    read_histogram,
    read_series,
    read_spectrum,
    read_timestamps,
    sha256,
    write_histogram,
    write_json,
    write_timestamps,
)
from .fitting import fit_g2, fit_polarization, fit_saturation, fit_spectrum, lifetime_from_fit
from .simulate import simulate_plan, simulate_poisson_stream

EXIT_OK = 0
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_NOT_CONVERGED = 5
EXIT_SELFTEST = 6


class NotConverged(Exception):
    pass


def _manifest(path, argv, outputs, **extra):
    doc = {
        "argv": list(argv),
        "hbtkit_version": __version__,
        "numpy_version": np.__version__,
        "bit_generator": "PCG64",
        "outputs": {str(p): sha256(p) for p in outputs},
        **extra,
    }
    write_json(path, doc)


def cmd_simulate(args):
    cfg = load_config(args.config)
    a, b = simulate_plan(cfg.plan)
    outs = cfg.outputs
    write_timestamps(outs["channel_a"], a)
    write_timestamps(outs["channel_b"], b)
    resolved = copy.deepcopy(cfg.source)
    resolved["outputs"] = {k: str(Path(v).resolve()) for k, v in outs.items()}
    _manifest(
        outs["manifest"], ["simulate", str(Path(outs["manifest"]).resolve())],
        [outs["channel_a"], outs["channel_b"]],
        command="simulate", seed=cfg.plan.seed, config=resolved,
        rates=dict(zip(("r12", "r21", "r23", "r31"), cfg.plan.rates.as_tuple())),
        counts={"A": len(a), "B": len(b)},
    )
    print(f"simulated {len(a)} + {len(b)} events over {cfg.plan.duration} s (seed {cfg.plan.seed})")
    return cfg, a, b


def cmd_poisson(args):
    s = simulate_poisson_stream(args.rate, args.duration, args.seed, channel=Path(args.out).stem)
    write_timestamps(args.out, s)
    if args.manifest:
        _manifest(args.manifest, args.argv, [args.out], command="poisson")
    print(f"wrote {len(s)} events to {args.out}")


def _rho(args):
    if args.rho is not None and args.snr is not None:
        raise ConfigError("give --rho or --snr, not both")
    if args.snr is not None:
        return snr_to_rho(args.snr)
    return args.rho


def cmd_correlate(args):
    a = read_timestamps(args.file_a)
    b = read_timestamps(args.file_b)
    h = normalize(cross_correlate(a, b, CorrelationConfig(args.bin_width, args.tau_max)))
    rho = _rho(args)
    if rho is not None:
        h = background_correct(h, rho)
    write_histogram(args.out, h)
    m = h.meta
    far = np.abs(h.bin_centers) > 0.8 * args.tau_max
    print(f"N1={m.n1:.6g} counts/s  N2={m.n2:.6g} counts/s  T={m.T:.6g} s  "
          f"coincidences={int(h.counts.sum())}")
    if far.any():
        mean = h.values[far].mean()
        err = np.sqrt(np.sum(h.sigma[far] ** 2)) / far.sum()
        print(f"mean normalized value for |tau| > {0.8 * args.tau_max:g} ns: {mean:.5f} +- {err:.5f}")
    if args.manifest:
        _manifest(args.manifest, args.argv, [args.out], command="correlate")
    return h


def _check_converged(res):
    if not res.converged:
        raise NotConverged(f"fit did not converge after {res.iterations} iterations: {res.message}")


def cmd_fit(args):
    kind = args.kind
    report = {"kind": kind, "data": str(args.data)}
    if kind == "g2":
        try:
            h = read_histogram(args.data)
        except FileFormatError as exc:
            raise FileFormatError(f"g2 fit needs a histogram file: {exc}") from None
        if h.stage is Stage.RAW:
            h = normalize(h)
        res = fit_g2(h, args.drf_width)
        _check_converged(res)
        g0, g0_err = h.value_at_zero()
        report["measured_g2_0"] = float(g0)
        report["measured_g2_0_stderr"] = float(g0_err)
        report["fit_minus_measured_g2_0"] = res.derived["g2_0"] - float(g0)
        if args.power is not None and args.psat is not None:
            report["lifetime_ns"] = lifetime_from_fit(res, args.power, args.psat)
    elif kind in ("saturation", "polarization"):
        s = read_series(args.data)
        if s.kind != kind:
            raise FileFormatError(f"series kind {s.kind!r} does not match fit kind {kind!r}")
        if kind == "saturation":
            res = fit_saturation(s)
            _check_converged(res)
            if args.focus_width is not None:
                report["saturation_intensity_kW_cm2"] = saturation_intensity(
                    res.params["p_sat"], args.focus_width)
        else:
            res = fit_polarization(s)
            _check_converged(res)
    else:
        spec = read_spectrum(args.data)
        res = fit_spectrum(spec, args.npeaks)
        _check_converged(res)
    report["result"] = res.to_dict()
    if args.out:
        write_json(args.out, report)
    print(json.dumps(report, indent=2, sort_keys=True, default=float))
    return report


def cmd_run(args):
    cfg, a, b = cmd_simulate(args)
    h = normalize(cross_correlate(a, b, cfg.correlation))
    if cfg.fit_snr is not None:
        h = background_correct(h, snr_to_rho(cfg.fit_snr))
    if "histogram" in cfg.outputs:
        write_histogram(cfg.outputs["histogram"], h)
    res = fit_g2(h, cfg.plan.detector.jitter.w)
    _check_converged(res)
    report = {"kind": "g2", "result": res.to_dict()}
    if "report" in cfg.outputs:
        write_json(cfg.outputs["report"], report)
    print(json.dumps(report, indent=2, sort_keys=True, default=float))
    return report


def cmd_selftest(args):
    from .acceptance import run_all

    results = run_all(quick=args.quick, echo=True)
    return all(r.passed for r in results)


def build_parser():
    p = argparse.ArgumentParser(prog="hbtkit", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate two detector channels from a JSON config")
    s.add_argument("config")

    s = sub.add_parser("run", help="simulate, correlate and fit g2 from a JSON config")
    s.add_argument("config")

    s = sub.add_parser("poisson", help="write an uncorrelated Poisson timestamp stream")
    s.add_argument("--rate", type=float, required=True, help="counts/s")
    s.add_argument("--duration", type=float, required=True, help="seconds")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--manifest")

    s = sub.add_parser("correlate", help="delay histogram of two timestamp files")
    s.add_argument("file_a")
    s.add_argument("file_b")
    s.add_argument("--bin-width", type=float, default=0.1, help="ns")
    s.add_argument("--tau-max", type=float, default=100.0, help="ns")
    s.add_argument("--rho", type=float, help="signal fraction for background correction")
    s.add_argument("--snr", type=float, help="signal-to-background ratio")
    s.add_argument("--out", required=True)
    s.add_argument("--manifest")

    s = sub.add_parser("fit", help="fit a model to a data file")
    s.add_argument("kind", choices=["g2", "saturation", "polarization", "spectrum"])
    s.add_argument("data")
    s.add_argument("--out", help="JSON report path")
    s.add_argument("--drf-width", type=float, default=0.354, help="ns, g2 only")
    s.add_argument("--power", type=float, help="excitation power of the g2 data, mW")
    s.add_argument("--psat", type=float, help="saturation power, mW")
    s.add_argument("--focus-width", type=float, help="half 1/sqrt(e) focus width, nm")
    s.add_argument("--npeaks", type=int, default=1, help="spectrum only")

    s = sub.add_parser("selftest", help="run the acceptance criteria")
    s.add_argument("--quick", action="store_true", help="skip the end-to-end simulation")
    return p


_COMMANDS = {
    "simulate": cmd_simulate,
    "run": cmd_run,
    "poisson": cmd_poisson,
    "correlate": cmd_correlate,
    "fit": cmd_fit,
}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    try:
        if args.command == "selftest":
            return EXIT_OK if cmd_selftest(args) else EXIT_SELFTEST
        _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NotConverged as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (HbtError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
