"""Command-line entry point.

Subcommands: simulate, detect, analyze, sweep, all.  Exit codes: 0 on
success, 2 for configuration errors, 3 for missing artifacts.  The
default output directory can be set with the TLSJITTER_OUT environment
variable.
"""
from __future__ import annotations

import argparse
import os
import sys

from . import __version__
from .config import (config_to_text, default_config, load_config, reduced_config)
from .errors import ConfigurationError, MissingArtifactError
from .pipeline import analyze_stage, detect_stage, simulate_stage, sweep_stage

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3


def _parse_temperatures(text: str):
    """Either 'a..b' (log-spaced with --sweep-points) or a comma list."""
    if ".." in text:
        lo, hi = (float(s) for s in text.split("..", 1))
        return ("range", lo, hi)
    return ("list", [float(s) for s in text.split(",") if s.strip()])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tlsjitter",
        description="TLS-bath spectral diffusion simulator with a zero-span "
                    "detection chain and correlation analysis")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("simulate", "generate the bath and shift traces"),
            ("detect", "synthesize zero-span chains and demodulate"),
            ("analyze", "correlations, histograms, spectra"),
            ("sweep", "temperature sweep of the filtered linewidth"),
            ("all", "simulate + detect + analyze (add --with-sweep for sweep)"),
            ("dump-config", "print the default configuration file")):
        p = sub.add_parser(name, help=help_text)
        if name == "dump-config":
            p.add_argument("--reduced", action="store_true",
                           help="dump the reduced (fast) preset instead")
            continue
        p.add_argument("--config", help="configuration file (flat dotted keys)")
        p.add_argument("--reduced", action="store_true",
                       help="start from the reduced preset instead of the default")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--out", help="output directory (default: $TLSJITTER_OUT or ./out)")
        p.add_argument("--threads", type=int, help="override run.n_workers")
        if name in ("sweep", "all"):
            p.add_argument("--temperature-sweep", metavar="SPEC",
                           help="temperatures as 'a..b' (log-spaced) or 't1,t2,...'")
            p.add_argument("--sweep-points", type=int, default=8,
                           help="points for the 'a..b' range form (default 8)")
        if name == "all":
            p.add_argument("--with-sweep", action="store_true",
                           help="also run the temperature sweep")
    return parser


def _resolve_config(args):
    cfg = reduced_config() if getattr(args, "reduced", False) else default_config()
    if getattr(args, "config", None):
        cfg = load_config(args.config, base=cfg)
    if getattr(args, "seed", None) is not None:
        cfg.run.seed = args.seed
    if getattr(args, "threads", None) is not None:
        cfg.run.n_workers = args.threads
    out = getattr(args, "out", None) or os.environ.get("TLSJITTER_OUT") or cfg.run.output_dir
    cfg.run.output_dir = out
    return cfg, out


def _temperatures(args):
    spec = getattr(args, "temperature_sweep", None)
    if not spec:
        return None
    kind, *rest = _parse_temperatures(spec)
    if kind == "list":
        return rest[0]
    import numpy as np
    lo, hi = rest
    return list(np.geomspace(lo, hi, args.sweep_points))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "dump-config":
        cfg = reduced_config() if args.reduced else default_config()
        sys.stdout.write(config_to_text(cfg))
        return EXIT_OK
    try:
        cfg, out = _resolve_config(args)
        cfg.validate()
        if args.command == "simulate":
            simulate_stage(cfg, out)
        elif args.command == "detect":
            detect_stage(cfg, out)
        elif args.command == "analyze":
            summary = analyze_stage(cfg, out)
            for pair, rho in summary.rho.items():
                print(f"rho[{pair}] = {rho:+.3f}")
        elif args.command == "sweep":
            result = sweep_stage(cfg, out, temperatures=_temperatures(args))
            print(f"power-law exponent = {result.exponent:+.3f} "
                  f"+- {result.exponent_stderr:.3f}")
        elif args.command == "all":
            simulate_stage(cfg, out)
            detect_stage(cfg, out)
            summary = analyze_stage(cfg, out)
            for pair, rho in summary.rho.items():
                print(f"rho[{pair}] = {rho:+.3f}")
            if getattr(args, "with_sweep", False) or getattr(args, "temperature_sweep", None):
                result = sweep_stage(cfg, out, temperatures=_temperatures(args))
                print(f"power-law exponent = {result.exponent:+.3f} "
                      f"+- {result.exponent_stderr:.3f}")
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
