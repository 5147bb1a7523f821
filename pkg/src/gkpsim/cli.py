"""Command-line entry point: ``gkpsim --preset NAME [options]`` or
``python -m gkpsim``.

Exit status: 0 completed, 2 conservation threshold exceeded, 3 diverged,
1 usage or configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from .config import ConfigError, RunConfig, apply_overrides, load_config, parse_set_option
from .presets import PRESETS, get_preset, preset_fit_block, scale_config
from .runner import EXIT_USAGE, run
from .snapshot import SnapshotFormatError


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gkpsim", description=__doc__.splitlines()[0])
    src = ap.add_argument_group("run selection")
    src.add_argument("--preset", metavar="NAME", help="named experiment (see --list-presets)")
    src.add_argument("--config", metavar="PATH",
                     help="config file; with --preset it overrides the preset's values")
    src.add_argument("--set", metavar="SECTION.KEY=VALUE", action="append", default=[],
                     help="override one config value (repeatable)")
    src.add_argument("--list-presets", action="store_true", help="print preset names and exit")
    ap.add_argument("--output-dir", metavar="PATH", help="output directory")
    ap.add_argument("--threads", type=int, metavar="N", help="FFT worker threads")
    ap.add_argument("--deterministic", action="store_true",
                    help="bitwise reproducible transforms (needed for bitwise resume)")
    ap.add_argument("--resume", metavar="SNAPSHOT", help="continue a direct run from a snapshot")
    ap.add_argument("--scale-factor", type=int, default=1, metavar="F",
                    help="divide nx, ny and the step count by F")
    ap.add_argument("-q", "--quiet", action="store_true")
    return ap


def resolve_config(args) -> tuple[RunConfig, object]:
    preset = None
    if args.preset:
        preset = get_preset(args.preset, args.scale_factor)
        cfg = dataclasses.replace(preset.config, fit=preset_fit_block(preset))
        if args.config:
            cfg = load_config(args.config, base=cfg)
    elif args.config:
        cfg = scale_config(load_config(args.config), args.scale_factor)
    else:
        raise ConfigError("give --preset or --config")
    if args.set:
        cfg = apply_overrides(cfg, dict(parse_set_option(s) for s in args.set)).validate()
    if args.output_dir:
        cfg = apply_overrides(cfg, {("output", "directory"): args.output_dir})
    return cfg, preset


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else 0
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    if args.list_presets:
        for name in sorted(PRESETS):
            print(f"{name:18s} {PRESETS[name].expected.description}")
        return 0
    try:
        cfg, preset = resolve_config(args)
        report = run(cfg, cfg.output.directory, preset=preset, resume=args.resume,
                     threads=args.threads, deterministic=args.deterministic or None)
    except (ConfigError, KeyError, SnapshotFormatError, ValueError, OSError) as exc:
        print(f"gkpsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not args.quiet:
        summary = {k: report[k] for k in ("reason", "message", "exit_code") if k in report}
        for k in ("fit", "verdicts", "crosscheck"):
            if k in report:
                summary[k] = report[k]
        print(json.dumps(summary, indent=2))
    return report["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
