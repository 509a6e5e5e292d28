"""Command-line entry point: ``bohmtraj --config run.ini --out results/``.

Exit status is 0 on success, 2 for invalid configuration and 3 when a
numerical abort (NaN, saturation, unresolved time step) stops the run.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .config import KINDS, load_config, template
from .errors import ConfigError, NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

log = logging.getLogger("bohmtraj")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bohmtraj", description="Run one trajectory or spectral experiment.")
    ap.add_argument("--config", help="INI experiment file")
    ap.add_argument("--out", help="output directory (created if missing)")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for ensemble integration")
    ap.add_argument("--seed", type=int, help="override [experiment] seed")
    ap.add_argument("--dry-run", action="store_true", help="validate and echo the resolved config, then exit")
    ap.add_argument("--template", choices=KINDS, metavar="KIND", help="print a config with every default for KIND")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    if args.template:
        sys.stdout.write(template(args.template))
        return EXIT_OK
    if not args.config:
        ap.error("--config is required")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.dry_run:
        from .experiments import dumps
        sys.stdout.write(dumps({"kind": cfg.kind, "seed": cfg.seed, "parameters": cfg.echo()}))
        return EXIT_OK
    if not args.out:
        ap.error("--out is required unless --dry-run")

    from .experiments import run
    try:
        manifest = run(cfg, args.out, threads=args.threads)
    except (NumericalError, ArithmeticError, FloatingPointError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"invalid experiment: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    log.info("wrote %d files to %s in %.2fs", len(manifest["files"]) + 1, args.out, manifest["wall_time_s"])
    print(f"{cfg.kind}: ok ({len(manifest['files'])} data files, manifest.json) -> {args.out}")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
