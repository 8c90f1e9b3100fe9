"""Command line entry point: ``zerocurrents <stage|run> --config --seed --out``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import pipeline
from .config import STAGES, load_config
from .errors import CheckFailure, ConfigError, MissingStageError, NumericalError

OUT_ENV = "ZEROCURRENTS_OUT"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="zerocurrents",
                                 description="Equidistribution experiments for zeros of random sections.")
    ap.add_argument("command", choices=list(STAGES) + ["run"],
                    help="pipeline stage to run, or 'run' for all configured stages")
    ap.add_argument("--config", required=True, type=Path, help="experiment config file")
    ap.add_argument("--seed", type=int, default=None, help="unsigned 64-bit seed (default: config)")
    ap.add_argument("--out", type=Path, default=None,
                    help=f"output directory (default: ${OUT_ENV} or ./results/<name>)")
    ap.add_argument("--workers", type=int, default=None, help="worker processes (default: all CPUs)")
    ap.add_argument("--resolution", type=int, default=None, help="override the grid resolution")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if not args.config.is_file():
            raise ConfigError(f"config file {args.config} not found")
        cfg = load_config(args.config)
        seed = cfg.seed if args.seed is None else args.seed
        if not 0 <= seed < 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        if args.resolution is not None and args.resolution < 8:
            raise ConfigError("--resolution must be at least 8")
        out = args.out or (Path(os.environ[OUT_ENV]) if os.environ.get(OUT_ENV)
                           else Path("results") / cfg.name)
        ctx = pipeline.Context(cfg, seed, out, args.workers, args.resolution)
        if args.command == "run":
            results = pipeline.run(ctx)
        else:
            results = [pipeline.run_stage(ctx, args.command)]
    except (ConfigError, MissingStageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except CheckFailure as exc:
        print(f"assertion failed: {exc}", file=sys.stderr)
        return 1
    failures = [f"{r.stage}: {f}" for r in results for f in r.failures]
    for r in results:
        print(f"{r.stage}: {'skipped (up to date)' if r.skipped else 'done'}"
              f"{'' if not r.failures else ' with failures'}")
    for f in failures:
        print(f"FAILED {f}", file=sys.stderr)
    print(f"results in {out}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
