"""``fairshift`` command line: simulate, geometry, tabular, audit."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .core import EmptyCellError, ShapeError
from .data import DataError, SchemaError
from .geometry import InfeasibleFairError
from .harness import (
    MODES,
    RUNNERS,
    ConfigError,
    ExperimentConfig,
    GeometryCheckError,
    load_config,
    validate,
)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_GEOMETRY = 0, 2, 3, 4

log = logging.getLogger("fairshift")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fairshift", description=__doc__)
    sub = ap.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", type=Path, help="TOML config file")
        p.add_argument("--out", type=Path, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--workers", type=int, help="concurrent cells (overrides config)")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg.mode = args.mode
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    if args.out is not None:
        cfg.out = str(args.out)
    validate(cfg)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        report = RUNNERS[cfg.mode](cfg, Path(cfg.out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GeometryCheckError as exc:
        print(f"geometry check failed: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    except (DataError, SchemaError, ShapeError, EmptyCellError, InfeasibleFairError,
            FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if cfg.mode in ("audit", "geometry"):
        print(json.dumps(report, indent=2))
    else:
        for rec in report["summary"]:
            print(f"{rec['parameter']:>10} {rec['model']:<9} "
                  f"P* {rec['accuracy_on_pstar_mean']:.3f}±{rec['accuracy_on_pstar_sd']:.3f}  "
                  f"P~ {rec['accuracy_on_ptilde_mean']:.3f}±{rec['accuracy_on_ptilde_sd']:.3f}  "
                  f"gap {rec['fairness_gap_mean']:.3f}")
        print(f"wrote {cfg.out}/results.csv and {cfg.out}/summary.csv")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
