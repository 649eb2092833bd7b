"""Command-line entry point: ``gaugeprot <subcommand> --config FILE``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .harness import SUBCOMMANDS, ConfigError, load_config, run_experiment

CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"
DEFAULT_RECIPES = {
    "trajectory": "fig2a_trajectory.json",
    "vscan": "fig3_vscan.json",
    "circuit": "fig6_circuit.json",
    "collapse": "fig7_collapse.json",
    "sequence": "sequence_paper_L6.json",
    "norms": "norms_local.json",
    "zeno": "zeno_L4.json",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gaugeprot", description="Gauge-protection simulations of a U(1) quantum link model.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help=f"experiment JSON (default: configs/{DEFAULT_RECIPES[name]})")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker threads for grid points")
        p.add_argument("--ci-scale", action="store_true", help="reduced grids (L=4, 40 times, 8 V points)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        path = args.config or CONFIG_DIR / DEFAULT_RECIPES[args.command]
        if not path.exists():
            raise ConfigError([f"--config: {path} does not exist"])
        cfg = load_config(path, ci_scale=args.ci_scale)
        if cfg.experiment != SUBCOMMANDS[args.command]:
            raise ConfigError([f"experiment: config is {cfg.experiment!r}, subcommand expects {SUBCOMMANDS[args.command]!r}"])
        if args.threads < 1:
            raise ConfigError(["--threads: must be >= 1"])
        paths = run_experiment(cfg, args.out, args.threads)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
