"""``relu-probe`` command-line entry point."""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import config as config_mod
from .errors import ReluProbeError
from .experiments import COMMANDS, emit_report, run_experiment

_EXAMPLE = """\
name: demo
output: runs/demo
randomization_p: 0.0
dataset:
  format: synthetic            # idx | csv | cifar-binary | synthetic
  params: {classes: 10, per_class: 100, test_per_class: 50, dim: 16, separation: 4.0}
architecture:
  layers:
    - {kind: linear+relu, out_dim: 64}
    - {kind: linear, out_dim: 10}
"""


def _defaults_epilog() -> str:
    cfg = config_mod.loads(_EXAMPLE)
    return ("configuration file (YAML); relative dataset paths and 'output' resolve against the\n"
            "config file's directory. A minimal file:\n\n" + _EXAMPLE +
            "\nfull set of keys with their defaults:\n\n" + config_mod.dumps(cfg) +
            "\n--seed sets train.seed for train/correlate/earlystop and the probe seed for\n"
            "probe/layers (the trained model is reused). 'report' merges the artifacts in the\n"
            "output directory into report.json and bundle.csv.\n")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="relu-probe",
        description="Measure how linear ReLU layers are by compressing their activations.",
        epilog=_defaults_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("command", choices=COMMANDS + ("report",))
    p.add_argument("--config", type=Path, help="experiment configuration file")
    p.add_argument("--jobs", type=int, default=1, help="parallel probe workers (default 1)")
    p.add_argument("--seed", type=int, default=None, help="override the run seed")
    p.add_argument("--out", type=Path, default=None, help="output directory (overrides 'output')")
    return p


def apply_seed(cfg, command, seed):
    if seed is None:
        return cfg
    if command in ("probe", "layers"):
        return replace(cfg, probe=replace(cfg.probe, seeds=[seed]))
    return replace(cfg, train=replace(cfg.train, seed=seed), probe=replace(cfg.probe, seeds=[seed]))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    where = str(args.config) if args.config else "<no config>"
    try:
        if args.command == "report":
            if args.out is None and args.config is None:
                parser.error("report needs --out or --config")
            out = args.out or Path(config_mod.load_config(args.config).output)
            emit_report(out)
            print(f"wrote {out / 'report.json'} and {out / 'bundle.csv'}")
            return 0
        if args.config is None:
            parser.error(f"{args.command} needs --config")
        cfg = apply_seed(config_mod.load_config(args.config), args.command, args.seed)
        for path in run_experiment(cfg, args.command, out=args.out, jobs=args.jobs):
            print(f"wrote {path}")
    except ReluProbeError as exc:
        print(f"relu-probe: error: {where}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"relu-probe: error: {where}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
