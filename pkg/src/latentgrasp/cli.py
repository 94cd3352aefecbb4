"""``latentgrasp`` command line.

Exit codes: 0 success, 1 usage, 2 validation failure, 3 non-convergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, ExperimentConfig
from .voxels.dataset import DatasetError

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NOCONV = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in u64")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat YAML config; flags override it")
    common.add_argument("--seed", type=_u64, help="master seed (u64)")
    common.add_argument("--out", type=Path, default=Path("runs/default"), help="output root directory")
    common.add_argument("-v", "--verbose", action="store_true")
    p = _Parser(prog="latentgrasp", description="Latent-space grasp learning at desk scale.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("gen-data", parents=[common], help="generate target and gripper datasets")
    t = sub.add_parser("train", parents=[common], help="train one autoencoder stage")
    t.add_argument("--stage", required=True, choices=["ae1", "ae2", "ae3"])
    r = sub.add_parser("rl", parents=[common], help="run one PoWER agent")
    r.add_argument("--agent", required=True, choices=["latent", "baseline"])
    sub.add_parser("adapt", parents=[common], help="swap experiment over several seeds")
    sub.add_parser("eval", parents=[common], help="print the accuracy / adaptation table")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config, master_seed=args.seed)
        out = args.out
        if args.command == "gen-data":
            result = pipeline.gen_data(cfg, out)
        elif args.command == "train":
            result = pipeline.train(args.stage, cfg, out)
        elif args.command == "rl":
            result = pipeline.rl(args.agent, cfg, out)
        elif args.command == "adapt":
            result = pipeline.adapt(cfg, out)
            if result.pop("_nonconverged", False):
                print(json.dumps(result, indent=2, sort_keys=True))
                print("some runs did not re-converge within the episode cap", file=sys.stderr)
                return EXIT_NOCONV
        else:
            _, text = pipeline.evaluate(cfg, out)
            print(text)
            return EXIT_OK
    except (ConfigError, pipeline.StageError, DatasetError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except pipeline.NotConverged as err:
        print(f"not converged: {err}", file=sys.stderr)
        return EXIT_NOCONV
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
