# main.py

import argparse
import logging
import sys
from datetime import datetime
from typing import List, Optional, Sequence

import yaml

from config import experiment
from config.logger import setup_logging
from core.errors import ConfigError, MissingArtifactError, TextLocError
from services.experiment import SPLITS, SWEEPS, ExperimentRunner

log = logging.getLogger(__name__)

EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_MISSING = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="textloc",
        description="Text-to-point-cloud localization experiments",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Config keys can be overridden with dotted paths:
  main.py --set cells.stride=15 evaluate
  main.py evaluate --eval.street_filter=true
        """,
    )
    parser.add_argument("--config", default=None, help="YAML experiment config (default: built-in defaults)")
    parser.add_argument("--output", default=None, help="Run directory (default: output_dir or OUTPUT_ROOT)")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    parser.add_argument("--log-level", default=None)
    parser.add_argument("--workers", type=int, default=None)

    commands = parser.add_subparsers(dest="command", required=True)
    for name in ("gen-scene", "gen-queries", "build-cells"):
        sub = commands.add_parser(name)
        sub.add_argument("--split", nargs="+", choices=SPLITS, default=list(SPLITS))
    sub = commands.add_parser("import-scene")
    sub.add_argument("--input", required=True)
    sub.add_argument("--split", choices=SPLITS, required=True)
    sub.add_argument("--index", type=int, default=0)
    commands.add_parser("pretrain-points")
    commands.add_parser("train-coarse")
    sub = commands.add_parser("build-index")
    sub.add_argument("--split", choices=SPLITS, default=None)
    commands.add_parser("train-fine")

    sub = commands.add_parser("evaluate")
    sub.add_argument("--modes", nargs="+", default=None, help="Modes or presets (oracles, fine-ablation)")
    sub.add_argument("--split", choices=SPLITS, default=None)
    sub.add_argument("--epsilon", nargs="+", type=float, default=None)
    sub.add_argument("--stem", default="metrics")

    sub = commands.add_parser("ablate")
    sub.add_argument("--sweep", choices=sorted(SWEEPS), required=True)
    sub.add_argument("--values", nargs="+", type=yaml.safe_load, required=True)
    sub.add_argument("--modes", nargs="+", default=None)

    sub = commands.add_parser("plot")
    sub.add_argument("--summary", default=None, help="JSON summary (default: reports/metrics.json)")
    sub.add_argument("--kinds", nargs="*", default=["recall-epsilon"])

    sub = commands.add_parser("render-cell")
    sub.add_argument("--scene", required=True)
    sub.add_argument("--cell", type=int, required=True)
    sub.add_argument("--resolution", type=int, default=256)

    commands.add_parser("pipeline")
    commands.add_parser("show-config")
    return parser


def split_overrides(extra: Sequence[str]) -> List[str]:
    """`--section.key=value` leftovers become overrides; anything else is an error"""
    overrides, unknown = [], []
    for item in extra:
        if item.startswith("--") and "=" in item and "." in item.split("=", 1)[0]:
            overrides.append(item[2:])
        else:
            unknown.append(item)
    if unknown:
        raise ConfigError([f"unrecognized argument: {item}" for item in unknown])
    return overrides


def run_command(args: argparse.Namespace, cfg: experiment.ExperimentConfig) -> None:
    if args.command == "show-config":
        sys.stdout.write(experiment.dump(cfg))
        return

    runner = ExperimentRunner(cfg, args.output, args.workers)
    command = args.command
    if command == "gen-scene":
        runner.gen_scene(args.split)
    elif command == "import-scene":
        runner.import_scene(args.input, args.split, args.index)
    elif command == "gen-queries":
        runner.gen_queries(args.split)
    elif command == "build-cells":
        runner.build_cells(args.split)
    elif command == "pretrain-points":
        runner.pretrain_points()
    elif command == "train-coarse":
        runner.train_coarse()
    elif command == "build-index":
        runner.build_index(args.split)
    elif command == "train-fine":
        runner.train_fine()
    elif command == "evaluate":
        runner.evaluate(args.modes, args.split, args.epsilon, args.stem)
    elif command == "ablate":
        runner.ablate(args.sweep, args.values, args.modes)
    elif command == "plot":
        runner.plot(args.summary, args.kinds)
    elif command == "render-cell":
        runner.render_cell(args.scene, args.cell, args.resolution)
    elif command == "pipeline":
        runner.pipeline()


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    setup_logging(args.log_level)

    start = datetime.now()
    try:
        overrides = list(args.overrides) + split_overrides(extra)
        cfg = experiment.load(args.config, overrides)
        log.info(f"[ TEXTLOC ] Running {args.command}...")
        run_command(args, cfg)
    except ConfigError as e:
        for problem in e.problems:
            log.error(f"[ CONFIG ] {problem}")
        return EXIT_CONFIG
    except MissingArtifactError as e:
        log.error(f"[ TEXTLOC ] {e}")
        return EXIT_MISSING
    except TextLocError as e:
        log.error(f"[ TEXTLOC ] {e}")
        return EXIT_FAILURE
    except Exception as e:
        log.error(f"[ TEXTLOC ] Failed to run {args.command}", exc_info=e)
        return EXIT_FAILURE

    log.info(
        "[ TEXTLOC ] --- Finished %s in %.2f seconds",
        args.command,
        (datetime.now() - start).total_seconds(),
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
