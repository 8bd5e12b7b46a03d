"""
Command line driver: ``synth``, ``fit``, ``eval`` and ``defaults``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 input mismatch.
"""

import argparse
import logging
import os
import sys
from typing import List, Optional, Sequence

import torch

from .. import __version__
from ..core.scene import build_index
from ..metrics.report import FrameCountMismatch, MetricsReport, evaluate, write_csv, write_json
from ..optimizer.pipeline import PipelineResult, run_pipeline
from ..optimizer.schedule import ABLATIONS, StageSchedule
from ..optimizer.stage import ExecutionTimeException, NonFiniteEnergy
from ..synth import bundle_io
from ..synth.scenario import InvalidConfig, ScenarioBundle, generate
from .config import ConfigError, RunConfig, dumps, load, loads

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_MISMATCH = 4

METRICS_CSV = "metrics.csv"
METRICS_JSON = "metrics.json"


class InputMismatch(ValueError):
    def __init__(self, message):
        super().__init__(message)


def resolve_config(path: Optional[str], overrides: Sequence[str], fallback: Optional[str] = None) -> RunConfig:
    """Configuration from path, else from fallback if it exists, else the defaults; overrides applied last."""
    if path is None and fallback is not None and os.path.exists(fallback):
        path = fallback
    if path is None:
        return loads("", overrides)
    return load(path, overrides)


def read_bundle(directory: str) -> ScenarioBundle:
    try:
        return bundle_io.load_bundle(directory)
    except (InvalidConfig, ConfigError):
        raise
    except ValueError as error:
        raise InputMismatch(str(error)) from error


def fit(bundle: ScenarioBundle, config: RunConfig, schedule: StageSchedule, progress: bool = False) -> PipelineResult:
    return run_pipeline(bundle.inputs, schedule, config.fit_settings(progress), bundle.skeleton)


def write_fit(directory: str, bundle: ScenarioBundle, config: RunConfig, result: PipelineResult, export_meshes: bool):
    bundle_io.save_estimate(
        directory,
        result.estimate,
        trace=[row.to_dict() for row in result.trace],
        config_text=dumps(config),
        seed=config.seed,
        skeleton=bundle.skeleton,
        scene=bundle.inputs.scene,
        export_meshes=export_meshes,
    )


def report(bundle: ScenarioBundle, estimate, config: RunConfig, run: str, index=None) -> MetricsReport:
    try:
        return evaluate(
            bundle,
            estimate,
            run=run,
            contact_groups=config.contact.groups,
            partial_fraction=config.metrics.partial_fraction,
            uniform_stride=config.metrics.uniform_stride,
            index=index,
        )
    except FrameCountMismatch as error:
        raise InputMismatch(str(error)) from error


def cmd_synth(args: argparse.Namespace) -> int:
    config = resolve_config(args.config, args.set)
    bundle = generate(config.scenario_config(), config.skeleton)
    bundle_io.save_bundle(bundle, args.out, dumps(config))
    logger.info("bundle written to %s", args.out)
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    bundle = read_bundle(args.bundle)
    config = resolve_config(args.config, args.set, os.path.join(args.bundle, bundle_io.CONFIG_FILE))
    result = fit(bundle, config, config.schedule, args.progress)
    write_fit(args.out, bundle, config, result, args.export_meshes)
    if result.flagged:
        logger.warning("energy increased in at least one stage, see %s", os.path.join(args.out, bundle_io.TRACE_FILE))
    logger.info("estimate written to %s, scale %.6g", args.out, result.estimate.scale)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    bundle = read_bundle(args.bundle)
    config = resolve_config(args.config, args.set, os.path.join(args.bundle, bundle_io.CONFIG_FILE))
    reports: List[MetricsReport] = []
    index = build_index(bundle.inputs.scene) if bundle.inputs.scene is not None else None
    if args.ablation:
        for name in ABLATIONS:
            result = fit(bundle, config, StageSchedule.ablation(name, config.schedule), args.progress)
            write_fit(os.path.join(args.out, name), bundle, config, result, False)
            reports.append(report(bundle, result.estimate, config, name, index))
    else:
        if args.estimate is None:
            raise ConfigError("eval needs an estimate directory or --ablation")
        try:
            estimate = bundle_io.load_estimate(args.estimate)
        except (KeyError, ValueError) as error:
            raise InputMismatch(f"cannot read estimate {args.estimate}: {error}") from error
        reports.append(report(bundle, estimate, config, os.path.basename(os.path.normpath(args.estimate)), index))

    os.makedirs(args.out, exist_ok=True)
    write_csv(os.path.join(args.out, METRICS_CSV), reports)
    write_json(os.path.join(args.out, METRICS_JSON), reports, {"seed": config.seed, "config": config.to_dict()})
    for row in reports:
        logger.info("%s", row.to_dict())
    return EXIT_OK


def cmd_defaults(args: argparse.Namespace) -> int:
    sys.stdout.write(dumps(resolve_config(None, args.set)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="egocapture4d",
        description="Scene-grounded body capture from egocentric video: synthetic scenarios, fitting and evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--threads", type=int, default=None, help="torch intra-op threads (default: all cores)")
    parser.add_argument("--progress", action="store_true", help="show progress bars")
    commands = parser.add_subparsers(dest="command", required=True)

    def with_config(command: argparse.ArgumentParser):
        command.add_argument("--config", default=None, help="TOML configuration file")
        command.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="override one configuration entry (stages as stages.<index>.key), repeatable",
        )

    synth = commands.add_parser("synth", help="generate a synthetic scenario bundle")
    with_config(synth)
    synth.add_argument("--out", required=True, help="bundle directory")
    synth.set_defaults(handler=cmd_synth)

    fit_parser = commands.add_parser("fit", help="fit a bundle")
    fit_parser.add_argument("bundle", help="bundle directory")
    with_config(fit_parser)
    fit_parser.add_argument("--out", required=True, help="estimate directory")
    fit_parser.add_argument("--export-meshes", action="store_true", help="write body OBJ files")
    fit_parser.set_defaults(handler=cmd_fit)

    eval_parser = commands.add_parser("eval", help="evaluate an estimate, or every ablation variant")
    eval_parser.add_argument("bundle", help="bundle directory")
    eval_parser.add_argument("estimate", nargs="?", default=None, help="estimate directory")
    with_config(eval_parser)
    eval_parser.add_argument("--ablation", action="store_true", help="fit and evaluate " + ", ".join(ABLATIONS))
    eval_parser.add_argument("--out", required=True, help="metrics directory")
    eval_parser.set_defaults(handler=cmd_eval)

    defaults = commands.add_parser("defaults", help="print the default configuration")
    defaults.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
    defaults.set_defaults(handler=cmd_defaults)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None:
        torch.set_num_threads(max(1, args.threads))
    try:
        return args.handler(args)
    except (ConfigError, InvalidConfig) as error:
        logger.error("configuration error: %s", error)
        return EXIT_CONFIG
    except NonFiniteEnergy as error:
        logger.error("numerical failure: %s", error)
        return EXIT_NUMERICAL
    except ExecutionTimeException as error:
        logger.error("%s", error)
        return EXIT_NUMERICAL
    except InputMismatch as error:
        logger.error("input mismatch: %s", error)
        return EXIT_MISMATCH
