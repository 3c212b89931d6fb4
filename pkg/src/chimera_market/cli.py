"""Command-line entry point: ``chimera-market <subcommand> [options]``.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from . import pipeline
from .config import PipelineConfig, _TYPES
from .errors import ChimeraMarketError, ConfigError, StageError

logger = logging.getLogger("chimera_market")

HELP = {
    "input": "price CSV (wide: date + ticker columns, or long: date,ticker,close)",
    "output_dir": "directory for all artifacts",
    "window_width": "window width in return days",
    "window_step": "window step in days",
    "alpha": "phase lag in radians",
    "dt": "Euler step",
    "transient_steps": "discarded integration steps per window",
    "measure_steps": "measured integration steps per window",
    "seed": "master seed for initial phases and k-means",
    "epsilon": "velocity-fluctuation threshold for coherence",
    "neighbor_k": "neighbors in the embedding graph",
    "window_range": "windows used for clustering, 'start:stop'",
    "sectors": "CSV of ticker,sector[,classification]",
    "workers": "processes used for window simulation",
}


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file; flags override it")
    for field in dataclasses.fields(PipelineConfig):
        flag = "--" + field.name.replace("_", "-")
        kind = _TYPES[field.name]
        if kind is bool:
            parser.add_argument(flag, dest=field.name, action="store_true", default=argparse.SUPPRESS)
        else:
            parser.add_argument(
                flag, dest=field.name, type=kind, default=argparse.SUPPRESS, help=HELP.get(field.name)
            )


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="chimera-market", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    for name, text in [
        ("run", "run every stage end to end"),
        ("ingest", "normalize an input price file into prices.csv"),
        ("simulate", "simulate every window from prices.csv"),
        ("detect", "coherent sets, sizes and chi from stored summaries"),
        ("cluster", "embed chi and cluster stocks"),
        ("report", "render the size series and sector table"),
    ]:
        p = sub.add_parser(name, help=text)
        _add_config_flags(p)
        if name in ("run", "simulate"):
            p.add_argument("--resume", action="store_true", help="skip windows with existing summaries")
        p.add_argument("--write-config", help="also save the effective config to this file")

    synth = sub.add_parser("synth", help="write a seeded synthetic market")
    synth.add_argument("--output-dir", default="output")
    synth.add_argument("--n-block", type=int, default=20)
    synth.add_argument("--n-middle", type=int, default=0)
    synth.add_argument("--n-noise", type=int, default=30)
    synth.add_argument("--block-loading", type=float, default=0.85)
    synth.add_argument("--middle-loadings", type=float, nargs=2, default=(0.9, 0.3), metavar=("FIRST", "SECOND"))
    synth.add_argument("--days", type=int, default=500)
    synth.add_argument("--seed", type=int, default=0)
    return parser


def _config_from_args(args) -> PipelineConfig:
    base = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    overrides = {f.name: getattr(args, f.name) for f in dataclasses.fields(PipelineConfig) if hasattr(args, f.name)}
    return PipelineConfig.from_mapping(overrides, base=base)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "synth":
            panel = pipeline.run_synth(
                args.output_dir,
                n_block=args.n_block,
                n_noise=args.n_noise,
                block_loading=args.block_loading,
                days=args.days,
                seed=args.seed,
                n_middle=args.n_middle,
                middle_loadings=tuple(args.middle_loadings),
            )
            logger.info("wrote %d stocks x %d days to %s", panel.n_stocks, panel.n_dates, args.output_dir)
            return 0

        config = _config_from_args(args)
        if args.write_config:
            config.to_file(args.write_config)
        if args.command == "run":
            manifest = pipeline.run_pipeline(config, resume=args.resume)
            logger.info("run hash %s", manifest["run_hash"])
            return 0
        config.output_path().mkdir(parents=True, exist_ok=True)
        stage = {
            "ingest": lambda: pipeline.run_ingest(config),
            "simulate": lambda: pipeline.run_simulate(config, resume=args.resume),
            "detect": lambda: pipeline.run_detect(config),
            "cluster": lambda: pipeline.run_cluster(config),
            "report": lambda: pipeline.run_report(config),
        }[args.command]
        try:
            stage()
        except (StageError, ConfigError):
            raise
        except ChimeraMarketError as exc:
            raise StageError(args.command, exc) from exc
        pipeline.write_manifest(config, [args.command])
        return 0
    except ChimeraMarketError as exc:
        logger.error("%s", exc)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
