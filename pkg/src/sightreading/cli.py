"""Command-line entry point: ``sightreading {run,compare,tradeoff,parse-check}``.

Exit status is 0 on success, 2 for configuration or input errors and 3 for
failures while running.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config, validate
from .harness import compare_dir, emit_tradeoff_curve, run_experiment
from .score import ScoreParseError, parse_score, segment_phrases

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sightreading", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="experiment config file")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides experiment.output_dir)")

    run = sub.add_parser("run", parents=[common], help="train agents and write per-episode CSVs")
    run.add_argument("--score", metavar="PATH")
    run.add_argument("--seed", type=int, action="append", metavar="N", help="repeatable")
    run.add_argument("--episodes", type=int, metavar="N")
    run.add_argument("--method", choices=("rate", "td", "both"))
    run.add_argument("--workers", type=int, metavar="N")
    run.add_argument("--trajectories", action="store_true", help="also write per-step TSV files")

    sub.add_parser("compare", parents=[common], help="summarize rate vs td CSVs in the output directory")

    trade = sub.add_parser("tradeoff", parents=[common], help="write the attention sweep CSV")
    trade.add_argument("--resolution", type=int, metavar="N")

    check = sub.add_parser("parse-check", help="parse a score and print its canonical phrases")
    check.add_argument("score", metavar="PATH")
    check.add_argument("--window", type=int, default=4)
    return p


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.out:
        cfg.experiment.output_dir = args.out
    for attr, target in (("score", "score_path"), ("episodes", "episodes"),
                         ("method", "method"), ("workers", "workers")):
        value = getattr(args, attr, None)
        if value is not None:
            setattr(cfg.experiment, target, value)
    if getattr(args, "seed", None):
        cfg.experiment.seeds = list(args.seed)
    if getattr(args, "resolution", None) is not None:
        cfg.constraints.resolution = args.resolution
    validate(cfg)
    return cfg


def _parse_check(args) -> int:
    text = Path(args.score).read_text("utf-8")
    score = parse_score(text)
    if args.window < 1:
        raise ConfigError("--window", "must be >= 1")
    phrases = segment_phrases(score, args.window)
    print(f"tempo={score.tempo!r} tonic={score.tonic_frequency!r} notes={len(score.notes)} phrases={len(phrases)}")
    for p in phrases:
        print(" ".join(f"{n.pitch_class}{n.octave}:{n.duration}" for n in p.notes))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "parse-check":
            return _parse_check(args)
        cfg = _config(args)
    except (ConfigError, ScoreParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "run":
            for path in run_experiment(cfg, trajectories=args.trajectories):
                print(path)
        elif args.command == "compare":
            print(compare_dir(cfg.experiment.output_dir, cfg))
        elif args.command == "tradeoff":
            print(emit_tradeoff_curve(cfg, Path(cfg.experiment.output_dir) / "tradeoff.csv"))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any failure during a run maps to one exit code
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
