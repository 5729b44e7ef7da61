"""Command-line entry point.

    anopipe <stage> [--config FILE] [--preset NAME] [--seed N] [--force]
                    [--output-root DIR] [--variant cg|gcgan|both]

Stages: gen-data, train-gcgan, convert, assemble, train-detector, evaluate,
explain, report. Exit codes: 0 success, 2 precondition failure (bad config,
missing upstream artifacts, existing output without --force), 1 internal
error. ANOPIPE_OUTPUT_ROOT overrides the configured output root.
"""

from __future__ import annotations

import argparse
import sys

from .pipeline import config as pipeline_config
from .pipeline.config import PipelineConfig, PreconditionError
from .pipeline.stages import STAGE_TRAIN_DETECTOR, run_stage

STAGES = [
    "gen-data",
    "train-gcgan",
    "convert",
    "assemble",
    "train-detector",
    "evaluate",
    "explain",
    "report",
]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anopipe",
        description="Synthetic-anomaly detection pipeline: render, translate, "
                    "detect, explain.",
    )
    parser.add_argument("stage", choices=STAGES, help="pipeline stage to run")
    parser.add_argument("--config", help="YAML config file (preset defaults apply underneath)")
    parser.add_argument("--preset", choices=sorted(pipeline_config.PRESETS),
                        help="use a preset without a config file (default desk_scale)")
    parser.add_argument("--seed", type=int, help="override the root seed")
    parser.add_argument("--output-root", help="override the output root directory")
    parser.add_argument("--variant", choices=["cg", "gcgan", "both"], default="both",
                        help="detector variant for train-detector (default both)")
    parser.add_argument("--force", action="store_true",
                        help="overwrite existing stage outputs")
    return parser


def load_config(args: argparse.Namespace) -> PipelineConfig:
    if args.config:
        cfg = PipelineConfig.from_yaml(args.config)
        if args.preset and args.preset != cfg.preset:
            raise PreconditionError(
                f"--preset {args.preset} conflicts with config preset {cfg.preset}"
            )
    else:
        cfg = pipeline_config.preset(args.preset or "desk_scale")
    return cfg.with_overrides(seed=args.seed, output_root=args.output_root)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
        if args.stage == STAGE_TRAIN_DETECTOR:
            variants = ["cg", "gcgan"] if args.variant == "both" else [args.variant]
            for variant in variants:
                entry = run_stage(args.stage, cfg, force=args.force, variant=variant)
                print(f"[anopipe] {entry['stage']} done in {entry['wall_clock_s']:.1f}s")
        else:
            entry = run_stage(args.stage, cfg, force=args.force)
            print(f"[anopipe] {entry['stage']} done in {entry['wall_clock_s']:.1f}s")
        return 0
    except PreconditionError as exc:
        print(f"[anopipe] precondition failed: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"[anopipe] error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
