"""Command-line entry point.

One declarative JSON config drives everything; each subcommand runs one
stage against the config's output directory and prints a one-line JSON
summary. Exit codes: 0 success, 1 stage failure, 2 invalid config,
3 missing predecessor artifacts.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import pipeline
from .config import ConfigInvalid, RunConfig, effective_config_json, load_config
from .pipeline import MissingPredecessor

EXIT_OK = 0
EXIT_STAGE_FAILURE = 1
EXIT_CONFIG_INVALID = 2
EXIT_MISSING_PREDECESSOR = 3

COMMANDS = ("ingest", "extract", "insights", "topics", "train", "explain", "synth", "run")


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adhook",
        description="Hook-period ad analysis pipeline (stage-by-stage or end to end).",
    )
    parser.add_argument("command", choices=COMMANDS, help="stage to run")
    parser.add_argument("--config", required=True, help="path to the run config JSON")
    parser.add_argument("--workers", type=int, default=1, help="parallel workers per stage")
    parser.add_argument("--seed", type=int, default=None, help="override every seed in the config")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (dotted path), e.g. sampler.m=4",
    )
    return parser


def _emit(payload: dict) -> None:
    sys.stdout.write(json.dumps(payload, sort_keys=True) + "\n")


def _run_synth(cfg: RunConfig) -> dict:
    from .harness import synth_from_config

    _, result = synth_from_config(cfg)
    return result


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, overrides=args.overrides, global_seed=args.seed)
    except ConfigInvalid as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG_INVALID

    run_dir = Path(cfg.output_dir)
    started = time.time()
    try:
        if args.command == "synth":
            run_dir.mkdir(parents=True, exist_ok=True)
            summary = _run_synth(cfg)
        elif args.command == "run":
            if not cfg.manifest_path:
                run_dir.mkdir(parents=True, exist_ok=True)
                synth_result = _run_synth(cfg)
                cfg.manifest_path = synth_result["manifest_path"]
                cfg.mllm["corpus_path"] = synth_result["mock_corpus_path"]
            summary = pipeline.run_all(cfg, workers=args.workers)
        else:
            run_dir.mkdir(parents=True, exist_ok=True)
            pipeline._write_text(run_dir / "config.json", effective_config_json(cfg))
            stage = {
                "ingest": lambda: pipeline.stage_ingest(cfg, run_dir),
                "extract": lambda: pipeline.stage_extract(cfg, run_dir, args.workers),
                "insights": lambda: pipeline.stage_insights(cfg, run_dir, args.workers),
                "topics": lambda: pipeline.stage_topics(cfg, run_dir),
                "train": lambda: pipeline.stage_train(cfg, run_dir),
                "explain": lambda: pipeline.stage_explain(cfg, run_dir),
            }[args.command]
            summary = stage()
    except MissingPredecessor as exc:
        sys.stderr.write(f"error: MissingPredecessor({exc.stage!r}): {exc}\n")
        return EXIT_MISSING_PREDECESSOR
    except Exception as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return EXIT_STAGE_FAILURE

    _emit(
        {
            "command": args.command,
            "status": "ok",
            "output_dir": str(run_dir),
            "elapsed_s": round(time.time() - started, 3),
            "summary": summary,
        }
    )
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
