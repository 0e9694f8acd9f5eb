import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import satrestore.config as cfg_module
from satrestore import __version__
from satrestore.errors import SatRestoreError
from satrestore.models import RunConfig
from satrestore.pipeline import RUN_SEQUENCE, Pipeline

# CLI subcommand -> pipeline stage
STAGE_COMMANDS = {
    "train-ddn": "ddn",
    "transfer": "transfer",
    "train-restore": "distill",
    "restore": "restore",
    "evaluate": "evaluate",
}


def _load_config(args) -> RunConfig:
    return cfg_module.load(Path(args.config), overrides=args.set)


def cmd_synth(clean_path: Path | None, spec: str | None, out_dir: Path | None, cfg: RunConfig) -> int:
    """Write reference, distorted and ground-truth validation images."""
    changes = {}
    if spec:
        changes["degrade"] = spec
    if out_dir:
        changes["output_dir"] = str(out_dir)
    cfg = cfg_module.with_overrides(cfg, **changes)

    pipeline = Pipeline(cfg)
    try:
        print(f"Synthesizing validation images in '{cfg.output_dir}/' ...", end=" ", flush=True)
        pipeline.run_stage("synth", clean_path=clean_path)
        print("done.")
    finally:
        pipeline.close()
    return 0


def cmd_stage(stage: str, cfg: RunConfig, **kwargs) -> int:
    pipeline = Pipeline(cfg)
    try:
        print(f"Running stage '{stage}' ...", end=" ", flush=True)
        pipeline.run_stage(stage, **kwargs)
        print("done.")
    finally:
        pipeline.close()
    return 0


def cmd_run(cfg: RunConfig) -> int:
    pipeline = Pipeline(cfg)
    try:
        for stage in RUN_SEQUENCE:
            if stage == "evaluate" and not cfg.ground_truth:
                print("No ground_truth configured; skipping evaluation.")
                continue
            print(f"Running stage '{stage}' ...", end=" ", flush=True)
            pipeline.run_stage(stage)
            print("done.")
    finally:
        pipeline.close()
    print(f"Restored image written to '{Path(cfg.output_dir) / 'restored.png'}'.")
    return 0


def _dispatch(args) -> int:
    if args.command == "synth":
        config_path = Path(args.config)
        cfg = _load_config(args) if config_path.exists() else cfg_module.validate_config(RunConfig())
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.offset is not None:
            cfg = replace(cfg, offset_y=args.offset[0], offset_x=args.offset[1])
        return cmd_synth(args.clean, args.degrade, args.out, cfg)

    cfg = _load_config(args)
    if args.command == "run":
        return cmd_run(cfg)
    kwargs = {}
    if args.command == "train-restore" and args.from_scratch:
        kwargs["from_scratch"] = True
    return cmd_stage(STAGE_COMMANDS[args.command], cfg, **kwargs)


def main(argv: list[str] | None = None):
    parser = argparse.ArgumentParser(
        prog="satrestore",
        description="Zero-shot satellite image restoration from a distorted image and a clean reference",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--config", default="config.toml", metavar="PATH",
        help="Path to the run config (default: config.toml)",
    )
    parser.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="Override one config key (repeatable)",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")

    subparsers = parser.add_subparsers(dest="command", required=True)

    # synth
    sp_synth = subparsers.add_parser("synth", help="Make a (reference, distorted, ground truth) triple")
    sp_synth.add_argument(
        "--clean", type=Path, metavar="PATH",
        help="Clean source image (default: a procedural aerial scene)",
    )
    sp_synth.add_argument("--degrade", metavar="SPEC", help="Degradation spec string")
    sp_synth.add_argument(
        "--offset", type=int, nargs=2, metavar=("DY", "DX"),
        help="Shift between reference and ground-truth crops",
    )
    sp_synth.add_argument("--seed", type=int, help="Seed for noise degradations")
    sp_synth.add_argument("--out", type=Path, metavar="DIR", help="Output directory")

    subparsers.add_parser("train-ddn", help="Train the distortion disentanglement networks")
    subparsers.add_parser("transfer", help="Create the graded-distortion training pairs")
    sp_restore = subparsers.add_parser("train-restore", help="Train the restoration network")
    sp_restore.add_argument(
        "--from-scratch", action="store_true",
        help="Train a trainable encoder from scratch instead of reusing the frozen content encoder",
    )
    subparsers.add_parser("restore", help="Restore the distorted image")
    subparsers.add_parser("evaluate", help="Score the restored image against the ground truth")
    subparsers.add_parser("run", help="Run every stage from train-ddn to evaluate")

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        _dispatch(args)
    except SatRestoreError as exc:
        print("FAILED", file=sys.stderr)
        print(f"Error: {exc}", file=sys.stderr)
        sys.exit(exc.exit_code)


if __name__ == "__main__":
    main()
