"""``roadcast`` command-line entry point.

Exit codes: 0 on success, 1 for invalid input or a missing upstream file,
2 for failures while running a stage.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from roadcast import __version__, pipeline
from roadcast.config import ConfigError, RunConfig
from roadcast.ingest import ValidationError

log = logging.getLogger("roadcast")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--stage-dir", type=Path, help="overrides the config stage directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="roadcast", description="Road-construction forecasting toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    sub.add_parser("ingest", parents=[common], help="validate and de-duplicate raw events")
    sub.add_parser("augment", parents=[common], help="attach closure, weather, POI, daylight and road data")
    feats = sub.add_parser("features", parents=[common], help="build the feature store")
    feats.add_argument("--n-intervals", type=int)
    tiles = sub.add_parser("tiles", parents=[common], help="render road tiles per zone")
    tiles.add_argument("--tile-size", type=int)
    for name, text in (("train", "train models"), ("evaluate", "score trained models on the test split")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--model", action="append", choices=("drcp", "lr", "mlp"),
                       help="restrict to this model (repeatable)")
        p.add_argument("--scenario", choices=("temporal", "spatial"))
        p.add_argument("--tile-size", type=int)
    pred = sub.add_parser("predict", parents=[common], help="forecast every zone for one interval")
    pred.add_argument("--model", choices=("drcp", "lr", "mlp"))
    pred.add_argument("--interval", type=int)
    pred.add_argument("--tile-size", type=int)
    sub.add_parser("stats", parents=[common], help="dataset statistics and figures")
    sub.add_parser("export-map", parents=[common], help="GeoJSON map of the latest forecast")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    over = {"seed": args.seed, "stage_dir": args.stage_dir}
    for attr, key in (("n_intervals", "n_intervals"), ("tile_size", "tile_size"),
                      ("scenario", "scenario"), ("interval", "predict_interval")):
        over[key] = getattr(args, attr, None)
    model = getattr(args, "model", None)
    if isinstance(model, list):
        over["models"] = tuple(dict.fromkeys(model))
    elif model is not None:
        over["predict_model"] = model
    try:
        return cfg.with_overrides(**over)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


STAGES = {
    "synth": pipeline.run_synth,
    "ingest": pipeline.run_ingest,
    "augment": pipeline.run_augment,
    "features": pipeline.run_features,
    "tiles": pipeline.run_tiles,
    "train": pipeline.run_train,
    "evaluate": pipeline.run_evaluate,
    "predict": pipeline.run_predict,
    "stats": pipeline.run_stats,
    "export-map": pipeline.run_export_map,
}


def _threads() -> int | None:
    raw = os.environ.get("ROADCAST_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"ROADCAST_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("ROADCAST_THREADS must be at least 1")
    return n


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        threads = _threads()
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    try:
        with threadpool_limits(limits=threads):
            STAGES[args.command](cfg)
    except pipeline.MissingInputError as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    except (ConfigError, ValidationError) as exc:
        log.error("invalid input: %s", exc)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - any stage failure maps to the runtime exit code
        log.error("%s failed: %s", args.command, exc)
        log.debug("traceback", exc_info=True)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
