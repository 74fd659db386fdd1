"""Command line for the critic service: train a model, then serve it."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import yaml

from .model import ModelError
from .trainer import TrainerConfig, TrainerError, train


def _load_trainer_config(path: str, output_dir: str | None) -> TrainerConfig:
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    if not isinstance(raw, dict):
        raise TrainerError(f"{path}: trainer config must be a mapping")
    known = {
        "base_model_name",
        "max_input_tokens",
        "learning_rate",
        "epochs",
        "batch_size",
        "validation_fraction",
        "seed",
        "output_dir",
    }
    for key in raw:
        if key not in known:
            raise TrainerError(f"unknown trainer config key: {key}")
    out = output_dir or raw.get("output_dir")
    if not out:
        raise TrainerError("output_dir is required (config key or --out)")
    raw = {k: v for k, v in raw.items() if k != "output_dir"}
    return TrainerConfig(output_dir=Path(out), **raw)


def _cmd_train(args) -> int:
    config = _load_trainer_config(args.config, args.out)
    report = train(args.data, config)
    print(json.dumps(report.to_dict()))
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    uvicorn.run(create_app(args.model), host=args.host, port=args.port, log_level="info")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="critic-service", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="fine-tune a critic on trace JSONL")
    p_train.add_argument("--data", required=True)
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out", help="overrides output_dir from the config")
    p_train.set_defaults(handler=_cmd_train)

    p_serve = sub.add_parser("serve", help="serve a trained model over HTTP")
    p_serve.add_argument("--model", required=True)
    p_serve.add_argument("--port", type=int, default=8601)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.set_defaults(handler=_cmd_serve)

    try:
        args = parser.parse_args(argv)
    except SystemExit:
        return 1
    try:
        return args.handler(args)
    except (TrainerError, ModelError, FileNotFoundError, ValueError) as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
