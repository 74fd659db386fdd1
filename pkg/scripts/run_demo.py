#!/usr/bin/env python3
"""End-to-end demo on the toy workspace: index, distill, train the native
critic, report its confusion matrix, evaluate all three pipelines, and sweep
the turn budget. Run scripts/make_toy_data.py first (or pass --data-dir).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ragloop.cli import dispatch


def stage(argv: list[str]) -> None:
    print(f"\n$ ragloop {' '.join(argv)}", file=sys.stderr)
    code = dispatch(argv)
    if code != 0:
        sys.exit(code)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data-dir", default="toy_data")
    args = parser.parse_args()
    data = Path(args.data_dir)
    config = str(data / "config.yaml")

    stage(["index", "build", "--corpus", str(data / "corpus.jsonl"), "--out", str(data / "index.json")])
    stage(["distill", "--config", config, "--out", str(data / "traces.jsonl")])
    stage(["stats", "--data", str(data / "traces.jsonl")])
    stage(["train-critic", "--data", str(data / "traces.jsonl"), "--out", str(data / "critic.json")])
    stage(["critic-report", "--data", str(data / "traces.jsonl"), "--critic", f"native:{data / 'critic.json'}"])
    for pipeline in ("naive", "standard", "simrag"):
        stage(["eval", "--pipeline", pipeline, "--config", config, "--out-dir", str(data / "eval")])
    stage(["sweep", "--turns", "0..4", "--config", config, "--out", str(data / "sweep.csv")])
    print(f"\nartifacts under {data}/", file=sys.stderr)


if __name__ == "__main__":
    main()
