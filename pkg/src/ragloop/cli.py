"""Command-line surface tying the pipeline stages together.

Subcommands: index, distill, train-critic, critic-report, infer, eval,
sweep, stats. Exit codes: 0 success, 1 user error, 2 component or
transport failure. Errors print one JSON line to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, load_config, parse_critic_spec
from .core import TraceFormatError, load_qa_pairs, read_trace_jsonl
from .critic import (
    CriticError,
    NativeCritic,
    NativeCriticModel,
    NativeTrainConfig,
    OracleCritic,
    RemoteCritic,
    native_train,
)
from .distill import DistillConfig, dataset_stats, distill, qa_identifier
from .evaluation import critic_report, evaluate_pipeline, sweep_turns, write_sweep_csv
from .index import Bm25Index, Bm25Params, CorpusError, load_corpus
from .loop import LoopError, run
from .reasoner import (
    DEFAULT_ANSWER_TEMPLATE,
    DEFAULT_QUERY_TEMPLATE,
    HttpReasoner,
    PromptTemplate,
    ReasonerError,
    ScriptedReasoner,
    ScriptedStep,
)
from .transport import TransportError

EXIT_OK = 0
EXIT_USER_ERROR = 1
EXIT_COMPONENT_ERROR = 2

_USER_ERRORS = (ConfigError, CorpusError, TraceFormatError, ValueError, FileNotFoundError)
_COMPONENT_ERRORS = (TransportError, ReasonerError, CriticError, LoopError)


def _emit_error(message: str, code: int) -> int:
    print(json.dumps({"error": message, "exit_code": code}), file=sys.stderr)
    return code


def _print_run_header(config: RunConfig) -> None:
    header = {
        "run_header": {
            "config_hash": config.config_hash(),
            "seed": config.seed,
            "version": __version__,
            "effective_config": config.effective_dict(),
        }
    }
    print(json.dumps(header, ensure_ascii=False), file=sys.stderr)


def load_scripted_steps(path: str | Path) -> dict[tuple[str, int], ScriptedStep]:
    """Read scripted reasoner behavior: JSONL of
    {"qa_id", "turn_index", "answer", "rationale", "query"}."""
    steps: dict[tuple[str, int], ScriptedStep] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
                key = (raw["qa_id"], int(raw["turn_index"]))
                steps[key] = ScriptedStep(
                    answer=raw["answer"], rationale=raw.get("rationale", ""), query=raw["query"]
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"{path}: line {line_no}: {exc}") from exc
    return steps


def build_reasoner(config: RunConfig, qa_pairs=None):
    template = PromptTemplate(
        answer_template=(
            config.answer_template_path.read_text(encoding="utf-8")
            if config.answer_template_path
            else DEFAULT_ANSWER_TEMPLATE
        ),
        query_template=(
            config.query_template_path.read_text(encoding="utf-8")
            if config.query_template_path
            else DEFAULT_QUERY_TEMPLATE
        ),
    )
    if config.reasoner.backend == "scripted":
        if not config.reasoner.script_path:
            raise ConfigError("scripted reasoner requires reasoner.script_path")
        if qa_pairs is None:
            raise ConfigError("scripted reasoner requires a QA file to map questions to ids")
        steps = load_scripted_steps(config.reasoner.script_path)
        question_ids = {p.question: qa_identifier(p, i) for i, p in enumerate(qa_pairs)}
        return ScriptedReasoner(steps, question_ids)
    return HttpReasoner(config.reasoner, template)


def build_critic(spec: str, qa_pairs=None):
    spec = parse_critic_spec(spec)
    if spec == "oracle":
        if qa_pairs is None:
            raise ConfigError("oracle critic requires a QA file with gold answers")
        return OracleCritic.from_pairs(qa_pairs)
    kind, _, value = spec.partition(":")
    if kind == "native":
        if not Path(value).exists():
            raise ConfigError(f"native critic model not found: {value}")
        return NativeCritic(NativeCriticModel.load(value))
    return RemoteCritic(value)


def _parse_turns(text: str) -> list[int]:
    """Parse "0..6" or "0,1,2" into a list of turn budgets."""
    text = text.strip()
    if ".." in text:
        lo, _, hi = text.partition("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(part) for part in text.split(",") if part.strip() != ""]


# --- subcommand handlers ------------------------------------------------------


def _cmd_index(args) -> int:
    if args.index_action != "build":
        raise ConfigError(f"unknown index action: {args.index_action!r}")
    docs = load_corpus(args.corpus)
    index = Bm25Index(docs, Bm25Params(k1=args.k1, b=args.b))
    index.save(args.out)
    print(json.dumps({"indexed": index.doc_count, "out": str(args.out)}))
    return EXIT_OK


def _cmd_distill(args) -> int:
    config = load_config(args.config)
    _print_run_header(config)
    qa_path = args.qa or config.qa_path
    if qa_path is None:
        raise ConfigError("distill requires --qa or qa_path in the config")
    index_path = args.index or config.index_path
    if index_path is None:
        raise ConfigError("distill requires --index or index_path in the config")
    qa_pairs = load_qa_pairs(qa_path)
    retriever = Bm25Index.load(index_path)
    reasoner = build_reasoner(config, qa_pairs)
    dconfig = DistillConfig(
        max_turns=config.distill.max_turns,
        output_path=Path(args.out),
        retrieval_k=config.distill.retrieval_k,
        on_backend_error=config.distill.on_backend_error,
        seed=config.seed,
        workers=config.distill.workers,
    )
    report = distill(qa_pairs, reasoner, retriever, dconfig)
    sidecar = Path(str(args.out) + ".report.json")
    sidecar.write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
    print(json.dumps(report.to_dict()))
    return EXIT_OK


def _cmd_train_critic(args) -> int:
    records = list(read_trace_jsonl(args.data))
    hyper = NativeTrainConfig(
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        l2_penalty=args.l2_penalty,
        threshold=args.threshold,
        class_weighting=args.class_weighting,
    )
    model = native_train(records, hyper)
    model.save(args.out)
    print(json.dumps({"out": str(args.out), "metadata": model.training_metadata}))
    return EXIT_OK


def _cmd_critic_report(args) -> int:
    qa_pairs = load_qa_pairs(args.qa) if args.qa else None
    critic = build_critic(args.critic, qa_pairs)
    report = critic_report(args.data, critic)
    print(json.dumps(report.to_dict()))
    print(report.text_table(), file=sys.stderr)
    return EXIT_OK


def _cmd_infer(args) -> int:
    config = load_config(args.config)
    _print_run_header(config)
    qa_pairs = load_qa_pairs(args.qa or config.qa_path) if (args.qa or config.qa_path) else None
    index_path = args.index or config.index_path
    if index_path is None:
        raise ConfigError("infer requires --index or index_path in the config")
    retriever = Bm25Index.load(index_path)
    reasoner = build_reasoner(config, qa_pairs)
    critic = build_critic(args.critic or config.critic_spec, qa_pairs)

    if args.question:
        outcome = run(args.question, reasoner, retriever, critic, config.loop)
        print(json.dumps(outcome.to_dict(), ensure_ascii=False))
        return EXIT_OK
    if qa_pairs is None:
        raise ConfigError("infer requires --question or a QA file for batch mode")
    out_fh = Path(args.out).open("w", encoding="utf-8") if args.out else sys.stdout
    try:
        for pair in qa_pairs:
            outcome = run(pair.question, reasoner, retriever, critic, config.loop)
            row = {"id": pair.id, "question": pair.question, **outcome.to_dict()}
            out_fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    finally:
        if out_fh is not sys.stdout:
            out_fh.close()
    return EXIT_OK


def _cmd_eval(args) -> int:
    config = load_config(args.config)
    _print_run_header(config)
    qa_pairs = load_qa_pairs(args.qa or config.qa_path)
    index_path = args.index or config.index_path
    if args.pipeline in ("simrag", "standard") and index_path is None:
        raise ConfigError(f"pipeline {args.pipeline!r} requires --index or index_path")
    retriever = Bm25Index.load(index_path) if index_path else None
    reasoner = build_reasoner(config, qa_pairs)
    critic = (
        build_critic(args.critic or config.critic_spec, qa_pairs)
        if args.pipeline == "simrag"
        else None
    )
    out_path = Path(args.out_dir) / f"{args.pipeline}_examples.jsonl" if args.out_dir else None
    if args.out_dir:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
    metrics, _ = evaluate_pipeline(
        args.pipeline,
        qa_pairs,
        reasoner=reasoner,
        retriever=retriever,
        critic=critic,
        loop_config=config.loop,
        retrieval_k=config.loop.retrieval_k,
        scoring=args.scoring,
        workers=args.workers,
        out_path=out_path,
    )
    payload = {"pipeline": args.pipeline, **metrics.to_dict()}
    if args.out_dir:
        (Path(args.out_dir) / f"{args.pipeline}_metrics.json").write_text(
            json.dumps(payload, indent=2), encoding="utf-8"
        )
    print(json.dumps(payload))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config = load_config(args.config)
    _print_run_header(config)
    qa_pairs = load_qa_pairs(args.qa or config.qa_path)
    index_path = args.index or config.index_path
    if index_path is None:
        raise ConfigError("sweep requires --index or index_path in the config")
    retriever = Bm25Index.load(index_path)
    reasoner = build_reasoner(config, qa_pairs)
    critic = build_critic(args.critic or config.critic_spec, qa_pairs)
    result = sweep_turns(
        qa_pairs,
        reasoner=reasoner,
        retriever=retriever,
        critic=critic,
        loop_config=config.loop,
        t_values=_parse_turns(args.turns),
        workers=args.workers,
    )
    if args.out:
        write_sweep_csv(result, args.out)
    print(json.dumps(result.to_dict()))
    return EXIT_OK


def _cmd_stats(args) -> int:
    print(json.dumps(dataset_stats(args.data).to_dict()))
    return EXIT_OK


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ragloop",
        description="Critic-gated multi-round retrieval QA pipelines",
    )
    parser.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="build a BM25 index from a corpus")
    index_sub = p_index.add_subparsers(dest="index_action", required=True)
    p_build = index_sub.add_parser("build")
    p_build.add_argument("--corpus", required=True)
    p_build.add_argument("--out", required=True)
    p_build.add_argument("--k1", type=float, default=1.2)
    p_build.add_argument("--b", type=float, default=0.75)
    p_build.set_defaults(handler=_cmd_index)

    p_distill = sub.add_parser("distill", help="generate a labeled trace dataset")
    p_distill.add_argument("--qa")
    p_distill.add_argument("--index")
    p_distill.add_argument("--config", required=True)
    p_distill.add_argument("--out", required=True)
    p_distill.set_defaults(handler=_cmd_distill)

    p_train = sub.add_parser("train-critic", help="train the native critic on traces")
    p_train.add_argument("--data", required=True)
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--learning-rate", type=float, default=1.0)
    p_train.add_argument("--epochs", type=int, default=500)
    p_train.add_argument("--l2-penalty", type=float, default=1e-4)
    p_train.add_argument("--threshold", type=float, default=0.5)
    p_train.add_argument("--class-weighting", action="store_true")
    p_train.set_defaults(handler=_cmd_train_critic)

    p_report = sub.add_parser("critic-report", help="confusion matrix of a critic vs stored labels")
    p_report.add_argument("--data", required=True)
    p_report.add_argument("--critic", required=True)
    p_report.add_argument("--qa", help="QA file with gold answers (oracle critic)")
    p_report.set_defaults(handler=_cmd_critic_report)

    p_infer = sub.add_parser("infer", help="run the critic-gated loop")
    p_infer.add_argument("--question")
    p_infer.add_argument("--qa")
    p_infer.add_argument("--index")
    p_infer.add_argument("--critic")
    p_infer.add_argument("--config", required=True)
    p_infer.add_argument("--out")
    p_infer.set_defaults(handler=_cmd_infer)

    p_eval = sub.add_parser("eval", help="evaluate a pipeline over a QA set")
    p_eval.add_argument("--pipeline", choices=["simrag", "naive", "standard"], required=True)
    p_eval.add_argument("--qa")
    p_eval.add_argument("--index")
    p_eval.add_argument("--critic")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--scoring", choices=["strict", "answered_only"], default="strict")
    p_eval.add_argument("--workers", type=int, default=1)
    p_eval.add_argument("--out-dir")
    p_eval.set_defaults(handler=_cmd_eval)

    p_sweep = sub.add_parser("sweep", help="max-turn ablation sweep")
    p_sweep.add_argument("--turns", required=True, help='range "0..6" or list "0,2,4"')
    p_sweep.add_argument("--qa")
    p_sweep.add_argument("--index")
    p_sweep.add_argument("--critic")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.add_argument("--out", help="CSV output path")
    p_sweep.set_defaults(handler=_cmd_sweep)

    p_stats = sub.add_parser("stats", help="summarize a trace dataset")
    p_stats.add_argument("--data", required=True)
    p_stats.set_defaults(handler=_cmd_stats)

    return parser


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit:
        return EXIT_USER_ERROR
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.handler(args)
    except _COMPONENT_ERRORS as exc:
        return _emit_error(str(exc), EXIT_COMPONENT_ERROR)
    except _USER_ERRORS as exc:
        return _emit_error(str(exc), EXIT_USER_ERROR)


def main(argv=None) -> int:
    return dispatch(argv)


if __name__ == "__main__":
    sys.exit(main())
