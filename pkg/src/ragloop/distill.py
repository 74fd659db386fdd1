"""Self-practice distillation: drive the reasoner and retriever over a QA
source set and emit a labeled trace dataset.

For every surviving pair exactly `max_turns` records are written, one per
turn, labeled by matching the attempt against the gold answer. An accepted
answer does not stop the pair early: every turn yields a record and the
context keeps growing.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .core import (
    Context,
    CritiqueLabel,
    QaPair,
    TraceRecord,
    answers_match,
    context_append,
    read_trace_jsonl,
    render_context,
    trace_record_to_dict,
)
from .reasoner import ReasonerError

logger = logging.getLogger(__name__)

_SKIPPED = object()


@dataclass(frozen=True)
class DistillConfig:
    max_turns: int
    output_path: Path
    retrieval_k: int = 3
    on_backend_error: str = "skip_pair"
    seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        if self.max_turns < 1:
            raise ValueError("max_turns must be >= 1")
        if self.retrieval_k < 1:
            raise ValueError("retrieval_k must be >= 1")
        if self.on_backend_error not in ("skip_pair", "abort"):
            raise ValueError(f"unknown error policy: {self.on_backend_error!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class DistillReport:
    pairs_processed: int
    records_emitted: int
    skipped_pairs: int
    label_histogram_per_turn: dict[int, tuple[int, int]]  # turn -> (accept, reject)
    wall_time: float

    def to_dict(self) -> dict:
        return {
            "pairs_processed": self.pairs_processed,
            "records_emitted": self.records_emitted,
            "skipped_pairs": self.skipped_pairs,
            "label_histogram_per_turn": {
                str(turn): {"accept": a, "reject": r}
                for turn, (a, r) in sorted(self.label_histogram_per_turn.items())
            },
            "wall_time": self.wall_time,
        }


def qa_identifier(pair: QaPair, position: int) -> str:
    return pair.id if pair.id else f"pair-{position:05d}"


def _distill_pair(
    pair: QaPair,
    qa_id: str,
    reasoner,
    retriever,
    labeler: Callable[[str, str], bool],
    config: DistillConfig,
) -> list[TraceRecord]:
    context = Context()
    records: list[TraceRecord] = []
    for turn in range(config.max_turns):
        attempt = reasoner.generate_answer(pair.question, context, None)
        label = (
            CritiqueLabel.ACCEPT
            if labeler(attempt.answer, pair.gold_answer)
            else CritiqueLabel.REJECT
        )
        records.append(
            TraceRecord(
                qa_id=qa_id,
                turn_index=turn,
                question=pair.question,
                context=context,
                attempt=attempt,
                label=label,
            )
        )
        if turn + 1 >= config.max_turns:
            break  # the trailing query/retrieval would never be consumed
        query = reasoner.generate_query(pair.question, context)
        try:
            documents = retriever.retrieve(query, config.retrieval_k)
        except Exception:
            logger.warning("retrieval failed for %s (turn %d); recording empty turn", qa_id, turn)
            documents = []
        context = context_append(context, query, documents)
    return records


def distill(
    qa_pairs: Sequence[QaPair],
    reasoner,
    retriever,
    config: DistillConfig,
    labeler: Callable[[str, str], bool] = answers_match,
) -> DistillReport:
    """Run the self-practice loop and append records to config.output_path.

    Records are written in (pair, turn) order regardless of worker count;
    reasoner failures skip the whole pair or abort the run per config.
    """
    started = time.monotonic()

    def one_pair(item: tuple[int, QaPair]):
        position, pair = item
        qa_id = qa_identifier(pair, position)
        try:
            return _distill_pair(pair, qa_id, reasoner, retriever, labeler, config)
        except ReasonerError as exc:
            if config.on_backend_error == "abort":
                raise
            logger.warning("skipping pair %s after reasoner failure: %s", qa_id, exc)
            return _SKIPPED

    items = list(enumerate(qa_pairs))
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(one_pair, items))
    else:
        results = [one_pair(item) for item in items]

    skipped = 0
    emitted = 0
    histogram: dict[int, list[int]] = {}
    with Path(config.output_path).open("w", encoding="utf-8") as fh:
        for result in results:
            if result is _SKIPPED:
                skipped += 1
                continue
            for record in result:
                fh.write(json.dumps(trace_record_to_dict(record), ensure_ascii=False) + "\n")
                emitted += 1
                bucket = histogram.setdefault(record.turn_index, [0, 0])
                if record.label is CritiqueLabel.ACCEPT:
                    bucket[0] += 1
                else:
                    bucket[1] += 1

    return DistillReport(
        pairs_processed=len(qa_pairs),
        records_emitted=emitted,
        skipped_pairs=skipped,
        label_histogram_per_turn={t: (a, r) for t, (a, r) in histogram.items()},
        wall_time=time.monotonic() - started,
    )


@dataclass(frozen=True)
class DatasetStats:
    size: int
    accept: int
    reject: int
    per_turn: dict[int, dict]

    def to_dict(self) -> dict:
        return {
            "size": self.size,
            "accept": self.accept,
            "reject": self.reject,
            "per_turn": {str(t): stats for t, stats in sorted(self.per_turn.items())},
        }


def dataset_stats(path: str | Path) -> DatasetStats:
    """Exact counts over a trace file: label balance overall and per turn,
    plus mean context size per turn."""
    size = accept = 0
    buckets: dict[int, dict] = {}
    for record in read_trace_jsonl(path):
        size += 1
        is_accept = record.label is CritiqueLabel.ACCEPT
        accept += int(is_accept)
        bucket = buckets.setdefault(
            record.turn_index,
            {"count": 0, "accept": 0, "reject": 0, "_turns": 0, "_docs": 0, "_chars": 0},
        )
        bucket["count"] += 1
        bucket["accept" if is_accept else "reject"] += 1
        bucket["_turns"] += len(record.context.turns)
        bucket["_docs"] += sum(len(t.documents) for t in record.context.turns)
        bucket["_chars"] += len(render_context(record.context, include_rejected=False))

    per_turn = {}
    for turn, bucket in buckets.items():
        n = bucket["count"]
        per_turn[turn] = {
            "count": n,
            "accept": bucket["accept"],
            "reject": bucket["reject"],
            "mean_context_turns": bucket["_turns"] / n,
            "mean_context_documents": bucket["_docs"] / n,
            "mean_context_chars": bucket["_chars"] / n,
        }
    return DatasetStats(size=size, accept=accept, reject=size - accept, per_turn=per_turn)
