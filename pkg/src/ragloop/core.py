"""Shared data model for multi-round retrieval QA.

Questions, accumulated retrieval context, answer attempts, critique labels
and trace records live here, together with answer normalization and
matching. Trace labeling and metric computation must share one matching
definition, so both import from this module.
"""

from __future__ import annotations

import json
import re
import string
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Sequence


class TraceFormatError(ValueError):
    """A trace or QA file line failed to parse or validate."""


class CritiqueLabel(str, Enum):
    ACCEPT = "Accept"
    REJECT = "Reject"


@dataclass(frozen=True)
class Document:
    """One corpus passage. `doc_id` must be unique within a corpus."""

    doc_id: str
    title: str
    text: str

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        if not self.text:
            raise ValueError(f"document {self.doc_id!r} has empty text")


@dataclass(frozen=True)
class QaPair:
    question: str
    gold_answer: str
    id: str | None = None

    def __post_init__(self) -> None:
        if not self.question:
            raise ValueError("question must be non-empty")
        if not self.gold_answer:
            raise ValueError("gold_answer must be non-empty")


@dataclass(frozen=True)
class AnswerAttempt:
    """An answer plus its supporting rationale, as parsed from the reasoner."""

    answer: str
    rationale: str

    def __post_init__(self) -> None:
        if not self.answer:
            raise ValueError("attempt answer must be non-empty")


@dataclass(frozen=True)
class Turn:
    """One retrieval round: the query issued and the documents it returned.

    An empty document list records a failed or empty search rather than
    dropping the round.
    """

    query: str
    documents: tuple[Document, ...] = ()

    def __post_init__(self) -> None:
        if not self.query:
            raise ValueError("turn query must be non-empty")


@dataclass(frozen=True)
class RejectedAttempt:
    attempt: AnswerAttempt
    feedback: str


@dataclass(frozen=True)
class Context:
    """Ordered accumulation of retrieval turns, empty at turn 0.

    `rejected_attempts` is populated only when verbal feedback is enabled;
    trace serialization always stores the turns-only view.
    """

    turns: tuple[Turn, ...] = ()
    rejected_attempts: tuple[RejectedAttempt, ...] = ()


EMPTY_CONTEXT = Context()


def context_append(context: Context, query: str, documents: Sequence[Document]) -> Context:
    """Return a new context with one more turn; prior turns are untouched."""
    turn = Turn(query=query, documents=tuple(documents))
    return Context(turns=context.turns + (turn,), rejected_attempts=context.rejected_attempts)


def context_with_rejection(context: Context, attempt: AnswerAttempt, feedback: str) -> Context:
    return Context(
        turns=context.turns,
        rejected_attempts=context.rejected_attempts + (RejectedAttempt(attempt, feedback),),
    )


def turns_only(context: Context) -> Context:
    """Strip rejected attempts; the critic always sees this view."""
    if not context.rejected_attempts:
        return context
    return Context(turns=context.turns)


def render_context(context: Context, include_rejected: bool = True) -> str:
    """Serialize a context to deterministic text.

    Each turn renders as a "Search:" line followed by numbered documents.
    Rejected attempts (when requested and present) follow the turns. The
    empty context renders to the empty string.
    """
    lines: list[str] = []
    for turn in context.turns:
        lines.append(f"Search: {turn.query}")
        for i, doc in enumerate(turn.documents, start=1):
            if doc.title:
                lines.append(f"[{i}] {doc.title}: {doc.text}")
            else:
                lines.append(f"[{i}] {doc.text}")
    if include_rejected:
        for rejected in context.rejected_attempts:
            lines.append(f"Rejected answer: {rejected.attempt.answer}")
            lines.append(f"Feedback: {rejected.feedback}")
    return "\n".join(lines)


def render_critic_input(question: str, context: Context, answer: str, rationale: str) -> str:
    """Canonical text form of a critic input.

    This exact byte layout is a cross-component contract (see
    contracts/serialization_golden.json); change it only with a version bump.
    """
    return "\n".join(
        [
            f"Question: {question}",
            "Context:",
            render_context(context, include_rejected=False),
            f"Answer: {answer}",
            f"Rationale: {rationale}",
        ]
    )


@dataclass(frozen=True)
class TraceRecord:
    """One labeled tuple of (question, context, attempt) with its verdict."""

    qa_id: str
    turn_index: int
    question: str
    context: Context
    attempt: AnswerAttempt
    label: CritiqueLabel

    def __post_init__(self) -> None:
        if self.turn_index < 0:
            raise ValueError("turn_index must be non-negative")


_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_answer(text: str) -> str:
    """Lowercase, strip punctuation, drop articles, collapse whitespace.

    The standard QA normalization; idempotent by construction.
    """
    text = text.lower().translate(_PUNCT_TABLE)
    text = _ARTICLE_RE.sub(" ", text)
    return " ".join(text.split())


def answers_match(predicted: str, gold: str) -> bool:
    return normalize_answer(predicted) == normalize_answer(gold)


# --- JSONL serialization ---------------------------------------------------
# Trace schema (field order matters for byte-stable output):
# {"qa_id", "turn_index", "question", "context", "answer", "rationale", "label"}


def document_to_dict(doc: Document) -> dict:
    return {"doc_id": doc.doc_id, "title": doc.title, "text": doc.text}


def context_to_dict(context: Context) -> list[dict]:
    return [
        {"query": t.query, "documents": [document_to_dict(d) for d in t.documents]}
        for t in context.turns
    ]


def context_from_dict(raw: list) -> Context:
    turns = []
    for entry in raw:
        docs = tuple(
            Document(doc_id=d["doc_id"], title=d["title"], text=d["text"])
            for d in entry["documents"]
        )
        turns.append(Turn(query=entry["query"], documents=docs))
    return Context(turns=tuple(turns))


def trace_record_to_dict(record: TraceRecord) -> dict:
    return {
        "qa_id": record.qa_id,
        "turn_index": record.turn_index,
        "question": record.question,
        "context": context_to_dict(record.context),
        "answer": record.attempt.answer,
        "rationale": record.attempt.rationale,
        "label": record.label.value,
    }


def trace_record_from_dict(raw: dict) -> TraceRecord:
    return TraceRecord(
        qa_id=raw["qa_id"],
        turn_index=raw["turn_index"],
        question=raw["question"],
        context=context_from_dict(raw["context"]),
        attempt=AnswerAttempt(answer=raw["answer"], rationale=raw["rationale"]),
        label=CritiqueLabel(raw["label"]),
    )


def write_trace_jsonl(records: Iterable[TraceRecord], path: str | Path) -> int:
    count = 0
    with Path(path).open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(trace_record_to_dict(record), ensure_ascii=False) + "\n")
            count += 1
    return count


def read_trace_jsonl(path: str | Path) -> Iterator[TraceRecord]:
    """Yield trace records; a malformed line raises naming its line number."""
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield trace_record_from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise TraceFormatError(f"{path}: line {line_no}: {exc}") from exc


def load_qa_pairs(path: str | Path) -> list[QaPair]:
    """Read a QA source file: JSONL of {"id", "question", "answer"}."""
    pairs: list[QaPair] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
                pairs.append(
                    QaPair(question=raw["question"], gold_answer=raw["answer"], id=raw.get("id"))
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise TraceFormatError(f"{path}: line {line_no}: {exc}") from exc
    return pairs
