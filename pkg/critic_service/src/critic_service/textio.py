"""Trace-file reading and critic-input text construction.

This component talks to the rest of the system only through files and HTTP,
so the trace schema and the canonical input serialization are reimplemented
here and pinned against contracts/serialization_golden.json at the repo
root. Keep render_input byte-compatible with that fixture.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

LABELS = ("Accept", "Reject")

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


class DatasetError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class TraceExample:
    question: str
    context: list[dict]  # [{"query": str, "documents": [{doc_id,title,text}]}]
    answer: str
    rationale: str
    label: str  # "Accept" | "Reject"


def _validate_context(raw, where: str) -> list[dict]:
    if not isinstance(raw, list):
        raise DatasetError(f"{where}: context must be a list")
    for turn in raw:
        if not isinstance(turn, dict) or "query" not in turn or "documents" not in turn:
            raise DatasetError(f"{where}: each context turn needs query and documents")
        for doc in turn["documents"]:
            if not all(key in doc for key in ("doc_id", "title", "text")):
                raise DatasetError(f"{where}: document missing doc_id/title/text")
    return raw


def example_from_dict(raw: dict, where: str = "record") -> TraceExample:
    try:
        label = raw["label"]
        if label not in LABELS:
            raise DatasetError(f"{where}: unknown label {label!r}")
        return TraceExample(
            question=raw["question"],
            context=_validate_context(raw["context"], where),
            answer=raw["answer"],
            rationale=raw["rationale"],
            label=label,
        )
    except KeyError as exc:
        raise DatasetError(f"{where}: missing field {exc}") from exc


def read_trace_dataset(path: str | Path) -> list[TraceExample]:
    examples = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}: line {line_no}: {exc}") from exc
            examples.append(example_from_dict(raw, where=f"{path}: line {line_no}"))
    return examples


def render_turns(context: list[dict]) -> str:
    lines: list[str] = []
    for turn in context:
        lines.append(f"Search: {turn['query']}")
        for i, doc in enumerate(turn["documents"], start=1):
            if doc["title"]:
                lines.append(f"[{i}] {doc['title']}: {doc['text']}")
            else:
                lines.append(f"[{i}] {doc['text']}")
    return "\n".join(lines)


def render_input(question: str, context: list[dict], answer: str, rationale: str) -> str:
    """Canonical (question, context, answer, rationale) serialization.

    Byte-identical to the producing component's form; see the golden file.
    """
    return "\n".join(
        [
            f"Question: {question}",
            "Context:",
            render_turns(context),
            f"Answer: {answer}",
            f"Rationale: {rationale}",
        ]
    )


def truncate_context(
    question: str,
    context: list[dict],
    answer: str,
    rationale: str,
    max_input_tokens: int,
) -> tuple[list[dict], bool, bool]:
    """Drop oldest turns until the rendered input fits the token budget.

    The question, answer, and rationale are always kept. Returns
    (turns, truncated, overflow); overflow means even the turn-free input
    exceeds the budget.
    """
    turns = list(context)
    truncated = False
    while len(tokenize(render_input(question, turns, answer, rationale))) > max_input_tokens:
        if not turns:
            return turns, truncated, True
        turns.pop(0)
        truncated = True
    return turns, truncated, False
