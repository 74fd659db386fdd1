"""Reasoner backends: a deterministic scripted fixture and an HTTP client.

Both produce (answer, rationale) pairs and search queries from a question
plus accumulated context. Model output follows a line-marker grammar
("Answer:", "Rationale:", "Query:"); parsing takes the first occurrence of
each marker with continuation lines up to the next marker.
"""

from __future__ import annotations

import hashlib
import os
import re
import threading
from dataclasses import dataclass
from typing import Mapping

import httpx

from .core import AnswerAttempt, Context, render_context
from .transport import TransportError, post_json

__all__ = [
    "PromptTemplate",
    "ReasonerConfig",
    "ScriptedStep",
    "ScriptedReasoner",
    "HttpReasoner",
    "ReasonerError",
    "TransportError",
    "ParseError",
    "AuditEntry",
    "parse_answer_output",
    "parse_query_output",
]


class ReasonerError(RuntimeError):
    pass


class ParseError(ReasonerError):
    """Model output did not follow the expected grammar; carries the raw text."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


DEFAULT_ANSWER_TEMPLATE = """\
You are answering a question using the search results gathered so far.

{context}

Question: {question}
{feedback}
Reply with exactly two lines:
Answer: <short answer>
Rationale: <one sentence of supporting reasoning>"""

DEFAULT_QUERY_TEMPLATE = """\
You are gathering evidence to answer a question. Propose the next search.

{context}

Question: {question}
Reply with one line:
Query: <search query>"""


@dataclass(frozen=True)
class PromptTemplate:
    """Prompt skeletons; each declared placeholder must appear exactly once."""

    answer_template: str = DEFAULT_ANSWER_TEMPLATE
    query_template: str = DEFAULT_QUERY_TEMPLATE
    in_context_examples: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        for name, template, placeholders in (
            ("answer_template", self.answer_template, ("{question}", "{context}", "{feedback}")),
            ("query_template", self.query_template, ("{question}", "{context}")),
        ):
            for placeholder in placeholders:
                n = template.count(placeholder)
                if n != 1:
                    raise ValueError(
                        f"{name} must contain {placeholder} exactly once (found {n})"
                    )

    def answer_prompt(self, question: str, context: Context, feedback: str | None) -> str:
        body = self.answer_template.format(
            question=question,
            context=render_context(context),
            feedback=feedback or "",
        )
        return "\n\n".join((*self.in_context_examples, body))

    def query_prompt(self, question: str, context: Context) -> str:
        body = self.query_template.format(question=question, context=render_context(context))
        return "\n\n".join((*self.in_context_examples, body))


@dataclass(frozen=True)
class ReasonerConfig:
    backend: str = "scripted"
    endpoint: str | None = None
    model_name: str = "scripted-fixture"
    temperature: float = 0.0
    max_output_tokens: int = 256
    retry_limit: int = 2
    script_path: str | None = None

    def __post_init__(self) -> None:
        if self.backend not in ("http", "scripted"):
            raise ValueError(f"unknown reasoner backend: {self.backend!r}")
        if (self.endpoint is not None) != (self.backend == "http"):
            raise ValueError("endpoint must be set exactly when backend is 'http'")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")
        if self.retry_limit < 0:
            raise ValueError("retry_limit must be >= 0")


# --- output grammar ---------------------------------------------------------

_MARKER_RE = re.compile(r"^\s*(Answer|Rationale|Query)\s*:\s?(.*)$")


def _sections(raw: str) -> dict[str, str]:
    """Split raw output into marker sections; first occurrence of each wins."""
    sections: dict[str, list[str]] = {}
    current: list[str] | None = None
    for line in raw.splitlines():
        match = _MARKER_RE.match(line)
        if match:
            marker = match.group(1)
            if marker in sections:
                current = None  # repeated marker: ignore the repeat
            else:
                sections[marker] = [match.group(2)]
                current = sections[marker]
        elif current is not None:
            current.append(line)
    return {marker: "\n".join(lines).strip() for marker, lines in sections.items()}


def parse_answer_output(raw: str) -> AnswerAttempt:
    sections = _sections(raw)
    answer = sections.get("Answer", "")
    if not answer:
        raise ParseError("no non-empty 'Answer:' line in model output", raw=raw)
    return AnswerAttempt(answer=answer, rationale=sections.get("Rationale", ""))


def parse_query_output(raw: str) -> str:
    query = _sections(raw).get("Query", "")
    if not query:
        raise ParseError("no non-empty 'Query:' line in model output", raw=raw)
    return query


# --- audit log --------------------------------------------------------------


@dataclass(frozen=True)
class AuditEntry:
    kind: str  # "answer" | "query"
    prompt_sha256: str
    raw_output: str
    parse_outcome: str


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class _AuditMixin:
    def __init__(self) -> None:
        self._audit: list[AuditEntry] = []
        self._audit_lock = threading.Lock()

    @property
    def audit_log(self) -> tuple[AuditEntry, ...]:
        with self._audit_lock:
            return tuple(self._audit)

    def _record(self, kind: str, prompt: str, raw: str, outcome: str) -> None:
        entry = AuditEntry(kind, _sha256(prompt), raw, outcome)
        with self._audit_lock:
            self._audit.append(entry)


# --- scripted backend -------------------------------------------------------


@dataclass(frozen=True)
class ScriptedStep:
    answer: str
    rationale: str
    query: str


class ScriptedReasoner(_AuditMixin):
    """Pure lookup table keyed by (qa_id, turn index); the test-suite oracle.

    `question_ids` maps question text to qa_id so the reasoner can be driven
    by the same (question, context) interface as a live backend. The turn
    index is the number of retrieval turns in the context.
    """

    def __init__(
        self,
        steps: Mapping[tuple[str, int], ScriptedStep],
        question_ids: Mapping[str, str],
    ):
        super().__init__()
        self._steps = dict(steps)
        self._question_ids = dict(question_ids)

    def _step_for(self, question: str, turn_index: int) -> ScriptedStep:
        qa_id = self._question_ids.get(question)
        if qa_id is None:
            raise LookupError(f"no scripted qa_id for question: {question!r}")
        step = self._steps.get((qa_id, turn_index))
        if step is None:
            raise LookupError(f"no scripted step for ({qa_id!r}, turn {turn_index})")
        return step

    def generate_answer(
        self, question: str, context: Context, feedback: str | None = None
    ) -> AnswerAttempt:
        step = self._step_for(question, len(context.turns))
        prompt_key = "\x00".join((question, render_context(context), feedback or ""))
        raw = f"Answer: {step.answer}\nRationale: {step.rationale}"
        self._record("answer", prompt_key, raw, "scripted")
        return AnswerAttempt(answer=step.answer, rationale=step.rationale)

    def generate_query(self, question: str, context: Context) -> str:
        step = self._step_for(question, len(context.turns))
        prompt_key = "\x00".join((question, render_context(context)))
        self._record("query", prompt_key, f"Query: {step.query}", "scripted")
        if not step.query:
            raise LookupError(f"scripted step for {question!r} has an empty query")
        return step.query


# --- HTTP backend -----------------------------------------------------------


API_KEY_ENV_VAR = "RAGLOOP_API_KEY"


class HttpReasoner(_AuditMixin):
    """Client for the POST /generate protocol.

    Request: {"model", "prompt", "temperature", "max_tokens"}; response:
    {"text": str}. Transport failures and unparseable outputs are each
    retried up to `retry_limit` extra times, then raised; parse retries
    resample rather than re-parse. Credentials come from the RAGLOOP_API_KEY
    environment variable and are sent as a bearer token when present.
    """

    def __init__(
        self,
        config: ReasonerConfig,
        template: PromptTemplate | None = None,
        client: httpx.Client | None = None,
        max_in_flight: int = 4,
    ):
        super().__init__()
        if config.backend != "http":
            raise ValueError("HttpReasoner requires backend 'http'")
        self._config = config
        self._template = template or PromptTemplate()
        self._client = client or httpx.Client(timeout=30.0)
        self._semaphore = threading.Semaphore(max_in_flight)
        self._url = config.endpoint.rstrip("/") + "/generate"
        api_key = os.environ.get(API_KEY_ENV_VAR)
        self._headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}

    def _call(self, prompt: str) -> str:
        payload = {
            "model": self._config.model_name,
            "prompt": prompt,
            "temperature": self._config.temperature,
            "max_tokens": self._config.max_output_tokens,
        }
        with self._semaphore:
            response = post_json(self._client, self._url, payload, retries=0, headers=self._headers)
        text = response.get("text")
        if not isinstance(text, str):
            raise TransportError(f"{self._url} returned no 'text' field")
        return text

    def _generate(self, kind: str, prompt: str, parse):
        transport_failures = 0
        parse_failures = 0
        while True:
            try:
                raw = self._call(prompt)
            except TransportError:
                self._record(kind, prompt, "", "transport_error")
                transport_failures += 1
                if transport_failures > self._config.retry_limit:
                    raise
                continue
            try:
                result = parse(raw)
            except ParseError:
                self._record(kind, prompt, raw, "parse_error")
                parse_failures += 1
                if parse_failures > self._config.retry_limit:
                    raise
                continue
            outcome = "ok"
            if kind == "answer" and not result.rationale:
                outcome = "ok_missing_rationale"
            self._record(kind, prompt, raw, outcome)
            return result

    def generate_answer(
        self, question: str, context: Context, feedback: str | None = None
    ) -> AnswerAttempt:
        prompt = self._template.answer_prompt(question, context, feedback)
        return self._generate("answer", prompt, parse_answer_output)

    def generate_query(self, question: str, context: Context) -> str:
        prompt = self._template.query_prompt(question, context)
        return self._generate("query", prompt, parse_query_output)
