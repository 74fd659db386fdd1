"""The critic-gated inference loop, plus the two reference baselines.

Each round: generate an answer, have the critic inspect it, and either
return it (Accept) or retrieve more evidence and try again (Reject), until
the retrieval budget is exhausted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .core import (
    AnswerAttempt,
    Context,
    CritiqueLabel,
    context_append,
    context_with_rejection,
    turns_only,
)
from .critic import CritiqueDecision

DEFAULT_FEEDBACK_TEXT = (
    "Your previous answer '{answer}' was judged insufficiently supported. "
    "Gather more evidence and try again."
)


@dataclass(frozen=True)
class LoopConfig:
    """max_turns bounds retrieval rounds; 0 means answer once, never retrieve."""

    max_turns: int = 3
    retrieval_k: int = 3
    feedback_enabled: bool = True
    on_exhaustion: str = "abstain"
    feedback_text: str = DEFAULT_FEEDBACK_TEXT

    def __post_init__(self) -> None:
        if self.max_turns < 0:
            raise ValueError("max_turns must be >= 0")
        if self.retrieval_k < 1:
            raise ValueError("retrieval_k must be >= 1")
        if self.on_exhaustion not in ("abstain", "return_last"):
            raise ValueError(f"unknown exhaustion policy: {self.on_exhaustion!r}")


@dataclass(frozen=True)
class TraceStep:
    turn_index: int
    attempt: AnswerAttempt
    decision: CritiqueDecision


@dataclass(frozen=True)
class LoopOutcome:
    final_answer: str | None
    accepted: bool
    abstained: bool
    turns_used: int
    steps: tuple[TraceStep, ...]

    def to_dict(self) -> dict:
        return {
            "final_answer": self.final_answer,
            "accepted": self.accepted,
            "abstained": self.abstained,
            "turns_used": self.turns_used,
            "steps": [
                {
                    "turn_index": s.turn_index,
                    "answer": s.attempt.answer,
                    "rationale": s.attempt.rationale,
                    "label": s.decision.label.value,
                    "score": s.decision.score,
                }
                for s in self.steps
            ],
        }


class LoopError(RuntimeError):
    """A component failed mid-run; carries the partial trace."""

    def __init__(self, message: str, steps: Sequence[TraceStep]):
        super().__init__(message)
        self.steps = tuple(steps)


def run(question: str, reasoner, retriever, critic, config: LoopConfig) -> LoopOutcome:
    """Iterate answer generation, sufficiency inspection, and retrieval.

    Starts from an empty context. A critic failure propagates; it is never
    treated as an Accept.
    """
    context = Context()
    steps: list[TraceStep] = []
    retrievals = 0
    feedback: str | None = None
    while True:
        try:
            attempt = reasoner.generate_answer(question, context, feedback)
        except Exception as exc:
            raise LoopError(f"answer generation failed at turn {retrievals}: {exc}", steps) from exc
        try:
            decision = critic.evaluate(question, turns_only(context), attempt)
        except Exception as exc:
            raise LoopError(f"critic failed at turn {retrievals}: {exc}", steps) from exc
        steps.append(TraceStep(retrievals, attempt, decision))

        if decision.label is CritiqueLabel.ACCEPT:
            return LoopOutcome(attempt.answer, True, False, retrievals, tuple(steps))
        if retrievals >= config.max_turns:
            if config.on_exhaustion == "abstain":
                return LoopOutcome(None, False, True, retrievals, tuple(steps))
            return LoopOutcome(attempt.answer, False, False, retrievals, tuple(steps))

        if config.feedback_enabled:
            feedback = config.feedback_text.format(answer=attempt.answer)
            context = context_with_rejection(context, attempt, feedback)
        try:
            query = reasoner.generate_query(question, context)
            documents = retriever.retrieve(query, config.retrieval_k)
        except Exception as exc:
            raise LoopError(f"retrieval round {retrievals} failed: {exc}", steps) from exc
        context = context_append(context, query, documents)
        retrievals += 1


def naive_generate(question: str, reasoner) -> str:
    """Answer from the model's own knowledge: no retrieval, no critic."""
    return reasoner.generate_answer(question, Context(), None).answer


def standard_rag(question: str, reasoner, retriever, k: int) -> str:
    """One retrieval with the verbatim question, then one answer; no critic."""
    documents = retriever.retrieve(question, k)
    context = context_append(Context(), question, documents)
    return reasoner.generate_answer(question, context, None).answer
