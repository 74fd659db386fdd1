"""Sufficiency critics: given (question, context, answer, rationale), decide
Accept or Reject.

Three interchangeable implementations:
  - OracleCritic: accepts exactly when the answer matches the gold label;
    the ceiling any trained critic is measured against.
  - NativeCritic: a log-linear classifier over term-presence and evidence
    overlap features, trained by maximizing the L2-regularized conditional
    log-likelihood of the binary labels with gradient ascent.
  - RemoteCritic: HTTP client for an externally trained model speaking the
    POST /predict wire protocol.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import httpx
import numpy as np

from .core import (
    AnswerAttempt,
    Context,
    CritiqueLabel,
    QaPair,
    TraceRecord,
    answers_match,
    context_to_dict,
)
from .index import tokenize
from .transport import TransportError, get_json, post_json


class CriticError(RuntimeError):
    pass


class ProtocolError(CriticError):
    """The remote critic returned a response outside the wire schema."""


@dataclass(frozen=True)
class CritiqueDecision:
    label: CritiqueLabel
    score: float  # probability assigned to Accept
    critic_id: str


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with Accept as the positive class."""

    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    @property
    def precision(self) -> float:
        denom = self.tp + self.fp
        return self.tp / denom if denom else 0.0

    @property
    def recall(self) -> float:
        denom = self.tp + self.fn
        return self.tp / denom if denom else 0.0

    def row_percentages(self) -> dict[str, dict[str, float]]:
        """Row-normalized percentages: rows are gold labels, columns predictions."""

        def row(a: int, b: int) -> dict[str, float]:
            total = a + b
            if not total:
                return {"Accept": 0.0, "Reject": 0.0}
            return {"Accept": 100.0 * a / total, "Reject": 100.0 * b / total}

        return {"Accept": row(self.tp, self.fn), "Reject": row(self.fp, self.tn)}


def evaluate_critic(
    predictions: Sequence[CritiqueDecision], gold_labels: Sequence[CritiqueLabel]
) -> ConfusionMatrix:
    if len(predictions) != len(gold_labels):
        raise ValueError(
            f"length mismatch: {len(predictions)} predictions vs {len(gold_labels)} labels"
        )
    tp = fp = tn = fn = 0
    for decision, gold in zip(predictions, gold_labels):
        if decision.label is CritiqueLabel.ACCEPT:
            if gold is CritiqueLabel.ACCEPT:
                tp += 1
            else:
                fp += 1
        else:
            if gold is CritiqueLabel.ACCEPT:
                fn += 1
            else:
                tn += 1
    return ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn)


# --- oracle ------------------------------------------------------------------


class OracleCritic:
    """Accepts iff the attempt matches the gold answer; score is 0 or 1."""

    critic_id = "oracle"

    def __init__(self, gold_answers: Mapping[str, str]):
        self._gold = dict(gold_answers)

    @classmethod
    def from_pairs(cls, pairs: Sequence[QaPair]) -> "OracleCritic":
        return cls({p.question: p.gold_answer for p in pairs})

    def evaluate(
        self, question: str, context: Context, attempt: AnswerAttempt
    ) -> CritiqueDecision:
        gold = self._gold.get(question)
        if gold is None:
            raise CriticError(f"no gold answer available for question: {question!r}")
        if answers_match(attempt.answer, gold):
            return CritiqueDecision(CritiqueLabel.ACCEPT, 1.0, self.critic_id)
        return CritiqueDecision(CritiqueLabel.REJECT, 0.0, self.critic_id)


# --- native log-linear critic -------------------------------------------------

# Feature blocks, in weight-vector order:
#   question+rationale unigrams, answer unigrams, then the overlap statistics.
FEATURE_SPEC = {
    "version": 1,
    "blocks": ["question_rationale_unigrams", "answer_unigrams", "overlap_stats"],
    "overlap_stats": ["answer_doc_overlap", "rationale_doc_overlap", "turn_count"],
}
_N_OVERLAP = len(FEATURE_SPEC["overlap_stats"])

_QR_PREFIX = "qr:"
_ANS_PREFIX = "ans:"


def _document_tokens(context: Context) -> set[str]:
    tokens: set[str] = set()
    for turn in context.turns:
        for doc in turn.documents:
            tokens.update(tokenize(doc.title))
            tokens.update(tokenize(doc.text))
    return tokens


def _overlap_fraction(tokens: list[str], doc_tokens: set[str]) -> float:
    unique = set(tokens)
    if not unique:
        return 0.0
    return len(unique & doc_tokens) / len(unique)


def extract_features(
    vocabulary: Mapping[str, int], question: str, context: Context, attempt: AnswerAttempt
) -> np.ndarray:
    """Feature vector of length len(vocabulary) + 3 (overlap block last)."""
    x = np.zeros(len(vocabulary) + _N_OVERLAP, dtype=np.float64)
    for token in tokenize(question) + tokenize(attempt.rationale):
        idx = vocabulary.get(_QR_PREFIX + token)
        if idx is not None:
            x[idx] = 1.0
    for token in tokenize(attempt.answer):
        idx = vocabulary.get(_ANS_PREFIX + token)
        if idx is not None:
            x[idx] = 1.0
    doc_tokens = _document_tokens(context)
    x[len(vocabulary) + 0] = _overlap_fraction(tokenize(attempt.answer), doc_tokens)
    x[len(vocabulary) + 1] = _overlap_fraction(tokenize(attempt.rationale), doc_tokens)
    x[len(vocabulary) + 2] = float(len(context.turns))
    return x


def _build_vocabulary(records: Sequence[TraceRecord]) -> dict[str, int]:
    vocab: dict[str, int] = {}
    for record in records:
        for token in tokenize(record.question) + tokenize(record.attempt.rationale):
            vocab.setdefault(_QR_PREFIX + token, len(vocab))
        for token in tokenize(record.attempt.answer):
            vocab.setdefault(_ANS_PREFIX + token, len(vocab))
    return vocab


def penalized_log_likelihood(
    weights: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray,
    sample_weights: np.ndarray,
    l2_penalty: float,
) -> float:
    """Mean conditional log-likelihood minus the L2 penalty (bias excluded).

    `weights` has the bias as its last entry; `features` must already carry
    a trailing column of ones.
    """
    z = features @ weights
    # log sigma(z) = -log(1 + e^-z); log(1 - sigma(z)) = -log(1 + e^z)
    log_p = -np.logaddexp(0.0, -z)
    log_q = -np.logaddexp(0.0, z)
    ll = float(np.mean(sample_weights * (labels * log_p + (1.0 - labels) * log_q)))
    penalty = 0.5 * l2_penalty * float(np.dot(weights[:-1], weights[:-1]))
    return ll - penalty


def log_likelihood_gradient(
    weights: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray,
    sample_weights: np.ndarray,
    l2_penalty: float,
) -> np.ndarray:
    z = features @ weights
    p = 1.0 / (1.0 + np.exp(-z))
    grad = features.T @ (sample_weights * (labels - p)) / len(labels)
    grad[:-1] -= l2_penalty * weights[:-1]
    return grad


@dataclass(frozen=True)
class NativeTrainConfig:
    learning_rate: float = 1.0
    epochs: int = 500
    l2_penalty: float = 1e-4
    threshold: float = 0.5
    class_weighting: bool = False

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.l2_penalty < 0:
            raise ValueError("l2_penalty must be >= 0")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie strictly between 0 and 1")


@dataclass(frozen=True)
class NativeCriticModel:
    vocabulary: dict[str, int]
    weights: np.ndarray  # one per feature, bias last
    threshold: float
    feature_spec: dict
    training_metadata: dict

    def score(self, question: str, context: Context, attempt: AnswerAttempt) -> float:
        x = extract_features(self.vocabulary, question, context, attempt)
        z = float(np.dot(self.weights[:-1], x) + self.weights[-1])
        return 1.0 / (1.0 + math.exp(-z))

    def save(self, path: str | Path) -> None:
        payload = {
            "vocabulary": self.vocabulary,
            "weights": [float(w) for w in self.weights],
            "feature_spec": self.feature_spec,
            "threshold": self.threshold,
            "training_metadata": self.training_metadata,
        }
        Path(path).write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "NativeCriticModel":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            vocabulary=payload["vocabulary"],
            weights=np.asarray(payload["weights"], dtype=np.float64),
            threshold=payload["threshold"],
            feature_spec=payload["feature_spec"],
            training_metadata=payload["training_metadata"],
        )


def native_train(
    dataset: Sequence[TraceRecord], config: NativeTrainConfig | None = None
) -> NativeCriticModel:
    """Fit the log-linear critic by full-batch gradient ascent.

    Weights start at zero with the bias at the log-odds of the training
    Accept rate, so training is deterministic. If the loss ever rises by
    more than 1e-6 between epochs, training halts and the event is noted
    in the model metadata.
    """
    config = config or NativeTrainConfig()
    if not dataset:
        raise CriticError("cannot train on an empty dataset")
    labels = np.array(
        [1.0 if r.label is CritiqueLabel.ACCEPT else 0.0 for r in dataset], dtype=np.float64
    )
    n_accept = int(labels.sum())
    n_reject = len(labels) - n_accept
    if n_accept == 0 or n_reject == 0:
        raise CriticError(
            f"dataset is single-label ({n_accept} Accept / {n_reject} Reject); "
            "a critic trained on it would be degenerate"
        )

    vocabulary = _build_vocabulary(dataset)
    x = np.stack(
        [extract_features(vocabulary, r.question, r.context, r.attempt) for r in dataset]
    )
    xb = np.hstack([x, np.ones((len(dataset), 1))])

    if config.class_weighting:
        w_accept = len(labels) / (2.0 * n_accept)
        w_reject = len(labels) / (2.0 * n_reject)
        sample_weights = np.where(labels == 1.0, w_accept, w_reject)
    else:
        sample_weights = np.ones(len(labels))

    weights = np.zeros(xb.shape[1], dtype=np.float64)
    accept_rate = n_accept / len(labels)
    weights[-1] = math.log(accept_rate / (1.0 - accept_rate))

    losses = [-penalized_log_likelihood(weights, xb, labels, sample_weights, config.l2_penalty)]
    halted_early = False
    epochs_run = 0
    for _ in range(config.epochs):
        grad = log_likelihood_gradient(weights, xb, labels, sample_weights, config.l2_penalty)
        candidate = weights + config.learning_rate * grad
        loss = -penalized_log_likelihood(candidate, xb, labels, sample_weights, config.l2_penalty)
        if loss > losses[-1] + 1e-6:
            halted_early = True
            break
        weights = candidate
        losses.append(loss)
        epochs_run += 1

    scores = 1.0 / (1.0 + np.exp(-(xb @ weights)))
    predicted = (scores >= config.threshold).astype(np.float64)
    train_accuracy = float(np.mean(predicted == labels))

    metadata = {
        "examples": len(dataset),
        "accept": n_accept,
        "reject": n_reject,
        "learning_rate": config.learning_rate,
        "epochs_requested": config.epochs,
        "epochs_run": epochs_run,
        "l2_penalty": config.l2_penalty,
        "class_weighting": config.class_weighting,
        "final_loss": losses[-1],
        "halted_early": halted_early,
        "train_accuracy": train_accuracy,
    }
    return NativeCriticModel(
        vocabulary=vocabulary,
        weights=weights,
        threshold=config.threshold,
        feature_spec=dict(FEATURE_SPEC),
        training_metadata=metadata,
    )


class NativeCritic:
    critic_id = "native"

    def __init__(self, model: NativeCriticModel):
        self._model = model

    @property
    def model(self) -> NativeCriticModel:
        return self._model

    def with_threshold(self, threshold: float) -> "NativeCritic":
        return NativeCritic(replace(self._model, threshold=threshold))

    def evaluate(
        self, question: str, context: Context, attempt: AnswerAttempt
    ) -> CritiqueDecision:
        score = self._model.score(question, context, attempt)
        label = (
            CritiqueLabel.ACCEPT if score >= self._model.threshold else CritiqueLabel.REJECT
        )
        return CritiqueDecision(label, score, self.critic_id)


# --- remote critic ------------------------------------------------------------


class RemoteCritic:
    """Client for POST /predict; the trained transformer critic lives remotely.

    Wire request: {"question", "context": <trace-schema context array>,
    "answer", "rationale"}; response: {"label": "Accept"|"Reject",
    "score": number in [0, 1]}.
    """

    def __init__(
        self,
        endpoint: str,
        client: httpx.Client | None = None,
        retries: int = 2,
        max_in_flight: int = 4,
    ):
        self._endpoint = endpoint.rstrip("/")
        self._client = client or httpx.Client(timeout=30.0)
        self._retries = retries
        self._semaphore = threading.Semaphore(max_in_flight)
        self.critic_id = f"remote:{self._endpoint}"

    def check_health(self) -> bool:
        try:
            return get_json(self._client, self._endpoint + "/health").get("status") == "ok"
        except TransportError:
            return False

    def evaluate(
        self, question: str, context: Context, attempt: AnswerAttempt
    ) -> CritiqueDecision:
        payload = {
            "question": question,
            "context": context_to_dict(context),
            "answer": attempt.answer,
            "rationale": attempt.rationale,
        }
        with self._semaphore:
            response = post_json(
                self._client, self._endpoint + "/predict", payload, retries=self._retries
            )
        raw_label = response.get("label")
        raw_score = response.get("score")
        if raw_label not in (CritiqueLabel.ACCEPT.value, CritiqueLabel.REJECT.value):
            raise ProtocolError(f"remote critic returned invalid label: {raw_label!r}")
        if not isinstance(raw_score, (int, float)) or isinstance(raw_score, bool):
            raise ProtocolError(f"remote critic returned non-numeric score: {raw_score!r}")
        if not 0.0 <= float(raw_score) <= 1.0:
            raise ProtocolError(f"remote critic score out of [0, 1]: {raw_score!r}")
        return CritiqueDecision(CritiqueLabel(raw_label), float(raw_score), self.critic_id)
