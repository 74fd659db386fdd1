"""QA metrics, batch pipeline evaluation, the max-turn sweep harness, and
critic confusion-matrix reporting.

Exact match and token F1 share the answer normalization used for trace
labeling, so a loop run under the oracle critic can never be scored as
wrong for an answer the oracle accepted.
"""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from .core import QaPair, normalize_answer, read_trace_jsonl
from .critic import ConfusionMatrix, CritiqueDecision, evaluate_critic
from .distill import qa_identifier
from .loop import LoopConfig, naive_generate, run, standard_rag

logger = logging.getLogger(__name__)

PIPELINES = ("simrag", "naive", "standard")


def exact_match(predicted: str, gold: str) -> int:
    return int(normalize_answer(predicted) == normalize_answer(gold))


def token_f1(predicted: str, gold: str) -> float:
    """Token-overlap F1 over normalized tokens with multiset semantics."""
    pred_tokens = normalize_answer(predicted).split()
    gold_tokens = normalize_answer(gold).split()
    if not pred_tokens and not gold_tokens:
        return 1.0
    overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2.0 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class QaMetrics:
    em: float
    f1: float
    n: int
    abstain_rate: float

    def to_dict(self) -> dict:
        return {"em": self.em, "f1": self.f1, "n": self.n, "abstain_rate": self.abstain_rate}


def _evaluate_one(pipeline: str, position: int, pair: QaPair, components: dict) -> dict:
    qa_id = qa_identifier(pair, position)
    prediction: str | None = None
    turns_used = 0
    abstained = False
    error: str | None = None
    try:
        if pipeline == "simrag":
            outcome = run(
                pair.question,
                components["reasoner"],
                components["retriever"],
                components["critic"],
                components["loop_config"],
            )
            prediction = outcome.final_answer
            turns_used = outcome.turns_used
            abstained = outcome.abstained
        elif pipeline == "naive":
            prediction = naive_generate(pair.question, components["reasoner"])
        else:  # "standard"; evaluate_pipeline validated the name
            prediction = standard_rag(
                pair.question,
                components["reasoner"],
                components["retriever"],
                components["retrieval_k"],
            )
            turns_used = 1
    except Exception as exc:  # scored 0, run completes
        error = str(exc)
        logger.warning("pipeline %s failed on %s: %s", pipeline, qa_id, exc)

    if prediction is not None:
        em = exact_match(prediction, pair.gold_answer)
        f1 = token_f1(prediction, pair.gold_answer)
    else:
        em, f1 = 0, 0.0
    return {
        "id": qa_id,
        "question": pair.question,
        "gold": pair.gold_answer,
        "prediction": prediction,
        "em": em,
        "f1": f1,
        "turns_used": turns_used,
        "abstained": abstained,
        "error": error,
    }


def evaluate_pipeline(
    pipeline: str,
    qa_pairs: Sequence[QaPair],
    *,
    reasoner=None,
    retriever=None,
    critic=None,
    loop_config: LoopConfig | None = None,
    retrieval_k: int = 3,
    scoring: str = "strict",
    workers: int = 1,
    out_path: str | Path | None = None,
) -> tuple[QaMetrics, list[dict]]:
    """Run a pipeline over a QA set; returns aggregates and per-example rows.

    "strict" scoring counts abstentions as 0 for both metrics;
    "answered_only" aggregates over answered examples and reports coverage
    through abstain_rate.
    """
    if pipeline not in PIPELINES:
        raise ValueError(f"unknown pipeline: {pipeline!r} (expected one of {PIPELINES})")
    if scoring not in ("strict", "answered_only"):
        raise ValueError(f"unknown scoring mode: {scoring!r}")
    components = {
        "reasoner": reasoner,
        "retriever": retriever,
        "critic": critic,
        "loop_config": loop_config or LoopConfig(),
        "retrieval_k": retrieval_k,
    }

    items = list(enumerate(qa_pairs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda it: _evaluate_one(pipeline, it[0], it[1], components), items))
    else:
        rows = [_evaluate_one(pipeline, position, pair, components) for position, pair in items]

    n_total = len(rows)
    n_abstained = sum(1 for r in rows if r["abstained"])
    if scoring == "strict":
        scored = rows
    else:
        scored = [r for r in rows if not r["abstained"]]
    n = len(scored)
    em = sum(r["em"] for r in scored) / n if n else 0.0
    f1 = sum(r["f1"] for r in scored) / n if n else 0.0
    metrics = QaMetrics(
        em=em, f1=f1, n=n, abstain_rate=n_abstained / n_total if n_total else 0.0
    )

    if out_path is not None:
        with Path(out_path).open("w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    return metrics, rows


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[dict, ...]  # one per T, ascending
    baseline: dict  # naive generation

    def to_dict(self) -> dict:
        return {"rows": list(self.rows), "baseline": self.baseline}


def sweep_turns(
    qa_pairs: Sequence[QaPair],
    *,
    reasoner,
    retriever,
    critic,
    loop_config: LoopConfig,
    t_values: Sequence[int],
    workers: int = 1,
    csv_path: str | Path | None = None,
) -> SweepResult:
    """Evaluate the loop at each retrieval budget, plus the naive baseline."""
    if len(set(t_values)) != len(t_values):
        raise ValueError("t_values must be distinct")
    if any(t < 0 for t in t_values):
        raise ValueError("t_values must be non-negative")

    rows = []
    for t in sorted(t_values):
        metrics, examples = evaluate_pipeline(
            "simrag",
            qa_pairs,
            reasoner=reasoner,
            retriever=retriever,
            critic=critic,
            loop_config=replace(loop_config, max_turns=t),
            workers=workers,
        )
        mean_turns = sum(r["turns_used"] for r in examples) / len(examples) if examples else 0.0
        rows.append(
            {
                "max_turns": t,
                "em": metrics.em,
                "f1": metrics.f1,
                "mean_turns_used": mean_turns,
                "abstain_rate": metrics.abstain_rate,
            }
        )

    naive_metrics, naive_rows = evaluate_pipeline(
        "naive", qa_pairs, reasoner=reasoner, workers=workers
    )
    baseline = {
        "max_turns": None,
        "em": naive_metrics.em,
        "f1": naive_metrics.f1,
        "mean_turns_used": 0.0,
        "abstain_rate": naive_metrics.abstain_rate,
    }
    result = SweepResult(rows=tuple(rows), baseline=baseline)
    if csv_path is not None:
        write_sweep_csv(result, csv_path)
    return result


def write_sweep_csv(result: SweepResult, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pipeline", "max_turns", "em", "f1", "mean_turns_used", "abstain_rate"])
        for row in result.rows:
            writer.writerow(
                [
                    "simrag",
                    row["max_turns"],
                    f"{row['em']:.6f}",
                    f"{row['f1']:.6f}",
                    f"{row['mean_turns_used']:.6f}",
                    f"{row['abstain_rate']:.6f}",
                ]
            )
        b = result.baseline
        writer.writerow(
            [
                "naive",
                "",
                f"{b['em']:.6f}",
                f"{b['f1']:.6f}",
                f"{b['mean_turns_used']:.6f}",
                f"{b['abstain_rate']:.6f}",
            ]
        )


@dataclass(frozen=True)
class CriticReport:
    matrix: ConfusionMatrix
    failures: int

    def to_dict(self) -> dict:
        return {
            "tp": self.matrix.tp,
            "fp": self.matrix.fp,
            "tn": self.matrix.tn,
            "fn": self.matrix.fn,
            "accuracy": self.matrix.accuracy,
            "precision": self.matrix.precision,
            "recall": self.matrix.recall,
            "row_percentages": self.matrix.row_percentages(),
            "critic_failures": self.failures,
        }

    def text_table(self) -> str:
        pct = self.matrix.row_percentages()
        lines = [
            f"{'':>14}{'pred Accept':>18}{'pred Reject':>18}",
            (
                f"{'gold Accept':>14}"
                f"{self.matrix.tp:>9} ({pct['Accept']['Accept']:5.1f}%)"
                f"{self.matrix.fn:>9} ({pct['Accept']['Reject']:5.1f}%)"
            ),
            (
                f"{'gold Reject':>14}"
                f"{self.matrix.fp:>9} ({pct['Reject']['Accept']:5.1f}%)"
                f"{self.matrix.tn:>9} ({pct['Reject']['Reject']:5.1f}%)"
            ),
            f"accuracy {self.matrix.accuracy:.4f}  precision {self.matrix.precision:.4f}  "
            f"recall {self.matrix.recall:.4f}  failures {self.failures}",
        ]
        return "\n".join(lines)


def critic_report(dataset_path: str | Path, critic) -> CriticReport:
    """Run a critic over every stored record and compare to stored labels."""
    predictions: list[CritiqueDecision] = []
    gold = []
    failures = 0
    for record in read_trace_jsonl(dataset_path):
        try:
            decision = critic.evaluate(record.question, record.context, record.attempt)
        except Exception as exc:
            failures += 1
            logger.warning("critic failed on %s turn %d: %s", record.qa_id, record.turn_index, exc)
            continue
        predictions.append(decision)
        gold.append(record.label)
    return CriticReport(matrix=evaluate_critic(predictions, gold), failures=failures)
