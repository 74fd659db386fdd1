"""Shared fixtures: the linearly separable toy trace dataset, written in the
trace JSONL schema the primary component emits."""

from __future__ import annotations

import json
from pathlib import Path

CONTRACTS = Path(__file__).resolve().parent.parent.parent / "contracts"


TOPICS = ("garnet", "basalt", "quartz", "gypsum", "pumice")


def separable_rows(n: int = 40) -> list[dict]:
    """Accept rationales contain "match", Reject rationales "mismatch".

    All other surface tokens come from a small shared pool so the separating
    token is the only signal correlated with the label; per-example
    identifiers would otherwise let a classifier memorize the training split
    and fall over on held-out rows.
    """
    rows = []
    for i in range(n):
        accept = i % 2 == 0
        word = "match" if accept else "mismatch"
        topic = TOPICS[i % len(TOPICS)]
        rows.append(
            {
                "qa_id": f"s{i:02d}",
                "turn_index": 0,
                "question": f"which clue settles the {topic} case",
                "context": [
                    {
                        "query": f"lookup {topic} records",
                        "documents": [
                            {
                                "doc_id": f"d{i}",
                                "title": f"{topic} files",
                                "text": f"evidence body for the {topic} case",
                            }
                        ],
                    }
                ],
                "answer": f"the {topic} verdict",
                "rationale": f"the tokens {word} the evidence",
                "label": "Accept" if accept else "Reject",
            }
        )
    return rows


def write_rows(rows: list[dict], path: Path) -> Path:
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    return path
