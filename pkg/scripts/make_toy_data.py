#!/usr/bin/env python3
"""Generate a self-contained toy workspace: corpus, QA pairs, scripted
reasoner behavior, and a run config.

The scripted reasoner becomes correct at a per-question turn (cycling
0, 1, 2, never), so distillation produces both labels and the loop has
something to gain from extra retrieval rounds.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="toy_data", help="Output directory")
    parser.add_argument("--pairs", type=int, default=24, help="Number of QA pairs")
    parser.add_argument("--max-turn", type=int, default=4, help="Highest scripted turn index")
    args = parser.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    corpus = (out / "corpus.jsonl").open("w", encoding="utf-8")
    qa = (out / "qa.jsonl").open("w", encoding="utf-8")
    script = (out / "script.jsonl").open("w", encoding="utf-8")
    with corpus, qa, script:
        for i in range(args.pairs):
            qa_id = f"q{i:03d}"
            question = f"what is the secret of topic {i:03d}?"
            gold = f"secret {i:03d}"
            correct_turn = [0, 1, 2, None][i % 4]
            qa.write(
                json.dumps({"id": qa_id, "question": question, "answer": gold}) + "\n"
            )
            for t in range(args.max_turn + 1):
                correct = correct_turn is not None and t >= correct_turn
                script.write(
                    json.dumps(
                        {
                            "qa_id": qa_id,
                            "turn_index": t,
                            "answer": gold if correct else f"guess {i:03d} {t}",
                            "rationale": f"evidence for topic {i:03d} at step {t}",
                            "query": f"topic {i:03d} clue {t}",
                        }
                    )
                    + "\n"
                )
                corpus.write(
                    json.dumps(
                        {
                            "doc_id": f"d{i:03d}-{t}",
                            "title": f"Topic {i:03d}",
                            "text": f"topic {i:03d} clue {t} reveals secret {i:03d}.",
                        }
                    )
                    + "\n"
                )

    config = {
        "corpus_path": "corpus.jsonl",
        "qa_path": "qa.jsonl",
        "index_path": "index.json",
        "seed": 0,
        "reasoner": {"backend": "scripted", "script_path": "script.jsonl"},
        "critic": "oracle",
        "loop": {"max_turns": 3, "retrieval_k": 3, "feedback_enabled": True},
        "distill": {"max_turns": 3, "retrieval_k": 3},
    }
    (out / "config.yaml").write_text(json.dumps(config, indent=2), encoding="utf-8")
    print(f"wrote corpus/qa/script/config under {out}/")


if __name__ == "__main__":
    main()
