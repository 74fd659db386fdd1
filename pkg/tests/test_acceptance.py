"""Acceptance suite: one test per criterion, each printing a pass/fail line
with its elapsed time (run with `pytest -s` to see the lines live).

Numbers asserted here are either forced by construction of the scripted
fixtures or frozen from independent hand computation; tolerances and time
budgets are part of each criterion.
"""

import random
import string
import time
from contextlib import contextmanager

import numpy as np
import pytest

from fixture_world import make_world, write_config
from ragloop.cli import dispatch
from ragloop.core import CritiqueLabel, Document, read_trace_jsonl
from ragloop.critic import (
    NativeTrainConfig,
    log_likelihood_gradient,
    native_train,
    penalized_log_likelihood,
)
from ragloop.distill import DistillConfig, distill
from ragloop.evaluation import evaluate_pipeline, exact_match, token_f1
from ragloop.index import Bm25Index
from ragloop.loop import LoopConfig, run

from test_critic import separable_records
from test_evaluation import HAND_COMPUTED_CASES, RandomRejectOracle, _world_30_40
from test_index import brute_force_ranking
from test_loop import ConstantCritic, CountingCritic, CountingReasoner, CountingRetriever


@contextmanager
def criterion(number: int, description: str, budget_seconds: float):
    start = time.monotonic()
    try:
        yield
    except BaseException:
        print(f"[criterion {number}] FAIL: {description}")
        raise
    elapsed = time.monotonic() - start
    assert elapsed < budget_seconds, (
        f"criterion {number} exceeded its {budget_seconds}s budget ({elapsed:.2f}s)"
    )
    print(f"[criterion {number}] PASS ({elapsed:.2f}s): {description}")


def _distilled_50x4(tmp_path):
    world = make_world(
        50, correct_turn=lambda i: i % 5 if i % 5 < 4 else None, max_turn=4
    )
    out = tmp_path / "traces.jsonl"
    report = distill(
        world.qa_pairs,
        world.new_reasoner(),
        world.index(),
        DistillConfig(max_turns=4, output_path=out, retrieval_k=3),
    )
    return world, out, report


def test_criterion_1_distillation_cardinality(tmp_path):
    with criterion(1, "50 pairs x T=4 emit exactly 200 records with prefix growth", 10.0):
        world, out, report = _distilled_50x4(tmp_path)
        assert report.records_emitted == 200
        assert report.skipped_pairs == 0
        records = list(read_trace_jsonl(out))
        assert len(records) == 200

        by_pair = {}
        for record in records:
            by_pair.setdefault(record.qa_id, []).append(record)
        assert len(by_pair) == 50
        for pair_records in by_pair.values():
            assert [r.turn_index for r in pair_records] == [0, 1, 2, 3]
            for t, record in enumerate(pair_records):
                assert len(record.context.turns) == t
            for previous, current in zip(pair_records, pair_records[1:]):
                assert (
                    current.context.turns[: len(previous.context.turns)]
                    == previous.context.turns
                )
                assert len(current.context.turns) == len(previous.context.turns) + 1


def test_criterion_2_label_oracle_agreement(tmp_path):
    with criterion(2, "oracle replay reproduces 100% of stored labels", 5.0):
        world, out, _ = _distilled_50x4(tmp_path)
        oracle = world.oracle()
        records = list(read_trace_jsonl(out))
        assert len(records) == 200
        mismatches = sum(
            oracle.evaluate(r.question, r.context, r.attempt).label is not r.label
            for r in records
        )
        assert mismatches == 0


def test_criterion_3_loop_control():
    with criterion(3, "forced critic behaviors and accept short-circuit", 5.0):
        world = make_world(1, correct_turn=1)
        question = world.qa_pairs[0].question

        # always-Accept: answer at turn 0, zero retrievals
        retriever = CountingRetriever(world.index())
        reasoner = CountingReasoner(world.new_reasoner())
        outcome = run(
            question, reasoner, retriever, ConstantCritic(CritiqueLabel.ACCEPT),
            LoopConfig(max_turns=3),
        )
        assert outcome.turns_used == 0
        assert retriever.calls == 0
        assert reasoner.answer_calls == 1

        # always-Reject at T=3: exactly 3 retrievals, then abstention
        retriever = CountingRetriever(world.index())
        reasoner = CountingReasoner(world.new_reasoner())
        outcome = run(
            question, reasoner, retriever, ConstantCritic(CritiqueLabel.REJECT),
            LoopConfig(max_turns=3, on_exhaustion="abstain"),
        )
        assert outcome.abstained and outcome.turns_used == 3
        assert retriever.calls == 3
        assert reasoner.answer_calls == 4

        # accept short-circuit: after the oracle accepts at turn 1, nothing runs
        retriever = CountingRetriever(world.index())
        reasoner = CountingReasoner(world.new_reasoner())
        critic = CountingCritic(world.oracle())
        outcome = run(question, reasoner, retriever, critic, LoopConfig(max_turns=5))
        assert outcome.accepted and outcome.turns_used == 1
        assert (reasoner.answer_calls, reasoner.query_calls) == (2, 1)
        assert (retriever.calls, critic.calls) == (1, 2)


def test_criterion_4_oracle_dominance():
    with criterion(4, "EM(oracle loop, T=2)=0.70 vs EM(naive)=0.30; dominance holds", 30.0):
        world = _world_30_40()
        naive_metrics, _ = evaluate_pipeline(
            "naive", world.qa_pairs, reasoner=world.new_reasoner()
        )
        loop_metrics, _ = evaluate_pipeline(
            "simrag",
            world.qa_pairs,
            reasoner=world.new_reasoner(),
            retriever=world.index(),
            critic=world.oracle(),
            loop_config=LoopConfig(max_turns=2),
        )
        assert naive_metrics.em == pytest.approx(0.30, abs=1e-12)
        assert loop_metrics.em == pytest.approx(0.70, abs=1e-12)

        # dominance must hold on arbitrary fixtures, not just the tuned one
        rng = random.Random(99)
        for _ in range(3):
            turns = {
                i: rng.choice([0, 1, 2, 3, None]) for i in range(30)
            }
            fixture = make_world(30, correct_turn=turns, max_turn=4)
            naive_m, _ = evaluate_pipeline(
                "naive", fixture.qa_pairs, reasoner=fixture.new_reasoner()
            )
            for t in (0, 1, 3):
                loop_m, _ = evaluate_pipeline(
                    "simrag",
                    fixture.qa_pairs,
                    reasoner=fixture.new_reasoner(),
                    retriever=fixture.index(),
                    critic=fixture.oracle(),
                    loop_config=LoopConfig(max_turns=t),
                )
                assert loop_m.em >= naive_m.em - 1e-12


def test_criterion_5_bm25_oracle_equivalence():
    with criterion(5, "search() matches the brute-force ranking on random corpora", 30.0):
        rng = random.Random(20240501)
        vocab = [f"term{v:02d}" for v in range(60)]
        queries_run = 0
        for n_docs in (100, 1000):
            documents = []
            for i in range(n_docs):
                length = rng.randint(3, 40)
                documents.append(
                    Document(
                        doc_id=f"doc{i:05d}",
                        title="",
                        text=" ".join(rng.choice(vocab) for _ in range(length)),
                    )
                )
            index = Bm25Index(documents)
            for _ in range(50):
                query = " ".join(
                    rng.choice(vocab + ["unseen"]) for _ in range(rng.randint(1, 5))
                )
                k = rng.randint(1, 20)
                got = [(r.doc_id, r.score) for r in index.search(query, k)]
                expected = brute_force_ranking(documents, query, k)
                assert [g[0] for g in got] == [e[0] for e in expected]
                for (_, got_score), (_, want_score) in zip(got, expected):
                    assert abs(got_score - want_score) <= 1e-9
                queries_run += 1
        assert queries_run == 100


def _random_token(rng):
    return "".join(rng.choice(string.ascii_lowercase) for _ in range(rng.randint(1, 6)))


def _noisy_variant(text, rng):
    """Surface perturbations that normalization is defined to erase."""
    words = text.split()
    out = []
    for word in words:
        if rng.random() < 0.5:
            word = word.upper()
        if rng.random() < 0.3:
            word = word + rng.choice([".", ",", "!", "?"])
        out.append(word)
        if rng.random() < 0.2:
            out.append(rng.choice(["a", "an", "the"]))
    return "  ".join(out)


def test_criterion_6_metric_correctness():
    with criterion(6, "20 frozen metric cases; EM=1 implies F1=1 on 1000 pairs", 5.0):
        assert len(HAND_COMPUTED_CASES) == 20
        for predicted, gold, em, f1 in HAND_COMPUTED_CASES:
            assert exact_match(predicted, gold) == em
            assert token_f1(predicted, gold) == pytest.approx(f1, abs=1e-4)
        assert token_f1("Barack Obama", "Obama") == pytest.approx(0.6667, abs=1e-4)

        rng = random.Random(6)
        checked_em1 = 0
        for _ in range(1000):
            base = " ".join(_random_token(rng) for _ in range(rng.randint(1, 6)))
            if rng.random() < 0.5:
                pair = (_noisy_variant(base, rng), _noisy_variant(base, rng))
            else:
                pair = (base, " ".join(_random_token(rng) for _ in range(rng.randint(1, 6))))
            if exact_match(*pair) == 1:
                checked_em1 += 1
                assert token_f1(*pair) == 1.0
        assert checked_em1 >= 300  # the implication was actually exercised


def test_criterion_7_native_critic_training():
    with criterion(7, "gradient matches finite differences; separable set fits 100%", 30.0):
        rng = np.random.default_rng(7)
        for _ in range(20):
            n = int(rng.integers(3, 15))
            d = int(rng.integers(2, 10))
            x = np.hstack([rng.normal(size=(n, d)), np.ones((n, 1))])
            y = rng.integers(0, 2, size=n).astype(np.float64)
            sw = np.ones(n)
            w = rng.normal(scale=0.5, size=d + 1)
            l2 = float(rng.uniform(0.0, 0.1))
            analytic = log_likelihood_gradient(w, x, y, sw, l2)
            h = 1e-6
            for j in range(d + 1):
                e = np.zeros(d + 1)
                e[j] = h
                numeric = (
                    penalized_log_likelihood(w + e, x, y, sw, l2)
                    - penalized_log_likelihood(w - e, x, y, sw, l2)
                ) / (2 * h)
                denom = max(abs(numeric), abs(analytic[j]), 1e-8)
                assert abs(analytic[j] - numeric) / denom < 1e-5

        model = native_train(
            separable_records(40), NativeTrainConfig(learning_rate=1.0, epochs=500)
        )
        assert model.training_metadata["train_accuracy"] == 1.0


def _end_to_end(run_dir):
    """index -> distill -> train native critic -> eval -> sweep, via the CLI."""
    world = make_world(12, correct_turn=lambda i: i % 4 if i % 4 < 3 else None, max_turn=4)
    paths = world.write(run_dir)
    config_path = write_config(
        run_dir, paths, loop_max_turns=3, distill_max_turns=4, retrieval_k=2
    )
    index_path = run_dir / "index.json"
    traces = run_dir / "traces.jsonl"
    model = run_dir / "critic.json"
    out_dir = run_dir / "eval"
    sweep_csv = run_dir / "sweep.csv"

    assert dispatch(["index", "build", "--corpus", str(paths["corpus"]), "--out", str(index_path)]) == 0
    assert dispatch(["distill", "--config", str(config_path), "--out", str(traces)]) == 0
    assert dispatch(["train-critic", "--data", str(traces), "--out", str(model)]) == 0
    assert dispatch(
        [
            "eval", "--pipeline", "simrag", "--config", str(config_path),
            "--critic", f"native:{model}", "--out-dir", str(out_dir),
        ]
    ) == 0
    assert dispatch(
        [
            "sweep", "--turns", "0..3", "--config", str(config_path),
            "--out", str(sweep_csv),
        ]
    ) == 0
    return {
        "traces": traces.read_bytes(),
        "model": model.read_bytes(),
        "examples": (out_dir / "simrag_examples.jsonl").read_bytes(),
        "metrics": (out_dir / "simrag_metrics.json").read_bytes(),
        "sweep": sweep_csv.read_bytes(),
    }


def test_criterion_8_end_to_end_determinism(tmp_path, capsys):
    with criterion(8, "two identical end-to-end runs produce byte-identical artifacts", 60.0):
        first = _end_to_end(tmp_path / "run_a")
        second = _end_to_end(tmp_path / "run_b")
        capsys.readouterr()  # drain CLI output
        for name in first:
            assert first[name] == second[name], f"artifact {name} differs between runs"


def test_criterion_9_zero_turn_underperformance():
    with criterion(9, "noisy critic at T=0 scores strictly below naive generation", 10.0):
        world = _world_30_40()
        naive_metrics, _ = evaluate_pipeline(
            "naive", world.qa_pairs, reasoner=world.new_reasoner()
        )
        noisy = RandomRejectOracle(world.oracle(), reject_rate=0.2, seed=13)
        t0_metrics, _ = evaluate_pipeline(
            "simrag",
            world.qa_pairs,
            reasoner=world.new_reasoner(),
            retriever=world.index(),
            critic=noisy,
            loop_config=LoopConfig(max_turns=0),
        )
        assert t0_metrics.em < naive_metrics.em
