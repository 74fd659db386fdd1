"""Fine-tune a label-token classifier on a distilled trace dataset.

Each example is serialized as instruction + (question, context, answer,
rationale) text; the target is the literal label token. Training maximizes
the summed log-likelihood of the gold label tokens (cross-entropy over the
two-token label vocabulary).
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn

from .model import (
    MODEL_FORMAT,
    MODEL_FORMAT_VERSION,
    ArchitectureSpec,
    CriticModel,
    LabelTokenClassifier,
    build_vocabulary,
    encode,
    pad_batch,
    resolve_base_model,
)
from .textio import LABELS, DatasetError, read_trace_dataset, render_input, truncate_context

DEFAULT_INSTRUCTION = (
    "Decide whether the proposed answer is sufficiently supported by the "
    "question and the retrieved evidence. Reply with exactly one word: "
    "Accept or Reject."
)


class TrainerError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainerConfig:
    output_dir: Path
    base_model_name: str = "tiny-classifier-64"
    max_input_tokens: int = 512
    learning_rate: float = 0.01
    epochs: int = 60
    batch_size: int = 8
    validation_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie strictly between 0 and 1")
        if self.max_input_tokens < 1:
            raise ValueError("max_input_tokens must be >= 1")
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("learning_rate, epochs, and batch_size must be positive")


@dataclass(frozen=True)
class TrainReport:
    examples: int
    train_size: int
    validation_size: int
    validation_accuracy: float
    label_distribution: dict
    epochs: int
    output_dir: str

    def to_dict(self) -> dict:
        return {
            "examples": self.examples,
            "train_size": self.train_size,
            "validation_size": self.validation_size,
            "validation_accuracy": self.validation_accuracy,
            "label_distribution": self.label_distribution,
            "epochs": self.epochs,
            "output_dir": self.output_dir,
        }


def build_example_text(example, instruction: str, max_input_tokens: int) -> str:
    """Instruction + serialized input, truncated per the drop-oldest policy."""
    turns, _, overflow = truncate_context(
        example.question, example.context, example.answer, example.rationale, max_input_tokens
    )
    if overflow:
        raise TrainerError(
            "record exceeds max_input_tokens even with every context turn dropped; "
            "raise max_input_tokens or shorten the record"
        )
    body = render_input(example.question, turns, example.answer, example.rationale)
    return instruction + "\n\n" + body


def _accuracy(network: LabelTokenClassifier, ids: list[list[int]], labels: list[int]) -> float:
    if not ids:
        return 0.0
    network.eval()
    with torch.no_grad():
        logits = network(pad_batch(ids))
        predicted = logits.argmax(dim=-1)
    return float((predicted == torch.tensor(labels)).float().mean())


def train(dataset_path: str | Path, config: TrainerConfig) -> TrainReport:
    """Train, validate on a seeded held-out split, and save the model."""
    try:
        examples = read_trace_dataset(dataset_path)
    except DatasetError as exc:
        raise TrainerError(str(exc)) from exc
    if not examples:
        raise TrainerError("dataset is empty")
    distribution = {label: sum(1 for e in examples if e.label == label) for label in LABELS}
    if min(distribution.values()) == 0:
        raise TrainerError(
            f"dataset is single-label ({distribution}); training would be degenerate"
        )

    torch.manual_seed(config.seed)
    base = resolve_base_model(config.base_model_name)

    instruction = DEFAULT_INSTRUCTION if isinstance(base, ArchitectureSpec) else base.instruction
    texts = [build_example_text(e, instruction, config.max_input_tokens) for e in examples]
    targets = [LABELS.index(e.label) for e in examples]

    order = list(range(len(examples)))
    random.Random(config.seed).shuffle(order)
    n_val = max(1, int(len(examples) * config.validation_fraction))
    if n_val >= len(examples):
        raise TrainerError("validation split leaves no training data")
    val_idx, train_idx = order[:n_val], order[n_val:]

    if isinstance(base, ArchitectureSpec):
        vocabulary = build_vocabulary([texts[i] for i in train_idx])
        network = LabelTokenClassifier(len(vocabulary), base)
        architecture = base
    else:  # continue from a saved model: keep its vocabulary and weights
        vocabulary = base.vocabulary
        network = base.network
        architecture = network.spec

    def encoded(indices):
        return [encode(texts[i], vocabulary, config.max_input_tokens) or [1] for i in indices]

    train_ids, val_ids = encoded(train_idx), encoded(val_idx)
    train_targets = [targets[i] for i in train_idx]
    val_targets = [targets[i] for i in val_idx]

    optimizer = torch.optim.Adam(network.parameters(), lr=config.learning_rate)
    loss_fn = nn.CrossEntropyLoss()  # NLL of the gold label token
    network.train()
    for _ in range(config.epochs):
        for start in range(0, len(train_ids), config.batch_size):
            batch_ids = train_ids[start : start + config.batch_size]
            batch_targets = torch.tensor(train_targets[start : start + config.batch_size])
            optimizer.zero_grad()
            loss = loss_fn(network(pad_batch(batch_ids)), batch_targets)
            loss.backward()
            optimizer.step()

    validation_accuracy = _accuracy(network, val_ids, val_targets)
    manifest = {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "base_model_name": config.base_model_name,
        "architecture": {
            "embedding_dim": architecture.embedding_dim,
            "hidden_dim": architecture.hidden_dim,
        },
        "max_input_tokens": config.max_input_tokens,
        "instruction": instruction,
        "label_tokens": list(LABELS),
        "training": {
            "learning_rate": config.learning_rate,
            "epochs": config.epochs,
            "batch_size": config.batch_size,
            "validation_fraction": config.validation_fraction,
            "seed": config.seed,
            "examples": len(examples),
        },
        "label_distribution": distribution,
        "validation_accuracy": validation_accuracy,
    }
    model = CriticModel(
        network=network,
        vocabulary=vocabulary,
        max_input_tokens=config.max_input_tokens,
        instruction=instruction,
        manifest=manifest,
    )
    model.save(config.output_dir)
    return TrainReport(
        examples=len(examples),
        train_size=len(train_idx),
        validation_size=len(val_idx),
        validation_accuracy=validation_accuracy,
        label_distribution=distribution,
        epochs=config.epochs,
        output_dir=str(config.output_dir),
    )
