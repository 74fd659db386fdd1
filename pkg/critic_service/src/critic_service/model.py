"""Small sequence-classification models scoring the two label tokens.

The classifier reads the serialized critic input and produces logits for
the tokens "Accept" and "Reject"; its probability of Accept is the softmax
likelihood of that label token. Architectures are registered by name so a
config can select one; a model directory saved by the trainer can also be
used as the base for further fine-tuning.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn

from .textio import LABELS, tokenize

MANIFEST_NAME = "manifest.json"
MODEL_FORMAT = "critic-service-model"
MODEL_FORMAT_VERSION = 1

PAD_INDEX = 0
UNK_INDEX = 1


class ModelError(RuntimeError):
    pass


@dataclass(frozen=True)
class ArchitectureSpec:
    embedding_dim: int
    hidden_dim: int


BASE_ARCHITECTURES = {
    "tiny-classifier-32": ArchitectureSpec(embedding_dim=32, hidden_dim=32),
    "tiny-classifier-64": ArchitectureSpec(embedding_dim=64, hidden_dim=64),
}


class LabelTokenClassifier(nn.Module):
    """Embedding bag over the input tokens, then an MLP to two label logits."""

    def __init__(self, vocab_size: int, spec: ArchitectureSpec):
        super().__init__()
        self.spec = spec
        self.embedding = nn.Embedding(vocab_size, spec.embedding_dim, padding_idx=PAD_INDEX)
        self.encoder = nn.Sequential(
            nn.Linear(spec.embedding_dim, spec.hidden_dim),
            nn.Tanh(),
        )
        self.label_head = nn.Linear(spec.hidden_dim, len(LABELS))

    def forward(self, token_ids: torch.Tensor) -> torch.Tensor:
        # token_ids: (batch, seq); mean-pool embeddings over non-pad positions
        mask = (token_ids != PAD_INDEX).float().unsqueeze(-1)
        embedded = self.embedding(token_ids) * mask
        lengths = mask.sum(dim=1).clamp(min=1.0)
        pooled = embedded.sum(dim=1) / lengths
        return self.label_head(self.encoder(pooled))


def build_vocabulary(texts: list[str], max_size: int = 50_000) -> dict[str, int]:
    counts: dict[str, int] = {}
    for text in texts:
        for token in tokenize(text):
            counts[token] = counts.get(token, 0) + 1
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))[: max_size - 2]
    vocab = {"<pad>": PAD_INDEX, "<unk>": UNK_INDEX}
    for token, _ in ranked:
        vocab[token] = len(vocab)
    return vocab


def encode(text: str, vocab: dict[str, int], max_tokens: int) -> list[int]:
    ids = [vocab.get(token, UNK_INDEX) for token in tokenize(text)]
    return ids[:max_tokens] if len(ids) > max_tokens else ids


def pad_batch(sequences: list[list[int]]) -> torch.Tensor:
    width = max((len(s) for s in sequences), default=1) or 1
    return torch.tensor(
        [s + [PAD_INDEX] * (width - len(s)) for s in sequences], dtype=torch.long
    )


@dataclass
class CriticModel:
    """A trained classifier plus everything needed to score new inputs."""

    network: LabelTokenClassifier
    vocabulary: dict[str, int]
    max_input_tokens: int
    instruction: str
    manifest: dict

    def score_accept(self, text: str) -> float:
        self.network.eval()
        with torch.no_grad():
            ids = encode(text, self.vocabulary, self.max_input_tokens) or [UNK_INDEX]
            logits = self.network(pad_batch([ids]))
            probs = torch.softmax(logits, dim=-1)[0]
        return float(probs[LABELS.index("Accept")])

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / MANIFEST_NAME).write_text(
            json.dumps(self.manifest, ensure_ascii=False, indent=2), encoding="utf-8"
        )
        (directory / "vocab.json").write_text(
            json.dumps(self.vocabulary, ensure_ascii=False), encoding="utf-8"
        )
        torch.save(self.network.state_dict(), directory / "weights.pt")

    @classmethod
    def load(cls, directory: str | Path) -> "CriticModel":
        directory = Path(directory)
        manifest_path = directory / MANIFEST_NAME
        if not manifest_path.exists():
            raise ModelError(f"no model manifest at {manifest_path}")
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        if manifest.get("format") != MODEL_FORMAT:
            raise ModelError(f"{directory}: unrecognized model format")
        if manifest.get("format_version") != MODEL_FORMAT_VERSION:
            raise ModelError(f"{directory}: unsupported model version")
        vocabulary = json.loads((directory / "vocab.json").read_text(encoding="utf-8"))
        spec = ArchitectureSpec(**manifest["architecture"])
        network = LabelTokenClassifier(len(vocabulary), spec)
        network.load_state_dict(torch.load(directory / "weights.pt", weights_only=True))
        return cls(
            network=network,
            vocabulary=vocabulary,
            max_input_tokens=manifest["max_input_tokens"],
            instruction=manifest["instruction"],
            manifest=manifest,
        )


def resolve_base_model(name: str) -> ArchitectureSpec | CriticModel:
    """A base model is either a registered architecture or a saved model dir."""
    if name in BASE_ARCHITECTURES:
        return BASE_ARCHITECTURES[name]
    path = Path(name)
    if (path / MANIFEST_NAME).exists():
        return CriticModel.load(path)
    raise ModelError(
        f"unreadable base model {name!r}: not a registered architecture "
        f"({', '.join(sorted(BASE_ARCHITECTURES))}) and no model manifest found there"
    )
