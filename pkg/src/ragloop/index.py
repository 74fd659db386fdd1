"""In-memory Okapi BM25 inverted index with a JSON snapshot format.

Scoring uses the non-negative IDF variant ln(1 + (N - df + 0.5)/(df + 0.5)).
Ties are broken by ascending doc_id so rankings are reproducible.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .core import Document, document_to_dict

INDEX_FORMAT = "ragloop-bm25-index"
INDEX_FORMAT_VERSION = 1

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


class CorpusError(ValueError):
    """Invalid corpus input or lookup of an unknown document."""


def tokenize(text: str) -> list[str]:
    """Lowercase and split on anything that is not a Unicode letter or digit."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75


@dataclass(frozen=True)
class RetrievalResult:
    doc_id: str
    score: float
    rank: int


@dataclass(frozen=True)
class IndexStats:
    doc_count: int
    avg_doc_len: float
    term_doc_freq: dict[str, int]
    postings: dict[str, list[tuple[str, int]]]


class Bm25Index:
    """Immutable after construction; safe for concurrent reads."""

    def __init__(self, documents: Sequence[Document], params: Bm25Params | None = None):
        if not documents:
            raise CorpusError("cannot build an index over an empty corpus")
        self._params = params or Bm25Params()
        self._docs: dict[str, Document] = {}
        self._tf: dict[str, Counter[str]] = {}
        self._len: dict[str, int] = {}
        total_len = 0
        for doc in documents:
            if doc.doc_id in self._docs:
                raise CorpusError(f"duplicate doc_id: {doc.doc_id!r}")
            tokens = tokenize(doc.text)
            self._docs[doc.doc_id] = doc
            self._tf[doc.doc_id] = Counter(tokens)
            self._len[doc.doc_id] = len(tokens)
            total_len += len(tokens)
        self._doc_count = len(self._docs)
        self._avg_len = total_len / self._doc_count
        # Postings sorted by doc_id: scoring is then independent of input order.
        self._postings: dict[str, list[tuple[str, int]]] = {}
        for doc_id in sorted(self._tf):
            for term, tf in self._tf[doc_id].items():
                self._postings.setdefault(term, []).append((doc_id, tf))
        self._df = {term: len(plist) for term, plist in self._postings.items()}

    @property
    def params(self) -> Bm25Params:
        return self._params

    @property
    def doc_count(self) -> int:
        return self._doc_count

    def stats(self) -> IndexStats:
        return IndexStats(
            doc_count=self._doc_count,
            avg_doc_len=self._avg_len,
            term_doc_freq=dict(self._df),
            postings={t: list(p) for t, p in self._postings.items()},
        )

    def document(self, doc_id: str) -> Document:
        try:
            return self._docs[doc_id]
        except KeyError:
            raise CorpusError(f"unknown doc_id: {doc_id!r}") from None

    def documents(self) -> list[Document]:
        return list(self._docs.values())

    def _idf(self, term: str) -> float:
        df = self._df.get(term, 0)
        return math.log(1.0 + (self._doc_count - df + 0.5) / (df + 0.5))

    def bm25_score(self, query_tokens: Sequence[str], doc_id: str) -> float:
        """Score one document against a token sequence; absent terms add 0."""
        if doc_id not in self._docs:
            raise CorpusError(f"unknown doc_id: {doc_id!r}")
        tf_map = self._tf[doc_id]
        k1, b = self._params.k1, self._params.b
        dl = self._len[doc_id]
        score = 0.0
        for term in query_tokens:
            tf = tf_map.get(term, 0)
            if tf == 0:
                continue
            score += self._idf(term) * (tf * (k1 + 1.0)) / (
                tf + k1 * (1.0 - b + b * dl / self._avg_len)
            )
        return score

    def search(self, query: str, k: int) -> list[RetrievalResult]:
        """Top-k documents by BM25 score; only positively scoring docs appear."""
        if k < 1:
            raise ValueError("k must be >= 1")
        k1, b = self._params.k1, self._params.b
        scores: dict[str, float] = {}
        for term in tokenize(query):
            plist = self._postings.get(term)
            if not plist:
                continue
            idf = self._idf(term)
            for doc_id, tf in plist:
                contribution = idf * (tf * (k1 + 1.0)) / (
                    tf + k1 * (1.0 - b + b * self._len[doc_id] / self._avg_len)
                )
                scores[doc_id] = scores.get(doc_id, 0.0) + contribution
        ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))[:k]
        return [
            RetrievalResult(doc_id=doc_id, score=score, rank=rank)
            for rank, (doc_id, score) in enumerate(ranked, start=1)
        ]

    def retrieve(self, query: str, k: int) -> list[Document]:
        return [self._docs[r.doc_id] for r in self.search(query, k)]

    def save(self, path: str | Path) -> None:
        snapshot = {
            "format": INDEX_FORMAT,
            "format_version": INDEX_FORMAT_VERSION,
            "params": {"k1": self._params.k1, "b": self._params.b},
            "documents": [document_to_dict(d) for d in self._docs.values()],
        }
        Path(path).write_text(
            json.dumps(snapshot, ensure_ascii=False, indent=None), encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "Bm25Index":
        try:
            snapshot = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}: not a valid index snapshot: {exc}") from exc
        if snapshot.get("format") != INDEX_FORMAT:
            raise CorpusError(f"{path}: unrecognized index format")
        if snapshot.get("format_version") != INDEX_FORMAT_VERSION:
            raise CorpusError(
                f"{path}: unsupported index version {snapshot.get('format_version')!r}"
            )
        params = Bm25Params(k1=snapshot["params"]["k1"], b=snapshot["params"]["b"])
        docs = [
            Document(doc_id=d["doc_id"], title=d["title"], text=d["text"])
            for d in snapshot["documents"]
        ]
        return cls(docs, params)


def load_corpus(path: str | Path) -> list[Document]:
    """Read a corpus file: JSONL of {"doc_id", "title", "text"}."""
    docs: list[Document] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
                docs.append(Document(doc_id=raw["doc_id"], title=raw["title"], text=raw["text"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CorpusError(f"{path}: line {line_no}: {exc}") from exc
    return docs


def save_corpus(documents: Iterable[Document], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for doc in documents:
            fh.write(json.dumps(document_to_dict(doc), ensure_ascii=False) + "\n")
