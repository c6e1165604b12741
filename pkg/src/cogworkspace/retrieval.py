"""Fixed-size chunking, hashed bag-of-words embeddings and exact top-k search."""

from __future__ import annotations

import hashlib
import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .oplog import OpKind, OpLog
from .validation import check_chunking, check_is_fitted, check_positive_int

_STRIP = ".,;:!?\"'()[]{}<>`*_#|/\\"


class EmptyIndexError(RuntimeError):
    pass


def terms(text: str) -> list[str]:
    """Lowercased whitespace tokens with surrounding punctuation removed."""
    out = []
    for tok in text.split():
        tok = tok.strip(_STRIP).lower()
        if tok:
            out.append(tok)
    return out


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    chunk_index: int
    content: str
    token_span: tuple[int, int]

    @property
    def id(self) -> str:
        return f"{self.doc_id}#{self.chunk_index}"


@dataclass(frozen=True)
class SearchHit:
    chunk: Chunk
    score: float


def chunk_document(doc: str, chunk_size: int = 200, overlap: int = 20, doc_id: str = "") -> list[Chunk]:
    check_chunking(chunk_size, overlap)
    tokens = doc.split()
    stride = chunk_size - overlap
    chunks: list[Chunk] = []
    start = 0
    while start < len(tokens):
        end = min(start + chunk_size, len(tokens))
        chunks.append(Chunk(doc_id, len(chunks), " ".join(tokens[start:end]), (start, end)))
        if end == len(tokens):
            break
        start += stride
    return chunks


def expected_chunk_count(n_tokens: int, chunk_size: int = 200, overlap: int = 20) -> int:
    if n_tokens == 0:
        return 0
    if n_tokens <= chunk_size:
        return 1
    return math.ceil((n_tokens - chunk_size) / (chunk_size - overlap)) + 1


def _bucket(term: str, n_features: int) -> int:
    digest = hashlib.blake2b(term.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % n_features


class HashingEmbedder(TransformerMixin, BaseEstimator):
    """Stateless hashed bag-of-words embedder.

    Each term lands in one of ``n_features`` buckets with weight
    ``1 + log(tf)``; rows are L2-normalised. Empty text maps to the zero
    vector, which is the only non-unit output.
    """

    def __init__(self, n_features: int = 256):
        self.n_features = n_features

    def fit(self, X=None, y=None):
        check_positive_int(self.n_features, "n_features")
        self.n_features_out_ = self.n_features
        return self

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.n_features)
        for term, tf in Counter(terms(text)).items():
            vec[_bucket(term, self.n_features)] += 1.0 + math.log(tf)
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec

    def transform(self, X):
        if isinstance(X, str):
            raise TypeError("expected an iterable of strings, got a single string")
        return np.vstack([self.embed(t) for t in X]) if len(X) else np.zeros((0, self.n_features))


_DEFAULT_EMBEDDER = HashingEmbedder()


def embed(text: str) -> np.ndarray:
    return _DEFAULT_EMBEDDER.embed(text)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


class CorpusIndex(BaseEstimator):
    """Chunked, embedded corpus with exhaustive cosine search.

    ``fit`` takes a mapping of document id to text. The fitted index is
    never mutated afterwards, so one instance may back several readers.
    """

    def __init__(self, chunk_size: int = 200, overlap: int = 20, n_features: int = 256):
        self.chunk_size = chunk_size
        self.overlap = overlap
        self.n_features = n_features

    def fit(self, X: Mapping[str, str], y=None):
        check_chunking(self.chunk_size, self.overlap)
        self.embedder_ = HashingEmbedder(self.n_features).fit()
        self.documents_ = dict(sorted(X.items()))
        chunks: list[Chunk] = []
        for doc_id, text in self.documents_.items():
            chunks.extend(chunk_document(text, self.chunk_size, self.overlap, doc_id))
        self.chunks_ = chunks
        self.matrix_ = self.embedder_.transform([c.content for c in chunks])
        self.positions_ = {c.id: i for i, c in enumerate(chunks)}
        df: Counter[str] = Counter()
        for text in self.documents_.values():
            df.update(set(terms(text)))
        self.doc_freq_ = dict(df)
        return self

    @property
    def n_documents(self) -> int:
        check_is_fitted(self, "chunks_")
        return len(self.documents_)

    def __len__(self) -> int:
        check_is_fitted(self, "chunks_")
        return len(self.chunks_)

    def embed(self, text: str) -> np.ndarray:
        check_is_fitted(self, "embedder_")
        return self.embedder_.embed(text)

    def vector(self, chunk_id: str) -> np.ndarray:
        return self.matrix_[self.positions_[chunk_id]]

    def document_frequency(self, term: str) -> int:
        check_is_fitted(self, "doc_freq_")
        return self.doc_freq_.get(term, 0)

    def search(self, query: np.ndarray, k: int = 3, log: OpLog | None = None) -> list[SearchHit]:
        check_is_fitted(self, "chunks_")
        check_positive_int(k, "k")
        if not self.chunks_:
            raise EmptyIndexError("search on an empty index")
        query = np.asarray(query, dtype=float)
        qn = np.linalg.norm(query)
        scores = self.matrix_ @ query / qn if qn > 0 else np.zeros(len(self.chunks_))
        order = sorted(
            range(len(self.chunks_)),
            key=lambda i: (-scores[i], self.chunks_[i].doc_id, self.chunks_[i].chunk_index),
        )
        hits = [SearchHit(self.chunks_[i], float(scores[i])) for i in order[:k]]
        if log is not None:
            log.emit(OpKind.RETRIEVE_EXTERNAL, k=k, hits=[h.chunk.id for h in hits])
        return hits
