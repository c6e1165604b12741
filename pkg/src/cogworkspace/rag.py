"""Stateless retrieve-then-generate baseline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from sklearn.base import BaseEstimator

from .oplog import Arm, OpKind, OpLog
from .provider import Provider, StubProvider
from .retrieval import CorpusIndex, SearchHit
from .validation import check_is_fitted, check_positive_int, check_query


@dataclass(frozen=True)
class RagAnswer:
    answer: str
    hits: list[SearchHit]
    ops_emitted: int = 3


def rag_answer(query: str, provider: Provider, index: CorpusIndex, k: int = 3, log: OpLog | None = None) -> RagAnswer:
    """Embed the query, fetch top-k chunks, assemble them and synthesise.

    Emits exactly EMBED_QUERY, RETRIEVE_EXTERNAL and ASSEMBLE_CONTEXT.
    Nothing is remembered between calls.
    """
    check_query(query)
    log = log if log is not None else OpLog(Arm.RAG)
    vec = index.embed(query)
    log.emit(OpKind.EMBED_QUERY, tokens=len(query.split()))
    hits = index.search(vec, k, log=log)
    context = [h.chunk.content for h in hits]
    log.emit(OpKind.ASSEMBLE_CONTEXT, chunks=[h.chunk.id for h in hits])
    return RagAnswer(provider.synthesize(query, context), hits)


class RagBaseline(BaseEstimator):
    def __init__(self, index: CorpusIndex | None = None, provider: Provider | None = None, k: int = 3):
        self.index = index
        self.provider = provider
        self.k = k

    def fit(self, X: Mapping[str, str] | None = None, y=None):
        check_positive_int(self.k, "k")
        if X is not None:
            self.index_ = CorpusIndex().fit(X)
        elif self.index is not None:
            check_is_fitted(self.index, "chunks_")
            self.index_ = self.index
        else:
            raise ValueError("fit needs documents or a fitted index")
        self.provider_ = self.provider if self.provider is not None else StubProvider()
        return self

    def answer(self, query: str, log: OpLog | None = None) -> RagAnswer:
        check_is_fitted(self, "index_")
        return rag_answer(query, self.provider_, self.index_, self.k, log)

    def predict(self, X: Iterable[str]) -> list[str]:
        return [self.answer(q).answer for q in X]
