"""Active hierarchical working memory for LLM agents, with a stateless RAG baseline."""

from .memory import EvictionReceipt, MemoryItem, MemoryStore, Tier, TierKind, token_count
from .oplog import Arm, OpEvent, OpKind, OpLog
from .provider import ProviderError, RemoteProvider, StubProvider
from .rag import RagAnswer, RagBaseline, rag_answer
from .retrieval import Chunk, CorpusIndex, HashingEmbedder, SearchHit, chunk_document, embed
from .stats import growth_fit, net_efficiency, reuse_rate, saved_and_breakeven, two_sample_stats
from .workspace import CognitiveWorkspace, InfoNeed, Mode, RoundResult, Task

__version__ = "0.1.0"

__all__ = [
    "Arm",
    "Chunk",
    "CognitiveWorkspace",
    "CorpusIndex",
    "EvictionReceipt",
    "HashingEmbedder",
    "InfoNeed",
    "MemoryItem",
    "MemoryStore",
    "Mode",
    "OpEvent",
    "OpKind",
    "OpLog",
    "ProviderError",
    "RagAnswer",
    "RagBaseline",
    "RemoteProvider",
    "RoundResult",
    "SearchHit",
    "StubProvider",
    "Task",
    "Tier",
    "TierKind",
    "chunk_document",
    "embed",
    "growth_fit",
    "net_efficiency",
    "rag_answer",
    "reuse_rate",
    "saved_and_breakeven",
    "token_count",
    "two_sample_stats",
]
