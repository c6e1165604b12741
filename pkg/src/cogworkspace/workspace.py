"""Active memory engine: decompose, anticipate, reuse-or-retrieve, update, consolidate."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

from sklearn.base import BaseEstimator
from sklearn.feature_extraction.text import ENGLISH_STOP_WORDS

from .memory import MemoryItem, MemoryStore, TierKind
from .oplog import Arm, OpEvent, OpKind, OpLog
from .provider import Provider, StubProvider
from .retrieval import CorpusIndex, EmptyIndexError, SearchHit, cosine, terms
from .validation import check_is_fitted, check_positive_int, check_probability, check_query

SNAPSHOT_HEADER = "CWSNAP v1"


class SnapshotError(ValueError):
    pass


class ModeKind(str, Enum):
    FOCUSED = "Focused"
    SCANNING = "Scanning"
    INTEGRATION = "Integration"
    CONSOLIDATION = "Consolidation"


@dataclass(frozen=True)
class Mode:
    kind: ModeKind
    retrieval_k: int
    consolidation_enabled: bool = False


MODES = {
    ModeKind.FOCUSED: Mode(ModeKind.FOCUSED, 1),
    ModeKind.SCANNING: Mode(ModeKind.SCANNING, 5),
    ModeKind.INTEGRATION: Mode(ModeKind.INTEGRATION, 3),
    ModeKind.CONSOLIDATION: Mode(ModeKind.CONSOLIDATION, 0, True),
}


def mode_for_round(round_index: int, consolidation_every: int = 3) -> Mode:
    if consolidation_every and round_index % consolidation_every == 0:
        return MODES[ModeKind.CONSOLIDATION]
    return MODES[ModeKind.INTEGRATION]


@dataclass
class InfoNeed:
    key_terms: list[str]
    resolved_by: str = "unresolved"

    def __post_init__(self) -> None:
        if not self.key_terms:
            raise ValueError("an information need has at least one key term")

    @property
    def key(self) -> str:
        return " ".join(sorted(self.key_terms))

    @property
    def text(self) -> str:
        return " ".join(self.key_terms)

    def resolve(self, how: str) -> None:
        if self.resolved_by != "unresolved":
            raise ValueError(f"need {self.key!r} already resolved by {self.resolved_by}")
        if how not in ("reuse", "external"):
            raise ValueError(f"bad resolution {how!r}")
        self.resolved_by = how


@dataclass
class Task:
    query: str
    subtasks: list[str] = field(default_factory=list)
    needs: list[InfoNeed] = field(default_factory=list)
    status: str = "pending"

    def to_dict(self) -> dict[str, Any]:
        return {
            "query": self.query,
            "subtasks": self.subtasks,
            "needs": [{"key_terms": n.key_terms, "resolved_by": n.resolved_by} for n in self.needs],
            "status": self.status,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Task":
        return cls(data["query"], list(data["subtasks"]), [InfoNeed(**n) for n in data["needs"]], data["status"])


@dataclass
class RoundResult:
    round_index: int
    reuse_hits: int
    external_retrievals: int
    ops_this_round: int
    cumulative_reuse_rate: float
    answer: str
    query: str = ""
    mode: str = ModeKind.INTEGRATION.value
    working_memory_items: int = 0

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class WorkspaceState:
    buffers: MemoryStore
    task_stack: list[Task]
    history: list[tuple[str, str, int]]
    current_step: int
    mode: Mode
    op_log: OpLog


class CognitiveWorkspace(BaseEstimator):
    """Stateful engine that keeps a curated working set across rounds.

    Parameters mirror the memory policy: additive access ``boost``,
    exponential ``half_life`` in logical steps, a ``decay_floor`` below which
    items are demoted, and the cosine ``hit_threshold`` for working-memory
    matches. ``fit`` takes either a document mapping or nothing (when a
    fitted ``index`` is supplied); ``predict`` runs one round per query.
    """

    def __init__(
        self,
        index: CorpusIndex | None = None,
        provider: Provider | None = None,
        boost: float = 0.2,
        half_life: float = 5.0,
        decay_floor: float = 0.01,
        immediate_items: int = 4,
        min_access: int = 3,
        prefetch_priority: float = 0.6,
        answer_priority: float = 0.8,
        hit_threshold: float = 0.55,
        consolidation_every: int = 3,
        max_key_terms: int = 3,
    ):
        self.index = index
        self.provider = provider
        self.boost = boost
        self.half_life = half_life
        self.decay_floor = decay_floor
        self.immediate_items = immediate_items
        self.min_access = min_access
        self.prefetch_priority = prefetch_priority
        self.answer_priority = answer_priority
        self.hit_threshold = hit_threshold
        self.consolidation_every = consolidation_every
        self.max_key_terms = max_key_terms

    # -- estimator API ---------------------------------------------------

    def fit(self, X: Mapping[str, str] | None = None, y=None):
        for name in ("boost", "decay_floor", "prefetch_priority", "answer_priority", "hit_threshold"):
            check_probability(getattr(self, name), name)
        for name in ("immediate_items", "min_access", "max_key_terms"):
            check_positive_int(getattr(self, name), name)
        if self.half_life <= 0:
            raise ValueError(f"half_life must be positive, got {self.half_life!r}")
        if X is not None:
            self.index_ = CorpusIndex().fit(X)
        elif self.index is not None:
            check_is_fitted(self.index, "chunks_")
            self.index_ = self.index
        else:
            raise ValueError("fit needs documents or a fitted index")
        self.provider_ = self.provider if self.provider is not None else StubProvider()
        self.log_ = OpLog(Arm.CW)
        self.store_ = MemoryStore(self.log_, self.immediate_items, self.boost, self.decay_floor)
        self.tasks_: list[Task] = []
        self.history_: list[tuple[str, str, int]] = []
        self.results_: list[RoundResult] = []
        self.round_ = 0
        self.mode_ = MODES[ModeKind.INTEGRATION]
        return self

    def predict(self, X: Iterable[str]) -> list[str]:
        return [self.process_round(q).answer for q in X]

    @property
    def state(self) -> WorkspaceState:
        check_is_fitted(self, "store_")
        return WorkspaceState(self.store_, self.tasks_, self.history_, self.log_.clock, self.mode_, self.log_)

    @property
    def current_step(self) -> int:
        return self.log_.clock

    # -- algorithm steps -------------------------------------------------

    def decompose(self, query: str, provider: Provider | None = None) -> list[str]:
        check_query(query)
        subtasks = list((provider or self.provider_).decompose(query))[:5] or [query]
        self.log_.emit(OpKind.DECOMPOSE, subtasks=subtasks)
        return subtasks

    def _key_terms(self, subtask: str) -> list[str]:
        toks = terms(subtask)
        candidates = sorted(
            {t for t in toks if t not in ENGLISH_STOP_WORDS and self.index_.document_frequency(t) > 0},
            key=lambda t: (self.index_.document_frequency(t), t),
        )
        if candidates:
            return candidates[: self.max_key_terms]
        if not toks:
            return [subtask.strip().lower() or "?"]
        return [min(toks, key=lambda t: (-len(t), t))]

    def predict_needs(self, subtasks: Sequence[str]) -> list[InfoNeed]:
        if not subtasks:
            raise ValueError("predict_needs needs at least one subtask")
        needs: list[InfoNeed] = []
        seen: set[str] = set()
        for sub in subtasks:
            need = InfoNeed(self._key_terms(sub))
            if need.key not in seen:
                seen.add(need.key)
                needs.append(need)
        self.log_.emit(OpKind.PREDICT, needs=[n.key_terms for n in needs])
        return needs

    def _matches(self, need: InfoNeed, tier: TierKind) -> list[tuple[float, MemoryItem]]:
        qvec = self.index_.embed(need.text)
        wanted = set(need.key_terms)
        found = []
        for item in self.store_.items(tier):
            score = cosine(qvec, item.embedding)
            if need.key in item.tags or wanted <= set(terms(item.content)) or score >= self.hit_threshold:
                found.append((score, item))
        return found

    def _best_match(self, need: InfoNeed) -> MemoryItem | None:
        for tier in (TierKind.IMMEDIATE, TierKind.TASK):
            found = self._matches(need, tier)
            if found:
                return min(found, key=lambda pair: (-pair[0], pair[1].id))[1]
        return None

    def _store_hits(self, hits: Sequence[SearchHit], need: InfoNeed) -> list[MemoryItem]:
        stored = []
        now = self.current_step
        for hit in hits:
            cid = hit.chunk.id
            where = self.store_.locate(cid)
            if where in (TierKind.IMMEDIATE, TierKind.TASK):
                item = self.store_.get(cid)
                if need.key not in item.tags:
                    item.tags.append(need.key)
                stored.append(item)
                continue
            if where is not None:
                item = self.store_.get(cid)
                item.priority = max(item.priority, self.prefetch_priority)
                item.decayed_at = max(item.decayed_at, now)
                if need.key not in item.tags:
                    item.tags.append(need.key)
                self.store_.promote(cid, TierKind.TASK)
            else:
                item = MemoryItem(
                    id=cid,
                    content=hit.chunk.content,
                    embedding=self.index_.vector(cid),
                    source=cid,
                    created_step=now,
                    last_access_step=now,
                    priority=self.prefetch_priority,
                    half_life=self.half_life,
                    tags=[need.key],
                )
                self.store_.insert(item, TierKind.TASK)
            stored.append(item)
        return stored

    def prefetch(self, needs: Sequence[InfoNeed]) -> int:
        """Fetch ahead for every need the working tiers cannot already serve.

        What to fetch is decided against the working set as it stood before
        any of this round's fetches, so one need's prefetch never hides
        another need of the same round.
        """
        k = self.mode_.retrieval_k
        if k == 0 or not self.index_.chunks_:
            return 0
        missing = [need for need in needs if self._best_match(need) is None]
        moved = 0
        for need in missing:
            hits = self.index_.search(self.index_.embed(need.text), k, log=self.log_)
            moved += sum(1 for h in hits if self.store_.locate(h.chunk.id) not in (TierKind.IMMEDIATE, TierKind.TASK))
            self._store_hits(hits, need)
        return moved

    def lookup_or_retrieve(self, need: InfoNeed) -> tuple[str, list[MemoryItem]]:
        best = self._best_match(need)
        if best is not None:
            self.store_.access(best.id, self.current_step)
            need.resolve("reuse")
            return "reuse", [best]
        # modes that do not anticipate (k=0) still answer misses at default breadth
        k = self.mode_.retrieval_k or MODES[ModeKind.INTEGRATION].retrieval_k
        try:
            hits = self.index_.search(self.index_.embed(need.text), k, log=self.log_)
        except EmptyIndexError:
            self.log_.emit(OpKind.WARN, message="miss with empty index", need=need.key_terms)
            need.resolve("external")
            return "external", []
        items = self._store_hits(hits, need)
        need.resolve("external")
        return "external", items

    def update_state(self, answer: str, round_index: int) -> None:
        now = self.current_step
        item = MemoryItem(
            id=f"answer:{round_index}",
            content=answer,
            embedding=self.index_.embed(answer),
            source="derived",
            created_step=now,
            last_access_step=now,
            priority=self.answer_priority,
            half_life=self.half_life,
        )
        self.store_.insert(item, TierKind.IMMEDIATE)
        self.history_.append((self.tasks_[-1].query, answer, now))
        self.log_.emit(OpKind.UPDATE, round=round_index, id=item.id)

    # -- round loop ------------------------------------------------------

    def process_round(self, query: str, provider: Provider | None = None) -> RoundResult:
        check_is_fitted(self, "store_")
        check_query(query)
        checkpoint = self._to_state_dict()
        try:
            return self._run_round(query, provider or self.provider_)
        except Exception:
            self._load_state_dict(checkpoint)
            raise

    def _run_round(self, query: str, provider: Provider) -> RoundResult:
        self.round_ += 1
        r = self.round_
        self.log_.round = r
        self.mode_ = mode_for_round(r, self.consolidation_every)
        start = len(self.log_)

        task = Task(query, status="active")
        self.tasks_.append(task)
        task.subtasks = self.decompose(query, provider)
        task.needs = self.predict_needs(task.subtasks)
        self.prefetch(task.needs)

        context: list[str] = []
        for need in task.needs:
            _, items = self.lookup_or_retrieve(need)
            for item in items:
                if item.content not in context:
                    context.append(item.content)
        answer = provider.synthesize(query, context)
        task.status = "done"

        self.update_state(answer, r)
        self.store_.decay_step(self.current_step)
        if self.mode_.consolidation_enabled:
            self.store_.consolidate(self.current_step, self.min_access)

        events = self.log_.events[start:]
        reuse = sum(1 for e in events if e.kind is OpKind.REUSE_INTERNAL)
        external = sum(1 for e in events if e.kind is OpKind.RETRIEVE_EXTERNAL)
        total_reuse = self.log_.count(OpKind.REUSE_INTERNAL)
        total_ext = self.log_.count(OpKind.RETRIEVE_EXTERNAL)
        cumulative = total_reuse / (total_reuse + total_ext) if total_reuse + total_ext else 0.0
        result = RoundResult(
            round_index=r,
            reuse_hits=reuse,
            external_retrievals=external,
            ops_this_round=self.log_.ops(r),
            cumulative_reuse_rate=cumulative,
            answer=answer,
            query=query,
            mode=self.mode_.kind.value,
            working_memory_items=len(self.store_.items(TierKind.IMMEDIATE)),
        )
        self.results_.append(result)
        return result

    # -- persistence -----------------------------------------------------

    def _policy_params(self) -> dict[str, Any]:
        return {k: v for k, v in self.get_params(deep=False).items() if k not in ("index", "provider")}

    def _to_state_dict(self) -> dict[str, Any]:
        return {
            "params": self._policy_params(),
            "round": self.round_,
            "mode": self.mode_.kind.value,
            "store": self.store_.to_dict(),
            "tasks": [t.to_dict() for t in self.tasks_],
            "history": [list(h) for h in self.history_],
            "results": [r.to_dict() for r in self.results_],
            "events": [e.to_dict() for e in self.log_],
            "index": {"documents": sorted(self.index_.documents_), "chunks": len(self.index_.chunks_)},
        }

    def _load_state_dict(self, data: Mapping[str, Any]) -> None:
        self.log_ = OpLog(Arm.CW, (OpEvent.from_dict(e) for e in data["events"]))
        self.log_.round = data["round"]
        self.store_ = MemoryStore.from_dict(data["store"], self.log_)
        self.tasks_ = [Task.from_dict(t) for t in data["tasks"]]
        self.history_ = [(q, a, int(s)) for q, a, s in data["history"]]
        self.results_ = [RoundResult(**r) for r in data["results"]]
        self.round_ = int(data["round"])
        self.mode_ = MODES[ModeKind(data["mode"])]

    def snapshot(self) -> str:
        """Serialise the full workspace (memory, tasks, history, ledger) to text."""
        check_is_fitted(self, "store_")
        body = json.dumps(self._to_state_dict(), sort_keys=True, separators=(",", ":"))
        digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
        return f"{SNAPSHOT_HEADER}\nsha256 {digest}\n{body}\n"

    @classmethod
    def restore(cls, blob: str, index: CorpusIndex, provider: Provider | None = None) -> "CognitiveWorkspace":
        lines = blob.split("\n", 2)
        if len(lines) < 3 or not lines[0].startswith("CWSNAP "):
            raise SnapshotError("not a workspace snapshot")
        if lines[0] != SNAPSHOT_HEADER:
            raise SnapshotError(f"unsupported snapshot version {lines[0][7:]!r}")
        if not lines[1].startswith("sha256 "):
            raise SnapshotError("missing checksum line")
        body = lines[2].rstrip("\n")
        if hashlib.sha256(body.encode("utf-8")).hexdigest() != lines[1][7:]:
            raise SnapshotError("snapshot checksum mismatch (corrupted or truncated)")
        try:
            data = json.loads(body)
        except json.JSONDecodeError as exc:
            raise SnapshotError(f"unreadable snapshot body: {exc}") from exc

        check_is_fitted(index, "chunks_")
        expected = {"documents": sorted(index.documents_), "chunks": len(index.chunks_)}
        if data["index"] != expected:
            raise SnapshotError("snapshot was taken over a different corpus index")
        engine = cls(index=index, provider=provider, **data["params"]).fit()
        engine._load_state_dict(data)
        return engine
