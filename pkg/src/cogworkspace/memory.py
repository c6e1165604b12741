"""Tiered memory store with priority decay, capacity eviction and consolidation.

Four tiers sit in a fixed order, fastest first. Items that no longer fit,
or whose priority decays below the floor, are demoted one tier down rather
than dropped; the Semantic tier is an unbounded archive.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable

import numpy as np

from .oplog import Arm, OpEvent, OpKind, OpLog
from .validation import check_probability, check_unit_norm


class TierKind(str, Enum):
    IMMEDIATE = "Immediate"
    TASK = "Task"
    EPISODIC = "Episodic"
    SEMANTIC = "Semantic"

    @property
    def below(self) -> "TierKind | None":
        order = list(TierKind)
        i = order.index(self)
        return order[i + 1] if i + 1 < len(order) else None


@dataclass(frozen=True)
class Tier:
    kind: TierKind
    capacity_tokens: int | None
    capacity_items: int | None = None
    # seconds; recorded for reporting only
    nominal_latency: float = 0.0


def default_tiers(immediate_items: int = 4) -> dict[TierKind, Tier]:
    return {
        TierKind.IMMEDIATE: Tier(TierKind.IMMEDIATE, 8192, immediate_items, 0.001),
        TierKind.TASK: Tier(TierKind.TASK, 65536, None, 0.010),
        TierKind.EPISODIC: Tier(TierKind.EPISODIC, 262144, None, 0.100),
        TierKind.SEMANTIC: Tier(TierKind.SEMANTIC, None, None, 1.0),
    }


class MemoryStoreError(Exception):
    """Base class for memory-store errors."""


class DuplicateItemError(MemoryStoreError):
    pass


class ItemNotFoundError(MemoryStoreError, KeyError):
    pass


def token_count(text: str) -> int:
    """Number of whitespace-delimited tokens in ``text``."""
    return len(text.split())


@dataclass
class MemoryItem:
    id: str
    content: str
    embedding: np.ndarray
    source: str = "derived"
    created_step: int = 0
    last_access_step: int = 0
    access_count: int = 0
    priority: float = 0.5
    half_life: float = 5.0
    tier: TierKind | None = None
    # need keys this item was fetched for
    tags: list[str] = field(default_factory=list)
    decayed_at: int = 0

    def __post_init__(self) -> None:
        self.embedding = check_unit_norm(self.embedding)
        check_probability(self.priority, "priority")
        if self.half_life <= 0:
            raise ValueError("half_life must be positive")
        self.decayed_at = max(self.decayed_at, self.created_step)

    @property
    def tokens(self) -> int:
        return token_count(self.content)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "content": self.content,
            "embedding": [float(x) for x in self.embedding],
            "source": self.source,
            "created_step": self.created_step,
            "last_access_step": self.last_access_step,
            "access_count": self.access_count,
            "priority": self.priority,
            "half_life": self.half_life,
            "tier": self.tier.value if self.tier else None,
            "tags": list(self.tags),
            "decayed_at": self.decayed_at,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "MemoryItem":
        data = dict(data)
        tier = data.pop("tier")
        item = cls(**{**data, "embedding": np.array(data["embedding"], dtype=float)})
        item.tier = TierKind(tier) if tier else None
        return item


@dataclass
class EvictionReceipt:
    evicted_ids: list[str] = field(default_factory=list)
    destination: TierKind | str = "dropped"
    reason: str = "capacity"
    # demotions triggered further down by this one
    cascaded: list["EvictionReceipt"] = field(default_factory=list)

    def all_ids(self) -> list[str]:
        ids = list(self.evicted_ids)
        for sub in self.cascaded:
            ids.extend(sub.all_ids())
        return ids


_SENTENCE_END = re.compile(r"(?<=[.!?])\s+")


def compress(text: str, sentences: int = 2) -> str:
    """Keep the first ``sentences`` sentences of ``text``."""
    parts = _SENTENCE_END.split(text.strip())
    return " ".join(parts[:sentences])


class MemoryStore:
    """Four-tier item store.

    Every mutation is written to ``log`` so tier membership can be rebuilt
    from the events alone (see :func:`replay_membership`).
    """

    def __init__(
        self,
        log: OpLog | None = None,
        immediate_items: int = 4,
        boost: float = 0.2,
        decay_floor: float = 0.01,
        tiers: dict[TierKind, Tier] | None = None,
    ):
        self.log = log if log is not None else OpLog(Arm.CW)
        self.tiers = tiers or default_tiers(immediate_items)
        self.boost = boost
        self.decay_floor = decay_floor
        self._buffers: dict[TierKind, dict[str, MemoryItem]] = {k: {} for k in TierKind}

    # -- queries ---------------------------------------------------------

    def items(self, tier: TierKind) -> list[MemoryItem]:
        return list(self._buffers[TierKind(tier)].values())

    def all_items(self) -> list[MemoryItem]:
        return [it for k in TierKind for it in self._buffers[k].values()]

    def locate(self, item_id: str) -> TierKind | None:
        for kind in TierKind:
            if item_id in self._buffers[kind]:
                return kind
        return None

    def get(self, item_id: str) -> MemoryItem:
        kind = self.locate(item_id)
        if kind is None:
            raise ItemNotFoundError(item_id)
        return self._buffers[kind][item_id]

    def __contains__(self, item_id: str) -> bool:
        return self.locate(item_id) is not None

    def __len__(self) -> int:
        return sum(len(b) for b in self._buffers.values())

    def tokens(self, tier: TierKind) -> int:
        return sum(it.tokens for it in self._buffers[TierKind(tier)].values())

    def membership(self) -> dict[str, str]:
        return {it.id: it.tier.value for it in self.all_items()}

    # -- mutation --------------------------------------------------------

    def insert(self, item: MemoryItem, tier: TierKind | str) -> EvictionReceipt:
        tier = TierKind(tier)
        where = self.locate(item.id)
        if where is not None:
            raise DuplicateItemError(f"item {item.id!r} already stored in {where.value}")
        item.tier = tier
        self._buffers[tier][item.id] = item
        self.log.emit(OpKind.STORE, id=item.id, tier=tier.value, tokens=item.tokens)
        return self._enforce_capacity(tier)

    def promote(self, item_id: str, tier: TierKind | str) -> EvictionReceipt:
        """Move an existing item up into ``tier`` (logged as a STORE)."""
        tier = TierKind(tier)
        src = self.locate(item_id)
        if src is None:
            raise ItemNotFoundError(item_id)
        item = self._buffers[src].pop(item_id)
        item.tier = tier
        self._buffers[tier][item_id] = item
        self.log.emit(OpKind.STORE, id=item_id, tier=tier.value, tokens=item.tokens, origin=src.value)
        return self._enforce_capacity(tier)

    def _eviction_order(self, tier: TierKind) -> list[MemoryItem]:
        return sorted(self._buffers[tier].values(), key=lambda it: (it.priority, it.last_access_step, it.id))

    def _over_capacity(self, tier: TierKind) -> bool:
        limits = self.tiers[tier]
        if limits.capacity_items is not None and len(self._buffers[tier]) > limits.capacity_items:
            return True
        return limits.capacity_tokens is not None and self.tokens(tier) > limits.capacity_tokens

    def _move_down(self, item: MemoryItem, src: TierKind) -> TierKind:
        dest = src.below
        assert dest is not None
        del self._buffers[src][item.id]
        item.tier = dest
        self._buffers[dest][item.id] = item
        return dest

    def _enforce_capacity(self, tier: TierKind) -> EvictionReceipt:
        dest = tier.below
        receipt = EvictionReceipt(destination=dest if dest else "dropped", reason="capacity")
        if dest is None:
            return receipt
        while self._over_capacity(tier):
            victim = self._eviction_order(tier)[0]
            self._move_down(victim, tier)
            receipt.evicted_ids.append(victim.id)
            self.log.emit(OpKind.EVICT, id=victim.id, src=tier.value, dest=dest.value, reason="capacity")
        if receipt.evicted_ids:
            sub = self._enforce_capacity(dest)
            if sub.evicted_ids or sub.cascaded:
                receipt.cascaded.append(sub)
        return receipt

    def access(self, item_id: str, current_step: int) -> MemoryItem:
        tier = self.locate(item_id)
        if tier is None:
            raise ItemNotFoundError(item_id)
        item = self._buffers[tier][item_id]
        item.access_count += 1
        item.last_access_step = max(item.last_access_step, current_step)
        item.priority = min(1.0, item.priority + self.boost)
        kind = OpKind.REUSE_INTERNAL if tier in (TierKind.IMMEDIATE, TierKind.TASK) else OpKind.INTERNAL_FETCH
        self.log.emit(kind, id=item_id, tier=tier.value, priority=item.priority)
        return item

    def decay_step(self, current_step: int) -> int:
        """Apply exponential decay to every item and demote those below the floor.

        Returns the number of items demoted. Semantic items are never removed.
        """
        for item in self.all_items():
            anchor = max(item.decayed_at, item.last_access_step)
            elapsed = current_step - anchor
            if elapsed > 0:
                item.priority *= 2.0 ** (-elapsed / item.half_life)
                item.decayed_at = current_step

        moves: list[list[str]] = []
        # deepest first so an item drops at most one tier per call
        for src in (TierKind.EPISODIC, TierKind.TASK, TierKind.IMMEDIATE):
            for item in [it for it in self._buffers[src].values() if it.priority < self.decay_floor]:
                dest = self._move_down(item, src)
                moves.append([item.id, src.value, dest.value])
        self.log.emit(OpKind.DECAY, step_at=current_step, demoted=moves)
        for kind in (TierKind.TASK, TierKind.EPISODIC):
            self._enforce_capacity(kind)
        return len(moves)

    def consolidate(self, current_step: int, min_access: int = 3) -> list[str]:
        """Copy frequently accessed working items into Episodic in compressed form."""
        if min_access < 1:
            raise ValueError("min_access must be >= 1")
        done = []
        for src in (TierKind.IMMEDIATE, TierKind.TASK):
            for item in self.items(src):
                if item.access_count < min_access:
                    continue
                copy_id = f"{item.id}@episodic"
                if copy_id in self:
                    continue
                copy = MemoryItem(
                    id=copy_id,
                    content=compress(item.content),
                    embedding=item.embedding.copy(),
                    source=item.source,
                    created_step=current_step,
                    last_access_step=current_step,
                    priority=0.5,
                    half_life=item.half_life * 2,
                    tags=list(item.tags),
                )
                copy.tier = TierKind.EPISODIC
                self._buffers[TierKind.EPISODIC][copy_id] = copy
                self.log.emit(OpKind.CONSOLIDATE, id=item.id, copy_id=copy_id, tier=TierKind.EPISODIC.value)
                done.append(item.id)
        if done:
            self._enforce_capacity(TierKind.EPISODIC)
        return done

    # -- persistence -----------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "boost": self.boost,
            "decay_floor": self.decay_floor,
            "immediate_items": self.tiers[TierKind.IMMEDIATE].capacity_items,
            "buffers": {k.value: [it.to_dict() for it in self._buffers[k].values()] for k in TierKind},
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any], log: OpLog) -> "MemoryStore":
        store = cls(log=log, immediate_items=data["immediate_items"], boost=data["boost"], decay_floor=data["decay_floor"])
        for kind in TierKind:
            for raw in data["buffers"][kind.value]:
                item = MemoryItem.from_dict(raw)
                store._buffers[kind][item.id] = item
        return store


def replay_membership(events: Iterable[OpEvent]) -> dict[str, str]:
    """Rebuild ``{item_id: tier}`` from STORE / EVICT / DECAY / CONSOLIDATE events."""
    where: dict[str, str] = {}
    for e in events:
        p = e.payload
        if e.kind is OpKind.STORE:
            where[p["id"]] = p["tier"]
        elif e.kind is OpKind.EVICT:
            if p["dest"] == "dropped":
                where.pop(p["id"], None)
            else:
                where[p["id"]] = p["dest"]
        elif e.kind is OpKind.DECAY:
            for item_id, _src, dest in p["demoted"]:
                where[item_id] = dest
        elif e.kind is OpKind.CONSOLIDATE:
            where[p["copy_id"]] = p["tier"]
    return where
