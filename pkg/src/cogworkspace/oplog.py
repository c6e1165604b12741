"""Append-only ledger of memory operations.

Every metric reported by the harness is derived from these events, so the
log is the single source of truth for reuse rates and operation counts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Iterator


class Arm(str, Enum):
    CW = "CW"
    RAG = "RAG"


class OpKind(str, Enum):
    DECOMPOSE = "DECOMPOSE"
    PREDICT = "PREDICT"
    RETRIEVE_EXTERNAL = "RETRIEVE_EXTERNAL"
    REUSE_INTERNAL = "REUSE_INTERNAL"
    INTERNAL_FETCH = "INTERNAL_FETCH"
    STORE = "STORE"
    UPDATE = "UPDATE"
    CONSOLIDATE = "CONSOLIDATE"
    EVICT = "EVICT"
    DECAY = "DECAY"
    EMBED_QUERY = "EMBED_QUERY"
    ASSEMBLE_CONTEXT = "ASSEMBLE_CONTEXT"
    WARN = "WARN"


# WARN is diagnostic and never counted as work.
COUNTED_KINDS = frozenset(k for k in OpKind if k is not OpKind.WARN)


@dataclass(frozen=True)
class OpEvent:
    step: int
    arm: Arm
    kind: OpKind
    round: int
    payload: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "step": self.step,
            "arm": self.arm.value,
            "kind": self.kind.value,
            "round": self.round,
            "payload": dict(sorted(self.payload.items())),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "OpEvent":
        return cls(
            step=int(data["step"]),
            arm=Arm(data["arm"]),
            kind=OpKind(data["kind"]),
            round=int(data["round"]),
            payload=dict(data.get("payload", {})),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


class OpLog:
    """Per-arm event ledger with a logical clock.

    ``clock`` is the step of the most recent event. Steps start at 1 and
    increase by exactly one per event, so the clock doubles as the logical
    time used by memory decay.
    """

    def __init__(self, arm: Arm | str = Arm.CW, events: Iterable[OpEvent] = ()):
        self.arm = Arm(arm)
        self._events: list[OpEvent] = []
        self.round = 0
        for event in events:
            self._append(event)

    def _append(self, event: OpEvent) -> None:
        if event.arm is not self.arm:
            raise ValueError(f"event arm {event.arm.value} does not match log arm {self.arm.value}")
        if self._events and event.step <= self._events[-1].step:
            raise ValueError(f"non-increasing step {event.step} after {self._events[-1].step}")
        self._events.append(event)
        self.round = max(self.round, event.round)

    def emit(self, kind: OpKind, **payload: Any) -> OpEvent:
        event = OpEvent(step=self.clock + 1, arm=self.arm, kind=OpKind(kind), round=self.round, payload=payload)
        self._events.append(event)
        return event

    @property
    def clock(self) -> int:
        return self._events[-1].step if self._events else 0

    @property
    def events(self) -> tuple[OpEvent, ...]:
        return tuple(self._events)

    def __len__(self) -> int:
        return len(self._events)

    def __iter__(self) -> Iterator[OpEvent]:
        return iter(self._events)

    def truncate(self, length: int) -> None:
        """Drop events past ``length``; only used to roll back an aborted round."""
        del self._events[length:]

    def count(self, kind: OpKind, round: int | None = None) -> int:
        return sum(1 for e in self._events if e.kind is kind and (round is None or e.round == round))

    def ops(self, round: int | None = None) -> int:
        return sum(1 for e in self._events if e.kind in COUNTED_KINDS and (round is None or e.round == round))

    def to_ndjson(self) -> str:
        return "".join(e.to_json() + "\n" for e in self._events)


def to_ndjson(events: Iterable[OpEvent]) -> str:
    return "".join(e.to_json() + "\n" for e in events)


def read_ndjson(text: str) -> list[OpEvent]:
    return [OpEvent.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]
