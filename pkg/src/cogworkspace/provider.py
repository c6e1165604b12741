"""Task decomposition and answer synthesis backends.

``StubProvider`` is a pure rule table used for every offline run.
``RemoteProvider`` talks to an OpenAI-style chat-completions endpoint:

    POST {endpoint}
    Authorization: Bearer $CW_API_KEY
    {"model": ..., "temperature": 0,
     "messages": [{"role": "system", "content": ...},
                  {"role": "user", "content": ...}]}

and reads ``choices[0].message.content`` from the response.
"""

from __future__ import annotations

import os
import re
import time
from dataclasses import dataclass
from typing import Protocol, Sequence

import httpx

MAX_SUBTASKS = 5
NO_CONTEXT = "No supporting context was found for this question."

_SENTENCE_END = re.compile(r"(?<=[.!?])\s+")
_SPLIT_CONJUNCTS = re.compile(r"\s+(?:and|vs\.?|versus)\s+|,\s*", re.IGNORECASE)
_AUX = {"does", "do", "did", "is", "are", "was", "were", "can", "could", "should", "would", "will"}


class ProviderError(RuntimeError):
    pass


class Provider(Protocol):
    kind: str

    def decompose(self, query: str) -> list[str]: ...

    def synthesize(self, query: str, context_items: Sequence[str]) -> str: ...


def first_sentence(text: str) -> str:
    return _SENTENCE_END.split(text.strip(), maxsplit=1)[0]


def _clean(text: str) -> str:
    return text.strip().strip("?.!").strip()


def _topic_after_question(words: list[str]) -> str:
    # "how does X work" -> "X"
    rest = words[1:]
    if rest and rest[0].lower() in _AUX:
        rest = rest[1:]
    if len(rest) > 1 and rest[-1].lower() in {"work", "works", "matter", "help", "happen"}:
        rest = rest[:-1]
    return " ".join(rest)


@dataclass(frozen=True)
class StubProvider:
    """Deterministic rule-based provider. No I/O, no clock, no randomness."""

    seed: int = 0
    kind: str = "stub"

    def decompose(self, query: str) -> list[str]:
        q = _clean(query)
        if not q:
            raise ValueError("query must be non-empty")
        words = q.split()
        lower = q.lower()

        if " and " in f" {lower} " or re.search(r"\b(compare|vs\.?|versus)\b", lower):
            body = re.sub(r"^\s*compare\s+", "", q, flags=re.IGNORECASE)
            parts = [_clean(p) for p in _SPLIT_CONJUNCTS.split(body)]
            parts = [p for p in parts if p]
            if len(parts) > 1:
                return parts[:MAX_SUBTASKS]

        head = words[0].lower()
        if head in {"why", "how"} and len(words) > 1:
            topic = _topic_after_question(words)
            return [f"define {topic}", f"mechanism of {topic}"]
        if head == "what" and len(words) > 2 and words[1].lower() in {"is", "are"}:
            topic = " ".join(words[2:])
            return [f"define {topic}", f"examples of {topic}"]
        return [q]

    def synthesize(self, query: str, context_items: Sequence[str]) -> str:
        header = f"Answer to: {_clean(query)}."
        sentences = [first_sentence(c) for c in context_items if c.strip()][:3]
        if not sentences:
            return f"{header} {NO_CONTEXT}"
        return " ".join([header, *sentences])


DECOMPOSE_PROMPT = (
    "Split the user's question into at most 5 self-contained subtasks. "
    "Reply with one subtask per line and nothing else."
)
SYNTHESIZE_PROMPT = "Answer the question using only the supplied context. Be concise."


@dataclass
class RemoteProvider:
    endpoint: str
    model: str = "gpt-3.5-turbo"
    timeout: float = 30.0
    max_retries: int = 2
    backoff: float = 1.0
    api_key_env: str = "CW_API_KEY"
    transport: httpx.BaseTransport | None = None
    kind: str = "remote"

    def _chat(self, system: str, user: str) -> str:
        key = os.environ.get(self.api_key_env, "")
        body = {
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "system", "content": system}, {"role": "user", "content": user}],
        }
        last: Exception | None = None
        with httpx.Client(timeout=self.timeout, transport=self.transport) as client:
            for attempt in range(self.max_retries + 1):
                if attempt:
                    time.sleep(self.backoff)
                try:
                    resp = client.post(self.endpoint, json=body, headers={"Authorization": f"Bearer {key}"})
                    resp.raise_for_status()
                    return resp.json()["choices"][0]["message"]["content"]
                except (httpx.HTTPError, KeyError, IndexError, TypeError, ValueError) as exc:
                    last = exc
        raise ProviderError(f"chat completion failed after {self.max_retries + 1} attempts: {last}")

    def decompose(self, query: str) -> list[str]:
        if not query.strip():
            raise ValueError("query must be non-empty")
        text = self._chat(DECOMPOSE_PROMPT, query)
        lines = [ln.strip(" -*\t") for ln in text.splitlines()]
        subtasks = [ln for ln in lines if ln]
        return subtasks[:MAX_SUBTASKS] or [query.strip()]

    def synthesize(self, query: str, context_items: Sequence[str]) -> str:
        if not context_items:
            return f"Answer to: {_clean(query)}. {NO_CONTEXT}"
        context = "\n\n".join(f"[{i + 1}] {c}" for i, c in enumerate(context_items))
        return self._chat(SYNTHESIZE_PROMPT, f"Context:\n{context}\n\nQuestion: {query}")


def make_provider(kind: str = "stub", seed: int = 0, **config) -> Provider:
    if kind == "stub":
        return StubProvider(seed=seed)
    if kind == "remote":
        if "endpoint" not in config:
            raise ValueError("remote provider needs an endpoint")
        return RemoteProvider(**config)
    raise ValueError(f"unknown provider kind {kind!r}")
