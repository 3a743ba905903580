"""Shared fixtures: tiny datasets, controllable mock providers."""

from __future__ import annotations

from datetime import date
from pathlib import Path

import numpy as np
import pytest

from epmem.memory import AffectiveState, EpisodicMemory, LifespanBounds, MemoryDataset
from epmem.providers import HashEmbeddingProvider, ProviderError

FIXTURES = Path(__file__).parent / "fixtures"

FIGURE = "Adelie Varenne"
BIRTH = date(1824, 5, 12)
DEATH = date(1887, 11, 3)


def make_memory(uid: str, *, valence: float = 0.0, arousal: float = 0.0,
                timestamp: date = date(1860, 6, 15), relevance: int = 5,
                characters: tuple[str, ...] = (), lat=None, lon=None,
                source: str = "biography", voiceover: str | None = None,
                augmented: str | None = None, context: str | None = None) -> EpisodicMemory:
    return EpisodicMemory(
        uid=uid,
        background=f"A scene for {uid}.",
        narrator=f"Framing for {uid}.",
        voiceover=voiceover if voiceover is not None else f"I remember the events of {uid} well.",
        context=context if context is not None else f"An episode recorded as {uid}",
        comment="Noted.",
        characters=characters,
        affect=AffectiveState(valence, arousal),
        timestamp=timestamp,
        relevance=relevance,
        augmented_context=augmented if augmented is not None
        else f"An episode recorded as {uid}. {timestamp.isoformat()}. Characters: none.",
        source=source,
        latitude=lat,
        longitude=lon,
    )


@pytest.fixture
def bounds() -> LifespanBounds:
    return LifespanBounds(FIGURE, BIRTH, DEATH)


@pytest.fixture
def small_dataset(bounds) -> MemoryDataset:
    memories = [
        make_memory("m-001", valence=0.5, arousal=0.2, timestamp=date(1851, 9, 1),
                    characters=("Henri Varenne",), lat=43.6108, lon=3.8767,
                    relevance=8),
        make_memory("m-002", valence=-0.4, arousal=0.6, timestamp=date(1854, 3, 10),
                    characters=("Edouard Brandt", "Henri Varenne"),
                    lat=48.8566, lon=2.3522, relevance=6),
        make_memory("m-003", valence=0.1, arousal=-0.1, timestamp=date(1856, 2, 20),
                    relevance=4, source="letters"),
        make_memory("m-004", valence=0.8, arousal=0.5, timestamp=date(1863, 7, 4),
                    characters=("Camille Roux",), lat=46.2044, lon=6.1432,
                    relevance=9, source="letters"),
        make_memory("m-005", valence=-0.7, arousal=-0.3, timestamp=date(1870, 4, 30),
                    characters=("Henri Varenne",), lat=48.8566, lon=2.3522,
                    relevance=10),
        make_memory("m-006", valence=0.0, arousal=0.0, timestamp=date(1879, 2, 14),
                    characters=("Marthe Lenoir",), lat=43.6108, lon=3.8767,
                    relevance=3),
    ]
    return MemoryDataset(memories, bounds)


class MapEmbeddingProvider:
    """Embeds via an explicit text → vector table, falling back to the
    hash provider; lets tests dial exact similarity scores."""

    def __init__(self, table: dict[str, np.ndarray], dimension: int):
        self.table = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}
        self.dimension = dimension
        self.model_id = f"map-{dimension}"
        self._fallback = HashEmbeddingProvider(dimension, model_id=self.model_id)
        self.calls = 0

    def embed(self, text: str) -> np.ndarray:
        self.calls += 1
        if text in self.table:
            return self.table[text].copy()
        return self._fallback.embed(text)


class ScriptedTextGenProvider:
    """Returns queued replies in order; records every request."""

    model_id = "scripted"

    def __init__(self, replies):
        self.replies = list(replies)
        self.requests: list[tuple[str, str, int]] = []

    def complete(self, system: str, user: str, max_tokens: int) -> str:
        self.requests.append((system, user, max_tokens))
        if not self.replies:
            raise AssertionError("scripted provider exhausted")
        return self.replies.pop(0)


class FailingEmbeddingProvider:
    """Fails on texts matching a predicate; embeds the rest by hash."""

    def __init__(self, dimension: int, should_fail):
        self.dimension = dimension
        self.model_id = f"failing-{dimension}"
        self._inner = HashEmbeddingProvider(dimension, model_id=self.model_id)
        self.should_fail = should_fail

    def embed(self, text: str) -> np.ndarray:
        if self.should_fail(text):
            raise ProviderError(f"synthetic failure for {text[:30]!r}")
        return self._inner.embed(text)
