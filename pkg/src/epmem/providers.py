"""Provider contracts (embedding, text generation) and their implementations.

Everything network-shaped lives behind two small interfaces so the engine
runs identically against a live endpoint, a deterministic offline stand-in,
or a replayed recording.  Credentials come from environment variables only;
endpoints and model identifiers come from config.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import threading
import time
from pathlib import Path
from typing import Optional, Protocol, runtime_checkable

import numpy as np


class ProviderError(RuntimeError):
    """A provider call failed after retries."""


@runtime_checkable
class EmbeddingProvider(Protocol):
    """Behavioral contract: ``embed`` is deterministic for identical text
    within one ``model_id`` and never returns an all-zero vector."""

    model_id: str
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


@runtime_checkable
class TextGenProvider(Protocol):
    model_id: str

    def complete(self, system: str, user: str, max_tokens: int) -> str: ...


class HashEmbeddingProvider:
    """Deterministic mock embedder: seeded hash of the input text expanded
    to a fixed-dimension pseudo-random unit vector.

    Lets every retrieval path run end to end with zero network while
    keeping the one property the engine relies on: identical text maps to
    the identical vector.
    """

    def __init__(self, dimension: int = 256, model_id: Optional[str] = None):
        if dimension < 2:
            raise ValueError("dimension must be >= 2")
        self.dimension = dimension
        self.model_id = model_id or f"hash-{dimension}"

    def embed(self, text: str) -> np.ndarray:
        digest = hashlib.sha256(f"{self.model_id}\x00{text}".encode("utf-8")).digest()
        seed = int.from_bytes(digest[:8], "little")
        rng = np.random.default_rng(seed)
        vec = rng.standard_normal(self.dimension)
        return vec / np.linalg.norm(vec)


class EchoDialogueProvider:
    """Deterministic offline responder for demos and latency runs.

    Answers in the first person from the user message alone, so outputs
    stay free of third-person drift by construction.
    """

    model_id = "echo-1"

    def complete(self, system: str, user: str, max_tokens: int) -> str:
        topic = " ".join(user.split())[:160].rstrip(".?! ")
        return (
            f"You ask about {topic}. I remember those days clearly, and what "
            f"I carry from them still shapes how I see the world. Let me tell "
            f"you what stayed with me."
        )


class OfflineMetricProvider:
    """Deterministic rule-based stand-in for the evaluation LLM roles.

    Recognizes the metric templates by their instruction phrases and
    answers from surface heuristics: claims are the answer's sentences,
    a claim counts as supported when at least half its words appear in
    the contexts, sentence relevance is content-word overlap with the
    question, and regenerated questions echo the answer's first sentence.
    Keeps the metric harnesses runnable end to end with zero network;
    not a stand-in for real judgment quality.
    """

    model_id = "offline-metrics"

    @staticmethod
    def _words(text: str) -> set[str]:
        return {w.casefold().strip(".,;:!?\"'") for w in text.split() if w.strip()}

    def complete(self, system: str, user: str, max_tokens: int) -> str:
        import re

        if "Extract the distinct factual claims" in system:
            sentences = [s.strip() for s in re.split(r"(?<=[.!?])\s+", user) if s.strip()]
            if not sentences:
                return "NONE"
            return "\n".join(f"{i + 1}. {s}" for i, s in enumerate(sentences))
        if "supported by the provided context" in system:
            claim_words = self._words(user)
            context_words = self._words(system.split("Contexts:")[1])
            overlap = len(claim_words & context_words) / max(1, len(claim_words))
            return f"VERDICT: {'SUPPORTED' if overlap >= 0.5 else 'UNSUPPORTED'}"
        if "relevant to answering the question" in system:
            question = system.split("Question:")[1].split("Sentence:")[0]
            q_words = {w for w in self._words(question) if len(w) > 3}
            return f"VERDICT: {'RELEVANT' if q_words & self._words(user) else 'IRRELEVANT'}"
        if "questions that the following answer" in system:
            first = user.split(".")[0].strip() or "What do you recall"
            return f"1. {first}?"
        return "VERDICT: T"


class CountingEmbeddingProvider:
    """Wrapper that counts ``embed`` calls; used to assert call budgets."""

    def __init__(self, inner: EmbeddingProvider):
        self.inner = inner
        self.calls = 0

    @property
    def model_id(self) -> str:
        return self.inner.model_id

    @property
    def dimension(self) -> int:
        return self.inner.dimension

    def embed(self, text: str) -> np.ndarray:
        self.calls += 1
        return self.inner.embed(text)


class CountingTextGenProvider:
    def __init__(self, inner: TextGenProvider):
        self.inner = inner
        self.calls = 0

    @property
    def model_id(self) -> str:
        return self.inner.model_id

    def complete(self, system: str, user: str, max_tokens: int) -> str:
        self.calls += 1
        return self.inner.complete(system, user, max_tokens)


def _request_key(system: str, user: str, max_tokens: int) -> str:
    payload = f"{system}\x00{user}\x00{max_tokens}".encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


class RecordingTextGenProvider:
    """Wraps any generator and appends (request key, response) pairs to a
    JSONL recordings file for later byte-deterministic replay."""

    def __init__(self, inner: TextGenProvider, path: str | Path):
        self.inner = inner
        self.path = Path(path)
        self.model_id = f"recording({inner.model_id})"
        self._lock = threading.Lock()

    def complete(self, system: str, user: str, max_tokens: int) -> str:
        response = self.inner.complete(system, user, max_tokens)
        entry = {"key": _request_key(system, user, max_tokens), "response": response}
        with self._lock, self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")
        return response


class ReplayTextGenProvider:
    """Replays recorded responses keyed by request hash; byte-deterministic.

    A request that was never recorded raises instead of guessing.
    """

    model_id = "replay"

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._responses: dict[str, str] = {}
        with self.path.open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                self._responses[entry["key"]] = entry["response"]

    def complete(self, system: str, user: str, max_tokens: int) -> str:
        key = _request_key(system, user, max_tokens)
        if key not in self._responses:
            raise ProviderError(f"no recorded response for request key {key[:12]}…")
        return self._responses[key]


class OpenAICompatEmbeddingProvider:
    """Embeddings via any OpenAI-compatible ``/embeddings`` endpoint.

    The API key is read from ``api_key_env`` (default OPENAI_API_KEY);
    never from config files.
    """

    def __init__(self, model_id: str, dimension: int,
                 endpoint: str = "https://api.openai.com/v1",
                 api_key_env: str = "OPENAI_API_KEY",
                 timeout: float = 30.0, retries: int = 2):
        import httpx

        self.model_id = model_id
        self.dimension = dimension
        self._url = endpoint.rstrip("/") + "/embeddings"
        self._key = os.environ.get(api_key_env, "")
        self._retries = retries
        self._client = httpx.Client(timeout=timeout)

    def embed(self, text: str) -> np.ndarray:
        body = {"model": self.model_id, "input": text}
        headers = {"Authorization": f"Bearer {self._key}"}
        last: Optional[Exception] = None
        for attempt in range(self._retries + 1):
            try:
                resp = self._client.post(self._url, json=body, headers=headers)
                resp.raise_for_status()
                values = resp.json()["data"][0]["embedding"]
                vec = np.asarray(values, dtype=np.float64)
                if vec.shape != (self.dimension,):
                    raise ProviderError(
                        f"provider returned dimension {vec.shape[0]}, expected {self.dimension}"
                    )
                return vec
            except ProviderError:
                raise
            except Exception as exc:  # network / HTTP / schema
                last = exc
                if attempt < self._retries:
                    time.sleep(0.5 * 2 ** attempt)
        raise ProviderError(f"embedding call failed after {self._retries + 1} attempts: {last}")


class OpenAICompatTextGenProvider:
    """Chat completions via any OpenAI-compatible ``/chat/completions``
    endpoint (covers local servers exposing that shape as well)."""

    def __init__(self, model_id: str,
                 endpoint: str = "https://api.openai.com/v1",
                 api_key_env: str = "OPENAI_API_KEY",
                 timeout: float = 60.0, retries: int = 2,
                 temperature: float = 0.7):
        import httpx

        self.model_id = model_id
        self._url = endpoint.rstrip("/") + "/chat/completions"
        self._key = os.environ.get(api_key_env, "")
        self._retries = retries
        self._temperature = temperature
        self._client = httpx.Client(timeout=timeout)

    def complete(self, system: str, user: str, max_tokens: int) -> str:
        body = {
            "model": self.model_id,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "max_tokens": max_tokens,
            "temperature": self._temperature,
        }
        headers = {"Authorization": f"Bearer {self._key}"}
        last: Optional[Exception] = None
        for attempt in range(self._retries + 1):
            try:
                resp = self._client.post(self._url, json=body, headers=headers)
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
            except Exception as exc:
                last = exc
                if attempt < self._retries:
                    time.sleep(0.5 * 2 ** attempt)
        raise ProviderError(f"generation call failed after {self._retries + 1} attempts: {last}")


def encode_vector(vec: np.ndarray) -> str:
    """Bit-exact text encoding (little-endian float64, base64)."""
    return base64.b64encode(np.ascontiguousarray(vec, dtype="<f8").tobytes()).decode("ascii")


def decode_vector(data: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(data), dtype="<f8").copy()
