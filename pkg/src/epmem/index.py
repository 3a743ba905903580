"""Exact cosine-similarity index over augmented-context embeddings.

Stage one of retrieval searches this index (condensed summaries only);
stage two fetches the full record for prompt construction.  Search is an
exact linear scan — at a few thousand entries precomputed norms make a
single matrix-vector product per query cheap, and exactness keeps the
whole path oracle-testable.
"""

from __future__ import annotations

import hashlib
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .memory import EpisodicMemory, MemoryDataset
from .providers import EmbeddingProvider, decode_vector, encode_vector

DEFAULT_TOP_K = 3


class IndexError_(ValueError):
    """Index construction or query contract breach."""


class IndexBuildError(RuntimeError):
    """Provider failures during build; carries every uid that failed."""

    def __init__(self, failed_uids: list[str], last_error: Optional[Exception] = None):
        self.failed_uids = failed_uids
        detail = f" (last error: {last_error})" if last_error else ""
        super().__init__(f"embedding failed for {len(failed_uids)} uids: "
                         f"{', '.join(failed_uids[:5])}{'…' if len(failed_uids) > 5 else ''}{detail}")


def content_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class EmbeddingCache:
    """Persistent (model id, content hash) → vector map, JSONL sidecar.

    Hits return vectors bitwise-equal to the original provider output.
    Writes append immediately and are serialized; reloading collapses
    duplicates (last write wins, though entries never differ in practice).
    """

    def __init__(self, path: Optional[str | Path] = None):
        self.path = Path(path) if path else None
        self._entries: dict[tuple[str, str], np.ndarray] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    rec = json.loads(line)
                    self._entries[(rec["model"], rec["hash"])] = decode_vector(rec["data"])

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, model_id: str, text: str) -> Optional[np.ndarray]:
        vec = self._entries.get((model_id, content_hash(text)))
        return None if vec is None else vec.copy()

    def put(self, model_id: str, text: str, vec: np.ndarray) -> None:
        key = (model_id, content_hash(text))
        with self._lock:
            self._entries[key] = np.asarray(vec, dtype=np.float64).copy()
            if self.path is not None:
                rec = {"model": model_id, "hash": key[1],
                       "dim": int(vec.shape[0]), "data": encode_vector(vec)}
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(rec) + "\n")


@dataclass(frozen=True)
class IndexedEntry:
    uid: str
    vector: np.ndarray
    cached_norm: float


class MemoryIndex:
    """Immutable-after-build exact search index.

    ``entries`` preserves dataset order; query-time arrays are kept
    pre-sorted by uid so that a stable sort on score alone yields the
    documented tie order (descending score, then ascending uid).

    The index stores only uids and vectors — narrative text never enters
    stage one by construction.
    """

    def __init__(self, entries: Iterable[IndexedEntry], model_id: str):
        self.entries: tuple[IndexedEntry, ...] = tuple(entries)
        self.model_id = model_id
        dims = {e.vector.shape[0] for e in self.entries}
        if len(dims) > 1:
            raise IndexError_(f"entries disagree on dimension: {sorted(dims)}")
        self.dimension = dims.pop() if dims else 0
        uids = [e.uid for e in self.entries]
        if len(set(uids)) != len(uids):
            raise IndexError_("duplicate uids in index")
        order = sorted(range(len(self.entries)), key=lambda i: self.entries[i].uid)
        self._uids = [self.entries[i].uid for i in order]
        if self.entries:
            self._matrix = np.vstack([self.entries[i].vector for i in order])
            self._norms = np.array([self.entries[i].cached_norm for i in order])
        else:
            self._matrix = np.zeros((0, 0))
            self._norms = np.zeros(0)

    def __len__(self) -> int:
        return len(self.entries)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """dot(a, b) / (‖a‖‖b‖), clamped to [-1, 1] against rounding."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise IndexError_(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise IndexError_("cosine similarity undefined for a zero vector")
    return float(min(1.0, max(-1.0, float(np.dot(a, b)) / (na * nb))))


def build_index(ds: MemoryDataset, provider: EmbeddingProvider,
                cache: Optional[EmbeddingCache] = None,
                max_workers: int = 1) -> MemoryIndex:
    """Embed each memory's augmented context (cache first) into an index.

    Embeddings cover ``augmented_context`` only — never the narrative.
    ``max_workers`` bounds concurrent provider calls; cache writes are
    serialized inside EmbeddingCache.  Any uid that still fails after the
    provider's own retries is collected into one IndexBuildError.
    """
    cache = cache if cache is not None else EmbeddingCache()
    vectors: dict[str, np.ndarray] = {}
    to_embed: list[EpisodicMemory] = []
    for m in ds.memories:
        hit = cache.get(provider.model_id, m.augmented_context)
        if hit is not None:
            if hit.shape[0] != provider.dimension:
                raise IndexError_(
                    f"cache entry for {m.uid!r} has dimension {hit.shape[0]}, "
                    f"provider {provider.model_id!r} expects {provider.dimension}"
                )
            vectors[m.uid] = hit
        else:
            to_embed.append(m)

    failures: list[str] = []
    last_error: Optional[Exception] = None

    def _embed(m: EpisodicMemory) -> None:
        nonlocal last_error
        try:
            vec = np.asarray(provider.embed(m.augmented_context), dtype=np.float64)
        except Exception as exc:
            failures.append(m.uid)
            last_error = exc
            return
        cache.put(provider.model_id, m.augmented_context, vec)
        vectors[m.uid] = vec

    if max_workers <= 1:
        for m in to_embed:
            _embed(m)
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            list(pool.map(_embed, to_embed))
    if failures:
        raise IndexBuildError(sorted(failures), last_error)

    entries = [
        IndexedEntry(m.uid, vectors[m.uid], float(np.linalg.norm(vectors[m.uid])))
        for m in ds.memories
    ]
    for e in entries:
        if e.cached_norm == 0.0:
            raise IndexError_(f"provider produced a zero vector for {e.uid!r}")
    return MemoryIndex(entries, provider.model_id)


def top_k(index: MemoryIndex, query: np.ndarray, k: int = DEFAULT_TOP_K) -> list[tuple[str, float]]:
    """Rank all entries by cosine similarity to ``query``.

    Returns the best ``min(k, len(index))`` as (uid, score), descending
    score with ties broken by ascending uid.
    """
    if k < 1:
        raise IndexError_(f"k must be >= 1, got {k}")
    if len(index) == 0:
        return []
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (index.dimension,):
        raise IndexError_(
            f"query dimension {query.shape} does not match index ({index.dimension},)"
        )
    qnorm = np.linalg.norm(query)
    if qnorm == 0.0:
        raise IndexError_("cannot search with a zero query vector")
    scores = np.clip((index._matrix @ query) / (index._norms * qnorm), -1.0, 1.0)
    # Rows are uid-sorted, so a stable sort on -score alone realizes the
    # (descending score, ascending uid) order.
    order = np.argsort(-scores, kind="stable")[:k]
    return [(index._uids[i], float(scores[i])) for i in order]


def fetch_full(uid: str, ds: MemoryDataset) -> EpisodicMemory:
    """Stage two: resolve a ranked uid to its complete record (narrative,
    temporal markers, affect, characters, coordinates, relevance)."""
    return ds.get(uid)
