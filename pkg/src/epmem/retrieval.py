"""Parallel retrieval over long-term memory (RAG1) and conversation (RAG2).

Each turn embeds the query once, searches both indexes concurrently, and
composes a bundle: on a conversational hit, one conversational exchange,
one long-term memory associated with that exchange, and up to two direct
long-term memories; otherwise three direct long-term memories.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .index import MemoryIndex, cosine_similarity, top_k
from .providers import EmbeddingProvider

EXCHANGE_FORMAT = "User: {query}\nCharacter: {response}"


class RetrievalError(RuntimeError):
    pass


def render_exchange(query: str, response: str) -> str:
    """Canonical single-text-unit rendering of one dialogue turn."""
    return EXCHANGE_FORMAT.format(query=query, response=response)


@dataclass(frozen=True)
class ConversationExchange:
    turn: int
    query: str
    response: str
    combined: str
    vector: np.ndarray


class SessionMemory:
    """Per-session accumulation of exchanges plus their vectors (RAG2).

    Long-term memory lives elsewhere and is untouched by reset.
    """

    def __init__(self) -> None:
        self.exchanges: list[ConversationExchange] = []

    def __len__(self) -> int:
        return len(self.exchanges)

    def best_match(self, query_vec: np.ndarray) -> Optional[tuple[ConversationExchange, float]]:
        """Top-1 exchange by similarity; ties go to the most recent turn."""
        best: Optional[tuple[ConversationExchange, float]] = None
        for ex in self.exchanges:
            score = cosine_similarity(ex.vector, query_vec)
            if best is None or score > best[1] or (score == best[1] and ex.turn > best[0].turn):
                best = (ex, score)
        return best


@dataclass(frozen=True)
class RetrievalConfig:
    k_direct: int = 3
    conv_threshold: float = 0.75
    n_direct_with_conv: int = 2

    def __post_init__(self) -> None:
        if self.k_direct < 1:
            raise ValueError(f"k_direct must be >= 1, got {self.k_direct}")
        if not 0.0 <= self.conv_threshold <= 1.0:
            raise ValueError(f"conv_threshold must be in [0, 1], got {self.conv_threshold}")
        if self.n_direct_with_conv < 1:
            raise ValueError("n_direct_with_conv must be >= 1")


@dataclass(frozen=True)
class RetrievalBundle:
    """Composed output of one turn's parallel retrieval.

    ``retrieved_uids_ordered`` lists long-term uids in provenance order
    (associated first, then direct) for path tracking; the conversational
    slot carries no long-term uid.
    """
    conversational: Optional[tuple[ConversationExchange, float]]
    associated: Optional[tuple[str, float]]
    direct: tuple[tuple[str, float], ...]
    retrieved_uids_ordered: tuple[str, ...]

    @property
    def long_term_uids(self) -> tuple[str, ...]:
        return self.retrieved_uids_ordered


@dataclass(frozen=True)
class RetrievalTiming:
    embed_ms: float
    search_ms: float


def associated_retrieval(exchange: ConversationExchange, ltm: MemoryIndex,
                         exclude: set[str]) -> Optional[tuple[str, float]]:
    """Secondary retrieval: the exchange itself queries long-term memory.

    Returns the top-ranked memory not in ``exclude``; absent when the
    index offers nothing outside the exclusion set.
    """
    if len(ltm) == 0:
        return None
    k = min(len(exclude) + 1, len(ltm))
    for uid, score in top_k(ltm, exchange.vector, k):
        if uid not in exclude:
            return uid, score
    return None


def retrieve_with_vector(query_vec: np.ndarray, session: SessionMemory,
                         ltm: MemoryIndex, cfg: RetrievalConfig,
                         parallel: bool = True) -> RetrievalBundle:
    """Compose a bundle from an already-embedded query.

    RAG1 (direct long-term) and RAG2 (conversational) run concurrently;
    both are read-only so the searches are race-free and order-independent.
    """
    if len(ltm) == 0:
        raise RetrievalError("long-term index is empty")
    k_fetch = max(cfg.k_direct, cfg.n_direct_with_conv)

    if parallel and len(session) > 0:
        with ThreadPoolExecutor(max_workers=2) as pool:
            f_direct = pool.submit(top_k, ltm, query_vec, k_fetch)
            f_conv = pool.submit(session.best_match, query_vec)
            direct_ranked = f_direct.result()
            conv = f_conv.result()
    else:
        direct_ranked = top_k(ltm, query_vec, k_fetch)
        conv = session.best_match(query_vec)

    # Hit requires score >= threshold (inclusive comparison, pinned).
    if conv is not None and conv[1] >= cfg.conv_threshold:
        direct = tuple(direct_ranked[: cfg.n_direct_with_conv])
        exclude = {uid for uid, _ in direct}
        assoc = associated_retrieval(conv[0], ltm, exclude)
        uids = ((assoc[0],) if assoc else ()) + tuple(uid for uid, _ in direct)
        return RetrievalBundle(conversational=conv, associated=assoc,
                               direct=direct, retrieved_uids_ordered=uids)

    direct = tuple(direct_ranked[: cfg.k_direct])
    return RetrievalBundle(
        conversational=None, associated=None, direct=direct,
        retrieved_uids_ordered=tuple(uid for uid, _ in direct),
    )


def retrieve(query: str, session: SessionMemory, ltm: MemoryIndex,
             provider: EmbeddingProvider, cfg: RetrievalConfig = RetrievalConfig(),
             parallel: bool = True) -> RetrievalBundle:
    """Full per-turn retrieval: embed the query once, then compose.

    Exactly one provider embedding call regardless of branch; the
    associated retrieval reuses the exchange's stored vector.
    """
    query_vec = provider.embed(query)
    return retrieve_with_vector(query_vec, session, ltm, cfg, parallel=parallel)


def record_exchange(session: SessionMemory, query: str, response: str,
                    provider: EmbeddingProvider) -> SessionMemory:
    """Append one completed turn to conversational memory (one embedding
    call).  On provider failure nothing is recorded and the turn number is
    not consumed."""
    combined = render_exchange(query, response)
    vector = provider.embed(combined)  # may raise; session untouched then
    turn = session.exchanges[-1].turn + 1 if session.exchanges else 1
    session.exchanges.append(
        ConversationExchange(turn=turn, query=query, response=response,
                             combined=combined, vector=vector)
    )
    return session


def reset_session(session: SessionMemory) -> SessionMemory:
    """Clear conversational memory; long-term memory is not touched."""
    session.exchanges.clear()
    return session
