"""Session-scoped dialogue service: one HTTP turn = embed, parallel
retrieve, assemble, generate, record.

Per-turn external calls are fixed at two embeddings (query, then the
completed exchange) plus one generation, on every branch.  Sessions live
in memory with idle-TTL eviction; turns within one session serialize on
the session lock while distinct sessions proceed concurrently.
"""

from __future__ import annotations

import json
import re
import secrets
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from .analytics import (
    build_feature_matrix, character_tally, conversation_path, geo_bins,
    pca_project, yearly_affect,
)
from .index import MemoryIndex
from .memory import MemoryDataset, memory_to_dict
from .prompts import (
    AssembledPrompt, DEFAULT_COUNTER, PromptTemplate, StaticContext,
    TokenBudget, TokenCounter, affect_labels, build_prompt, truncate_to_tokens,
)
from .providers import EmbeddingProvider, ProviderError, TextGenProvider
from .retrieval import (
    RetrievalBundle, RetrievalConfig, SessionMemory, record_exchange,
    reset_session, retrieve_with_vector,
)


class UnknownSessionError(KeyError):
    pass


class SessionBusyError(RuntimeError):
    pass


@dataclass(frozen=True)
class TurnTiming:
    embed_ms: float
    retrieve_ms: float
    assemble_ms: float
    prompt_total_ms: float  # query receipt to final prompt delivery
    generate_ms: float

    def to_dict(self) -> dict:
        return {
            "embed_ms": self.embed_ms,
            "retrieve_ms": self.retrieve_ms,
            "assemble_ms": self.assemble_ms,
            "prompt_total_ms": self.prompt_total_ms,
            "generate_ms": self.generate_ms,
        }


@dataclass(frozen=True)
class RetrievedRef:
    uid: str
    score: float
    provenance: str  # conversational | associated | direct


@dataclass(frozen=True)
class ChatTurnResult:
    response_text: str
    retrieved: tuple[RetrievedRef, ...]
    timing: TurnTiming
    turn: int
    prompt: AssembledPrompt

    def to_dict(self) -> dict:
        return {
            "response_text": self.response_text,
            "retrieved": [
                {"uid": r.uid, "score": r.score, "provenance": r.provenance}
                for r in self.retrieved
            ],
            "timing": self.timing.to_dict(),
            "turn": self.turn,
            "prompt_tokens": dict(self.prompt.per_section_tokens),
        }


@dataclass
class Session:
    session_id: str
    created_at: float
    config: RetrievalConfig
    memory: SessionMemory = field(default_factory=SessionMemory)
    path: list[tuple[int, tuple[str, ...]]] = field(default_factory=list)
    last_used: float = 0.0
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionRegistry:
    """In-memory session store with lazy idle-TTL eviction."""

    def __init__(self, default_config: RetrievalConfig, ttl_seconds: float = 3600.0):
        self.default_config = default_config
        self.ttl_seconds = ttl_seconds
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._sessions)

    def create(self, overrides: Optional[dict] = None) -> Session:
        cfg = self.default_config
        if overrides:
            allowed = {"k_direct", "conv_threshold", "n_direct_with_conv"}
            bad = set(overrides) - allowed
            if bad:
                raise ValueError(f"unknown config overrides: {sorted(bad)}")
            cfg = RetrievalConfig(
                k_direct=int(overrides.get("k_direct", cfg.k_direct)),
                conv_threshold=float(overrides.get("conv_threshold", cfg.conv_threshold)),
                n_direct_with_conv=int(overrides.get("n_direct_with_conv",
                                                     cfg.n_direct_with_conv)),
            )
        now = time.monotonic()
        session = Session(
            session_id=secrets.token_urlsafe(16),
            created_at=now,
            config=cfg,
            last_used=now,
        )
        with self._lock:
            self._evict_idle(now)
            self._sessions[session.session_id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            self._evict_idle(time.monotonic())
            session = self._sessions.get(session_id)
        if session is None:
            raise UnknownSessionError(session_id)
        session.last_used = time.monotonic()
        return session

    def _evict_idle(self, now: float) -> None:
        expired = [sid for sid, s in self._sessions.items()
                   if now - s.last_used > self.ttl_seconds]
        for sid in expired:
            del self._sessions[sid]


class DialogueEngine:
    """Shared per-turn orchestration over one dataset/index pair."""

    def __init__(self, dataset: MemoryDataset, index: MemoryIndex,
                 embedder: EmbeddingProvider, generator: TextGenProvider,
                 static: StaticContext, budget: TokenBudget = TokenBudget(),
                 counter: TokenCounter = DEFAULT_COUNTER,
                 template: Optional[PromptTemplate] = None,
                 parallel_retrieval: bool = True):
        self.dataset = dataset
        self.index = index
        self.embedder = embedder
        self.generator = generator
        self.static = static
        self.budget = budget
        self.counter = counter
        self.template = template or PromptTemplate.default()
        self.parallel_retrieval = parallel_retrieval

    def chat(self, session: Session, query: str) -> ChatTurnResult:
        """Run one turn.  A provider failure anywhere aborts the turn and
        leaves the session exactly as it was (no exchange, no path entry)."""
        if not query.strip():
            raise ValueError("query is empty")
        received = time.perf_counter()

        query_vec = self.embedder.embed(query)  # embedding call 1
        embedded = time.perf_counter()

        bundle = retrieve_with_vector(query_vec, session.memory, self.index,
                                      session.config, parallel=self.parallel_retrieval)
        retrieved_at = time.perf_counter()

        prompt = build_prompt(self.static, bundle, self.dataset,
                              session.memory.exchanges, self.budget,
                              self.counter, self.template)
        prompt_done = time.perf_counter()

        raw_response = self.generator.complete(prompt.rendered, query,
                                               self.budget.response_reserve)
        response = truncate_to_tokens(raw_response, self.budget.response_reserve,
                                      self.counter)
        generated = time.perf_counter()

        # Mutations happen only after every provider call has succeeded;
        # record_exchange embeds (call 2) before touching the session.
        record_exchange(session.memory, query, response, self.embedder)
        turn = session.memory.exchanges[-1].turn
        session.path.append((turn, bundle.retrieved_uids_ordered))

        timing = TurnTiming(
            embed_ms=(embedded - received) * 1000.0,
            retrieve_ms=(retrieved_at - embedded) * 1000.0,
            assemble_ms=(prompt_done - retrieved_at) * 1000.0,
            prompt_total_ms=(prompt_done - received) * 1000.0,
            generate_ms=(generated - prompt_done) * 1000.0,
        )
        return ChatTurnResult(
            response_text=response,
            retrieved=_bundle_refs(bundle),
            timing=timing,
            turn=turn,
            prompt=prompt,
        )


def _bundle_refs(bundle: RetrievalBundle) -> tuple[RetrievedRef, ...]:
    refs: list[RetrievedRef] = []
    if bundle.conversational is not None:
        exchange, score = bundle.conversational
        refs.append(RetrievedRef(f"turn:{exchange.turn}", score, "conversational"))
    if bundle.associated is not None:
        refs.append(RetrievedRef(bundle.associated[0], bundle.associated[1], "associated"))
    refs.extend(RetrievedRef(uid, score, "direct") for uid, score in bundle.direct)
    return tuple(refs)


@dataclass(frozen=True)
class DriftMatch:
    text_index: int
    start: int
    end: int
    matched: str


class DriftScanner:
    """Regex scan for third-person constructions about the embodied figure.

    The pattern set ships as data and is replaceable per figure; it
    approximates the construction families worth flagging rather than
    claiming grammatical completeness.
    """

    def __init__(self, figure_surname: str, patterns_path: Optional[str | Path] = None):
        if patterns_path is None:
            raw = (resources.files("epmem") / "data/drift_patterns.json").read_text("utf-8")
        else:
            raw = Path(patterns_path).read_text(encoding="utf-8")
        spec = json.loads(raw)
        verb = spec["verb_like"]
        self.patterns = [
            re.compile(p.format(surname=re.escape(figure_surname), verb=verb))
            for p in spec["patterns"]
        ]

    def scan(self, texts: list[str]) -> tuple[int, list[DriftMatch]]:
        matches: list[DriftMatch] = []
        for i, text in enumerate(texts):
            for pattern in self.patterns:
                for m in pattern.finditer(text):
                    matches.append(DriftMatch(i, m.start(), m.end(), m.group(0)))
        return len(matches), matches


def perspective_drift_scan(texts: list[str], figure_surname: str,
                           patterns_path: Optional[str | Path] = None
                           ) -> tuple[int, list[DriftMatch]]:
    return DriftScanner(figure_surname, patterns_path).scan(texts)


from pydantic import BaseModel


class ChatRequest(BaseModel):
    query: str


class CreateSessionRequest(BaseModel):
    k_direct: Optional[int] = None
    conv_threshold: Optional[float] = None
    n_direct_with_conv: Optional[int] = None


def create_app(engine: DialogueEngine, registry: Optional[SessionRegistry] = None,
               busy_mode: str = "queue", ui_dir: Optional[str | Path] = None):
    """FastAPI application exposing the dialogue and analytics APIs.

    ``busy_mode`` picks what a second concurrent turn on one session gets:
    "queue" (default) waits on the session lock, "reject" returns 409.
    ``ui_dir`` optionally mounts a built browser UI at ``/ui``.
    """
    from fastapi import FastAPI, HTTPException, Query
    from fastapi.middleware.cors import CORSMiddleware

    if registry is None:
        registry = SessionRegistry(RetrievalConfig())

    app = FastAPI(title="epmem dialogue service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"],
    )
    app.state.engine = engine
    app.state.registry = registry
    analytics_cache: dict[str, object] = {}

    def _get_session(session_id: str) -> Session:
        try:
            return registry.get(session_id)
        except UnknownSessionError:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")

    def _projection():
        if "projection" not in analytics_cache:
            fm = build_feature_matrix(engine.dataset, engine.index)
            analytics_cache["projection"] = pca_project(fm, engine.dataset)
        return analytics_cache["projection"]

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "memories": len(engine.dataset),
                "sessions": len(registry)}

    @app.post("/sessions")
    def create_session(body: Optional[CreateSessionRequest] = None):
        overrides = {} if body is None else {
            k: v for k, v in body.model_dump().items() if v is not None
        }
        try:
            session = registry.create(overrides)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {
            "session_id": session.session_id,
            "config": {
                "k_direct": session.config.k_direct,
                "conv_threshold": session.config.conv_threshold,
                "n_direct_with_conv": session.config.n_direct_with_conv,
            },
        }

    @app.post("/sessions/{session_id}/chat")
    def chat(session_id: str, body: ChatRequest):
        session = _get_session(session_id)
        if not body.query.strip():
            raise HTTPException(status_code=400, detail="query is empty")
        if busy_mode == "reject":
            if not session.lock.acquire(blocking=False):
                raise HTTPException(status_code=409, detail="turn already in flight")
        else:
            session.lock.acquire()
        try:
            result = engine.chat(session, body.query)
        except ProviderError as exc:
            raise HTTPException(status_code=502, detail=f"provider failure: {exc}")
        finally:
            session.lock.release()
        return result.to_dict()

    @app.post("/sessions/{session_id}/reset")
    def reset(session_id: str):
        session = _get_session(session_id)
        with session.lock:
            reset_session(session.memory)
            session.path.clear()
        return {"session_id": session_id, "exchanges": 0}

    @app.get("/sessions/{session_id}/path")
    def session_path(session_id: str):
        session = _get_session(session_id)
        return {"path": [{"turn": turn, "uids": list(uids)}
                         for turn, uids in session.path]}

    @app.get("/sessions/{session_id}/path-points")
    def session_path_points(session_id: str):
        session = _get_session(session_id)
        points = conversation_path(session.path, _projection())
        return {"points": [{"turn": t, "uid": uid, "x": x, "y": y}
                           for t, uid, x, y in points]}

    @app.get("/memories/{uid}")
    def memory_card(uid: str):
        try:
            m = engine.dataset.get(uid)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown memory {uid!r}")
        vlabel, alabel = affect_labels(m.affect)
        payload = memory_to_dict(m)
        payload["valence_label"] = vlabel
        payload["arousal_label"] = alabel
        return payload

    @app.get("/analytics/projection")
    def projection():
        return _projection().to_dict()

    @app.get("/analytics/affect-series")
    def affect_series():
        if "affect" not in analytics_cache:
            analytics_cache["affect"] = yearly_affect(engine.dataset)
        return analytics_cache["affect"].to_dict()

    @app.get("/analytics/characters")
    def characters():
        if "characters" not in analytics_cache:
            analytics_cache["characters"] = character_tally(engine.dataset)
        return analytics_cache["characters"].to_dict()

    @app.get("/analytics/geo-bins")
    def geo_bins_endpoint(bin: float = 1.0,
                          from_: Optional[str] = Query(None, alias="from"),
                          to: Optional[str] = None, vmin: Optional[float] = None,
                          vmax: Optional[float] = None):
        from datetime import date as date_type
        date_filter = None
        if from_ and to:
            date_filter = (date_type.fromisoformat(from_), date_type.fromisoformat(to))
        valence_filter = None
        if vmin is not None and vmax is not None:
            valence_filter = (vmin, vmax)
        grid = geo_bins(engine.dataset, bin_degrees=bin,
                        date_filter=date_filter, valence_filter=valence_filter)
        return grid.to_dict()

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
