"""Engine configuration: a JSON file names the providers, models, budgets
and retrieval knobs; credentials come from environment variables only."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .prompts import PromptTemplate, StaticContext, TokenBudget
from .providers import (
    EchoDialogueProvider, EmbeddingProvider, HashEmbeddingProvider,
    OfflineMetricProvider, OpenAICompatEmbeddingProvider,
    OpenAICompatTextGenProvider, TextGenProvider,
)
from .retrieval import RetrievalConfig


class ConfigError(ValueError):
    pass


def make_embedding_provider(cfg: dict) -> EmbeddingProvider:
    kind = cfg.get("provider", "hash")
    if kind == "hash":
        return HashEmbeddingProvider(dimension=int(cfg.get("dimension", 256)),
                                     model_id=cfg.get("model"))
    if kind == "openai":
        return OpenAICompatEmbeddingProvider(
            model_id=cfg["model"],
            dimension=int(cfg["dimension"]),
            endpoint=cfg.get("endpoint", "https://api.openai.com/v1"),
            api_key_env=cfg.get("api_key_env", "OPENAI_API_KEY"),
        )
    raise ConfigError(f"unknown embedding provider kind {kind!r}")


def make_generation_provider(cfg: dict) -> TextGenProvider:
    kind = cfg.get("provider", "echo")
    if kind == "echo":
        return EchoDialogueProvider()
    if kind == "offline-metrics":
        return OfflineMetricProvider()
    if kind == "openai":
        return OpenAICompatTextGenProvider(
            model_id=cfg["model"],
            endpoint=cfg.get("endpoint", "https://api.openai.com/v1"),
            api_key_env=cfg.get("api_key_env", "OPENAI_API_KEY"),
            temperature=float(cfg.get("temperature", 0.7)),
        )
    raise ConfigError(f"unknown generation provider kind {kind!r}")


@dataclass
class EngineConfig:
    figure_name: str = "Unnamed Figure"
    figure_surname: str = "Figure"
    persona_file: Optional[str] = None
    persona_text: str = "You are a historical figure speaking in the first person."
    embedding: dict = field(default_factory=dict)
    generation: dict = field(default_factory=dict)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    budget: TokenBudget = field(default_factory=TokenBudget)
    prompt_template_file: Optional[str] = None
    session_ttl_seconds: float = 3600.0
    busy_mode: str = "queue"

    @classmethod
    def load(cls, path: Optional[str | Path]) -> "EngineConfig":
        if path is None:
            return cls()
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        retrieval_raw = raw.get("retrieval", {})
        budget_raw = raw.get("budget", {})
        cfg = cls(
            figure_name=raw.get("figure_name", cls.figure_name),
            figure_surname=raw.get("figure_surname",
                                   raw.get("figure_name", cls.figure_name).split()[-1]),
            persona_file=raw.get("persona_file"),
            embedding=raw.get("embedding", {}),
            generation=raw.get("generation", {}),
            retrieval=RetrievalConfig(
                k_direct=int(retrieval_raw.get("k_direct", 3)),
                conv_threshold=float(retrieval_raw.get("conv_threshold", 0.75)),
                n_direct_with_conv=int(retrieval_raw.get("n_direct_with_conv", 2)),
            ),
            budget=TokenBudget(**budget_raw) if budget_raw else TokenBudget(),
            prompt_template_file=raw.get("prompt_template_file"),
            session_ttl_seconds=float(raw.get("session_ttl_seconds", 3600.0)),
            busy_mode=raw.get("busy_mode", "queue"),
        )
        if cfg.persona_file:
            base = Path(path).parent
            persona_path = Path(cfg.persona_file)
            if not persona_path.is_absolute():
                persona_path = base / persona_path
            cfg.persona_text = persona_path.read_text(encoding="utf-8").strip()
        return cfg

    def static_context(self) -> StaticContext:
        return StaticContext(self.persona_text)

    def prompt_template(self) -> PromptTemplate:
        if self.prompt_template_file:
            return PromptTemplate.from_file(self.prompt_template_file)
        return PromptTemplate.default()
