"""Five-section prompt assembly under a fixed token budget.

Sections always render in the order static → memories → metadata →
history, each charged against its own cap (the section's heading counts
toward it).  Over-budget sections shrink by whole units — a memory is
either fully present or absent, never elided mid-text — following a
deterministic drop order, so identical inputs always produce identical
prompts.
"""

from __future__ import annotations

import calendar
import math
import re
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Protocol, Sequence, runtime_checkable

from .memory import AffectiveState, EpisodicMemory, MemoryDataset
from .retrieval import ConversationExchange, RetrievalBundle

SECTION_NAMES = ("static", "memories", "metadata", "history")


class BudgetConfigError(ValueError):
    """Static context or budget configuration cannot satisfy the caps."""


@runtime_checkable
class TokenCounter(Protocol):
    """count('') is 0 and counting is monotone under concatenation."""

    identifier: str

    def count(self, text: str) -> int: ...


class CharRatioTokenCounter:
    """Default tokenizer-free counter: ceil(characters / ratio).

    The budgets are tokenizer-relative; an exact model tokenizer can be
    plugged in behind the same contract when one is available.
    """

    def __init__(self, chars_per_token: int = 4):
        if chars_per_token < 1:
            raise ValueError("chars_per_token must be >= 1")
        self.ratio = chars_per_token
        self.identifier = f"char-ratio-{chars_per_token}"

    def count(self, text: str) -> int:
        return math.ceil(len(text) / self.ratio)


DEFAULT_COUNTER = CharRatioTokenCounter()


def truncate_to_tokens(text: str, limit: int, counter: TokenCounter) -> str:
    """Longest prefix of ``text`` that counts within ``limit``."""
    if counter.count(text) <= limit:
        return text
    lo, hi = 0, len(text)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if counter.count(text[:mid]) <= limit:
            lo = mid
        else:
            hi = mid - 1
    return text[:lo]


@dataclass(frozen=True)
class TokenBudget:
    static_context: int = 300
    retrieved_memories: int = 600
    metadata: int = 100
    history: int = 500
    response_reserve: int = 500
    total: int = 2000

    def __post_init__(self) -> None:
        caps = (self.static_context, self.retrieved_memories, self.metadata,
                self.history, self.response_reserve)
        if any(c <= 0 for c in caps):
            raise BudgetConfigError(f"every budget line must be positive: {caps}")
        if sum(caps) != self.total:
            raise BudgetConfigError(
                f"section caps {caps} sum to {sum(caps)}, expected total {self.total}"
            )

    @property
    def input_total(self) -> int:
        return self.total - self.response_reserve

    def cap_for(self, section: str) -> int:
        return {
            "static": self.static_context,
            "memories": self.retrieved_memories,
            "metadata": self.metadata,
            "history": self.history,
        }[section]


@dataclass(frozen=True)
class StaticContext:
    """Persona text: personality traits, role-play instructions, period."""
    persona_text: str

    @classmethod
    def from_file(cls, path: str | Path) -> "StaticContext":
        return cls(Path(path).read_text(encoding="utf-8").strip())


class PromptTemplate:
    """Section frames parsed from a text file with the four placeholders
    ``{static} {memories} {metadata} {history}``, in that order.

    The literal text preceding each placeholder (its heading) is charged
    to that placeholder's section, and an empty section drops its heading
    with it, so the rendered prompt is exactly the concatenation of the
    non-empty section blocks.
    """

    _PLACEHOLDER = re.compile(r"\{(static|memories|metadata|history)\}")

    def __init__(self, text: str):
        frames: dict[str, str] = {}
        names: list[str] = []
        pos = 0
        for match in self._PLACEHOLDER.finditer(text):
            frames[match.group(1)] = text[pos:match.start()]
            names.append(match.group(1))
            pos = match.end()
        if tuple(names) != SECTION_NAMES:
            raise BudgetConfigError(
                f"template must contain placeholders {SECTION_NAMES} exactly once, "
                f"in order; found {tuple(names)}"
            )
        self.trailing = text[pos:]
        self.frames = frames

    @classmethod
    def default(cls) -> "PromptTemplate":
        text = (resources.files("epmem") / "data/templates/prompt_template.txt").read_text("utf-8")
        return cls(text)

    @classmethod
    def from_file(cls, path: str | Path) -> "PromptTemplate":
        return cls(Path(path).read_text(encoding="utf-8"))

    def block(self, section: str, content: str) -> str:
        if not content:
            return ""
        tail = self.trailing if section == "history" else ""
        return self.frames[section] + content + tail


@dataclass(frozen=True)
class AssembledPrompt:
    sections: tuple[tuple[str, str], ...]  # (name, block) in render order
    rendered: str
    per_section_tokens: dict[str, int]
    assembly_duration_ms: float

    @property
    def input_tokens(self) -> int:
        return sum(self.per_section_tokens.values())


def _bucket(value: float, low: str, mid: str, high: str) -> str:
    if value < -0.33:
        return low
    if value > 0.33:
        return high
    return mid


def affect_labels(affect: AffectiveState) -> tuple[str, str]:
    """Bucket continuous affect for textual rendering: below -0.33, within
    [-0.33, 0.33] inclusive, above 0.33 on each axis."""
    return (_bucket(affect.valence, "negative", "neutral", "positive"),
            _bucket(affect.arousal, "calm", "moderate", "energized"))


def _human_date(d) -> str:
    return f"{d.day} {calendar.month_name[d.month]} {d.year}"


def _memory_piece(m: EpisodicMemory) -> str:
    where = f", near {m.latitude:.3f}, {m.longitude:.3f}" if m.has_coordinates else ""
    return f"[{_human_date(m.timestamp)}{where}]\n{m.voiceover}"


def _conversational_piece(exchange: ConversationExchange) -> str:
    return f"[Earlier in this conversation, turn {exchange.turn}]\n{exchange.combined}"


def _metadata_line(m: EpisodicMemory, characters: Sequence[str]) -> str:
    vlabel, alabel = affect_labels(m.affect)
    names = ", ".join(characters) if characters else "none recorded"
    return (f"- {m.uid} [{m.timestamp.isoformat()}] {vlabel}, {alabel}; "
            f"relevance {m.relevance}/10; characters: {names}")


def _render_metadata(memories: Sequence[EpisodicMemory], fits) -> str:
    """Metadata block content; trims character lists (last list first, last
    name first) and as a terminal guarantee drops trailing lines whole.
    ``fits(content)`` decides whether a candidate rendering is within cap."""
    char_lists = [list(m.characters) for m in memories]
    kept = list(memories)
    while kept:
        content = "\n".join(_metadata_line(m, chars)
                            for m, chars in zip(kept, char_lists))
        if fits(content):
            return content
        for i in range(len(kept) - 1, -1, -1):
            if char_lists[i]:
                char_lists[i].pop()
                break
        else:
            kept.pop()
            char_lists.pop()
    return ""


def format_metadata(bundle: RetrievalBundle, ds: MemoryDataset,
                    counter: TokenCounter = DEFAULT_COUNTER,
                    cap: int = TokenBudget().metadata) -> str:
    """Compact affect/characters/relevance block for the bundle's long-term
    memories, fitted to the metadata cap."""
    memories = [ds.get(uid) for uid in bundle.retrieved_uids_ordered]
    return _render_metadata(memories, lambda content: counter.count(content) <= cap)


def build_prompt(static: StaticContext, bundle: RetrievalBundle, ds: MemoryDataset,
                 history: Sequence[ConversationExchange], budget: TokenBudget,
                 counter: TokenCounter = DEFAULT_COUNTER,
                 template: Optional[PromptTemplate] = None) -> AssembledPrompt:
    """Assemble the budget-safe prompt for one turn.

    Drop order when over budget: lowest-scoring direct memory first, then
    the associated memory, then the oldest history turns, then metadata
    character names.  The static context is never trimmed — if it exceeds
    its cap that is a configuration error.  The conversational memory is
    only dropped if it alone cannot fit its section, which bounded inputs
    never trigger.
    """
    started = time.perf_counter()
    template = template or PromptTemplate.default()

    static_block = template.block("static", static.persona_text)
    if counter.count(static_block) > budget.static_context:
        raise BudgetConfigError(
            f"static context counts {counter.count(static_block)} tokens, "
            f"cap is {budget.static_context}; adjust the persona, not the budget"
        )

    conv = bundle.conversational
    associated = bundle.associated
    direct = list(bundle.direct)  # descending score; lowest last

    def memories_block() -> str:
        pieces: list[str] = []
        if conv is not None:
            pieces.append(_conversational_piece(conv[0]))
        if associated is not None:
            pieces.append(_memory_piece(ds.get(associated[0])))
        pieces.extend(_memory_piece(ds.get(uid)) for uid, _ in direct)
        return template.block("memories", "\n\n".join(pieces))

    block = memories_block()
    while counter.count(block) > budget.retrieved_memories:
        if direct:
            direct.pop()
        elif associated is not None:
            associated = None
        elif conv is not None:
            conv = None
        else:
            break
        block = memories_block()
    mem_block = block

    surviving = [ds.get(uid) for uid, _ in ([associated] if associated else []) + direct]
    meta_content = _render_metadata(
        surviving,
        lambda content: counter.count(template.block("metadata", content)) <= budget.metadata,
    )
    meta_block = template.block("metadata", meta_content)

    turns = list(history)
    while True:
        hist_block = template.block("history", "\n\n".join(ex.combined for ex in turns))
        if counter.count(hist_block) <= budget.history or not turns:
            break
        turns.pop(0)  # oldest first

    sections = (("static", static_block), ("memories", mem_block),
                ("metadata", meta_block), ("history", hist_block))
    rendered = "".join(text for _, text in sections)
    per_section = {name: counter.count(text) for name, text in sections}
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    return AssembledPrompt(sections=sections, rendered=rendered,
                           per_section_tokens=per_section,
                           assembly_duration_ms=elapsed_ms)


def count_tokens(text: str, counter: TokenCounter = DEFAULT_COUNTER) -> int:
    return counter.count(text)
