"""Episodic memory records, JSONL dataset persistence, validation, statistics.

A dataset file is UTF-8 JSONL: one header object followed by one memory
object per line.  The header carries the figure's lifespan bounds and a
schema version; every other line is a record with the fields documented
in the README (field-by-field schema).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import Iterable, Optional

SCHEMA_NAME = "epmem.dataset"
SCHEMA_VERSION = 1

SOURCES = ("biography", "letters")

# Record fields that must be present on every JSONL line.
REQUIRED_FIELDS = (
    "uid", "background", "narrator", "voiceover", "context", "comment",
    "characters", "valence", "arousal", "timestamp", "relevance",
    "augmented_context", "source",
)


class DatasetError(ValueError):
    """Malformed dataset file: carries the offending line and field."""

    def __init__(self, message: str, *, line: Optional[int] = None,
                 field_name: Optional[str] = None):
        self.line = line
        self.field_name = field_name
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class TimestampParseError(ValueError):
    """Raised when a raw date string matches none of the known formats."""

    def __init__(self, raw: str):
        self.raw = raw
        super().__init__(f"unparseable date: {raw!r}")


@dataclass(frozen=True)
class AffectiveState:
    """Dimensional emotion: valence (pleasantness) and arousal (activation),
    both in [-1, 1]."""
    valence: float
    arousal: float


@dataclass(frozen=True)
class LifespanBounds:
    figure_name: str
    birth_date: date
    death_date: date

    def __post_init__(self) -> None:
        if self.birth_date >= self.death_date:
            raise ValueError(
                f"birth_date {self.birth_date} must precede death_date {self.death_date}"
            )

    def contains(self, d: date) -> bool:
        return self.birth_date <= d <= self.death_date


@dataclass(frozen=True)
class EpisodicMemory:
    """One first-person memory record.

    ``voiceover`` holds the experiential narrative rendered into prompts;
    ``augmented_context`` is the condensed summary embedded for retrieval.
    ``background`` and ``narrator`` are retained for the pipeline and UI
    but never enter prompts.
    """
    uid: str
    background: str
    narrator: str
    voiceover: str
    context: str
    comment: str
    characters: tuple[str, ...]
    affect: AffectiveState
    timestamp: date
    relevance: int
    augmented_context: str
    source: str
    latitude: Optional[float] = None
    longitude: Optional[float] = None
    timestamp_raw: Optional[str] = None  # original string retained for audit

    @property
    def has_coordinates(self) -> bool:
        return self.latitude is not None and self.longitude is not None


@dataclass(frozen=True)
class Violation:
    """One invariant breach on a record; data, not an exception."""
    uid: str
    field_name: str
    value: object
    rule: str

    def __str__(self) -> str:
        return f"{self.uid}: {self.field_name}={self.value!r} violates {self.rule}"


@dataclass(frozen=True)
class DatasetStats:
    count: int
    count_by_source: dict[str, int]
    mean_valence: Optional[float]
    sd_valence: Optional[float]
    mean_arousal: Optional[float]
    sd_arousal: Optional[float]
    unique_characters: int
    unique_locations: int
    year_range: Optional[tuple[int, int]]

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "count_by_source": dict(self.count_by_source),
            "mean_valence": self.mean_valence,
            "sd_valence": self.sd_valence,
            "mean_arousal": self.mean_arousal,
            "sd_arousal": self.sd_arousal,
            "unique_characters": self.unique_characters,
            "unique_locations": self.unique_locations,
            "year_range": list(self.year_range) if self.year_range else None,
        }


class MemoryDataset:
    """Immutable-after-load collection of memories plus lifespan bounds.

    Safe for concurrent readers; nothing mutates after construction.
    """

    def __init__(self, memories: Iterable[EpisodicMemory], bounds: LifespanBounds):
        self.memories: tuple[EpisodicMemory, ...] = tuple(memories)
        self.bounds = bounds
        self._by_uid = {m.uid: m for m in self.memories}
        if len(self._by_uid) != len(self.memories):
            seen: set[str] = set()
            for m in self.memories:
                if m.uid in seen:
                    raise DatasetError(f"duplicate uid {m.uid!r}", field_name="uid")
                seen.add(m.uid)
        self._stats: Optional[DatasetStats] = None

    def __len__(self) -> int:
        return len(self.memories)

    def __iter__(self):
        return iter(self.memories)

    def __contains__(self, uid: str) -> bool:
        return uid in self._by_uid

    def get(self, uid: str) -> EpisodicMemory:
        try:
            return self._by_uid[uid]
        except KeyError:
            raise KeyError(f"unknown memory uid: {uid!r}") from None

    @property
    def stats(self) -> DatasetStats:
        if self._stats is None:
            self._stats = dataset_stats(self)
        return self._stats


def normalize_character(name: str) -> str:
    """Canonical form used for counting/tallying: case-folded, trimmed,
    inner whitespace collapsed.  Stored names are left as given."""
    return " ".join(name.split()).casefold()


_MONTH_FORMATS = ("%B %Y", "%b %Y")
_FULL_FORMATS = ("%d/%m/%Y", "%Y-%m-%d", "%d %B %Y", "%d %b %Y", "%B %d, %Y", "%b %d, %Y")


def normalize_timestamp(raw: str) -> date:
    """Parse one of the known date renderings to a calendar date.

    Partial dates resolve to the first day of the stated period: a bare
    month becomes day 1, a bare year becomes January 1.  Idempotent on
    the canonical ISO rendering (``date.isoformat()``).
    """
    text = raw.strip()
    if not text:
        raise TimestampParseError(raw)
    for fmt in _FULL_FORMATS:
        try:
            return datetime.strptime(text, fmt).date()
        except ValueError:
            continue
    for fmt in _MONTH_FORMATS:
        try:
            return datetime.strptime(text, fmt).date().replace(day=1)
        except ValueError:
            continue
    if text.isdigit() and len(text) == 4:
        return date(int(text), 1, 1)
    raise TimestampParseError(raw)


def validate_memory(m: EpisodicMemory, bounds: LifespanBounds) -> list[Violation]:
    """Check every record invariant; returns one Violation per breach.

    An empty list means the record is clean.  Violations are data for QA
    reporting, not failures.
    """
    out: list[Violation] = []
    if not -1.0 <= m.affect.valence <= 1.0:
        out.append(Violation(m.uid, "valence", m.affect.valence, "range [-1, 1]"))
    if not -1.0 <= m.affect.arousal <= 1.0:
        out.append(Violation(m.uid, "arousal", m.affect.arousal, "range [-1, 1]"))
    if not isinstance(m.relevance, int) or not 1 <= m.relevance <= 10:
        out.append(Violation(m.uid, "relevance", m.relevance, "integer range [1, 10]"))
    if not bounds.contains(m.timestamp):
        out.append(Violation(
            m.uid, "timestamp", m.timestamp.isoformat(),
            f"lifespan [{bounds.birth_date.isoformat()}, {bounds.death_date.isoformat()}]",
        ))
    if (m.latitude is None) != (m.longitude is None):
        out.append(Violation(
            m.uid, "latitude/longitude", (m.latitude, m.longitude),
            "coordinates present together or absent together",
        ))
    if m.latitude is not None and not -90.0 <= m.latitude <= 90.0:
        out.append(Violation(m.uid, "latitude", m.latitude, "range [-90, 90]"))
    if m.longitude is not None and not -180.0 <= m.longitude <= 180.0:
        out.append(Violation(m.uid, "longitude", m.longitude, "range [-180, 180]"))
    if not m.augmented_context.strip():
        out.append(Violation(m.uid, "augmented_context", m.augmented_context, "non-empty"))
    if m.source not in SOURCES:
        out.append(Violation(m.uid, "source", m.source, f"one of {SOURCES}"))
    return out


def memory_to_dict(m: EpisodicMemory) -> dict:
    """Canonical JSON-serializable form; field order matches the schema doc."""
    return {
        "uid": m.uid,
        "background": m.background,
        "narrator": m.narrator,
        "voiceover": m.voiceover,
        "context": m.context,
        "comment": m.comment,
        "characters": list(m.characters),
        "valence": m.affect.valence,
        "arousal": m.affect.arousal,
        "timestamp": m.timestamp.isoformat(),
        "timestamp_raw": m.timestamp_raw,
        "latitude": m.latitude,
        "longitude": m.longitude,
        "relevance": m.relevance,
        "augmented_context": m.augmented_context,
        "source": m.source,
    }


def memory_from_dict(data: dict, *, line: Optional[int] = None) -> EpisodicMemory:
    for name in REQUIRED_FIELDS:
        if name not in data:
            raise DatasetError(f"missing required field {name!r}", line=line, field_name=name)
    try:
        timestamp = date.fromisoformat(data["timestamp"])
    except (TypeError, ValueError):
        raise DatasetError(
            f"bad timestamp {data['timestamp']!r} (expected YYYY-MM-DD)",
            line=line, field_name="timestamp",
        ) from None
    characters = data["characters"]
    if not isinstance(characters, list) or not all(isinstance(c, str) for c in characters):
        raise DatasetError("characters must be a list of strings", line=line,
                           field_name="characters")
    relevance = data["relevance"]
    if not isinstance(relevance, int) or isinstance(relevance, bool):
        raise DatasetError(f"relevance must be an integer, got {relevance!r}",
                           line=line, field_name="relevance")
    return EpisodicMemory(
        uid=str(data["uid"]),
        background=data["background"],
        narrator=data["narrator"],
        voiceover=data["voiceover"],
        context=data["context"],
        comment=data["comment"],
        characters=tuple(characters),
        affect=AffectiveState(float(data["valence"]), float(data["arousal"])),
        timestamp=timestamp,
        relevance=relevance,
        augmented_context=data["augmented_context"],
        source=data["source"],
        latitude=data.get("latitude"),
        longitude=data.get("longitude"),
        timestamp_raw=data.get("timestamp_raw"),
    )


def _parse_header(data: dict, line: int) -> LifespanBounds:
    if data.get("schema") != SCHEMA_NAME:
        raise DatasetError(
            f"expected header with schema={SCHEMA_NAME!r}, got {data.get('schema')!r}",
            line=line, field_name="schema",
        )
    if data.get("schema_version") != SCHEMA_VERSION:
        raise DatasetError(
            f"unsupported schema_version {data.get('schema_version')!r}",
            line=line, field_name="schema_version",
        )
    try:
        return LifespanBounds(
            figure_name=data["figure_name"],
            birth_date=date.fromisoformat(data["birth_date"]),
            death_date=date.fromisoformat(data["death_date"]),
        )
    except KeyError as exc:
        raise DatasetError(f"header missing field {exc.args[0]!r}", line=line,
                           field_name=exc.args[0]) from None


def load_dataset(path: str | Path, *, validate: bool = True) -> MemoryDataset:
    """Load a JSONL dataset file; the first line must be the header.

    With ``validate`` (the default) any record failing ``validate_memory``
    aborts the load with the line number and field named.  Pass
    ``validate=False`` only for QA workflows that inspect a dataset whose
    violations have not been corrected yet.
    """
    path = Path(path)
    bounds: Optional[LifespanBounds] = None
    memories: list[EpisodicMemory] = []
    seen_uids: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, text in enumerate(fh, start=1):
            text = text.strip()
            if not text:
                continue
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"invalid JSON: {exc.msg}", line=lineno) from None
            if bounds is None:
                bounds = _parse_header(data, lineno)
                continue
            memory = memory_from_dict(data, line=lineno)
            if memory.uid in seen_uids:
                raise DatasetError(f"duplicate uid {memory.uid!r}", line=lineno,
                                   field_name="uid")
            seen_uids.add(memory.uid)
            if validate:
                violations = validate_memory(memory, bounds)
                if violations:
                    v = violations[0]
                    raise DatasetError(
                        f"invalid record {memory.uid!r}: {v.field_name}={v.value!r} "
                        f"violates {v.rule}",
                        line=lineno, field_name=v.field_name,
                    )
            memories.append(memory)
    if bounds is None:
        raise DatasetError("file has no header line", line=1)
    return MemoryDataset(memories, bounds)


def write_dataset(ds: MemoryDataset, path: str | Path) -> None:
    """Write the canonical JSONL rendering (header first, file order kept)."""
    path = Path(path)
    header = {
        "schema": SCHEMA_NAME,
        "schema_version": SCHEMA_VERSION,
        "figure_name": ds.bounds.figure_name,
        "birth_date": ds.bounds.birth_date.isoformat(),
        "death_date": ds.bounds.death_date.isoformat(),
    }
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, ensure_ascii=False) + "\n")
        for m in ds.memories:
            fh.write(json.dumps(memory_to_dict(m), ensure_ascii=False) + "\n")


def dataset_stats(ds: MemoryDataset) -> DatasetStats:
    """Population statistics over all memories (SDs use N, not N-1).

    Characters are counted after case-fold/whitespace normalization;
    locations are distinct coordinate pairs among geocoded memories.
    """
    n = len(ds.memories)
    count_by_source = {s: 0 for s in SOURCES}
    for m in ds.memories:
        count_by_source[m.source] = count_by_source.get(m.source, 0) + 1
    if n == 0:
        return DatasetStats(0, count_by_source, None, None, None, None, 0, 0, None)

    valences = [m.affect.valence for m in ds.memories]
    arousals = [m.affect.arousal for m in ds.memories]

    def _mean_sd(values: list[float]) -> tuple[float, float]:
        mean = math.fsum(values) / len(values)
        var = math.fsum((v - mean) ** 2 for v in values) / len(values)
        return mean, math.sqrt(var)

    mean_v, sd_v = _mean_sd(valences)
    mean_a, sd_a = _mean_sd(arousals)
    characters = {normalize_character(c) for m in ds.memories for c in m.characters if c.strip()}
    locations = {(m.latitude, m.longitude) for m in ds.memories if m.has_coordinates}
    years = [m.timestamp.year for m in ds.memories]
    return DatasetStats(
        count=n,
        count_by_source=count_by_source,
        mean_valence=mean_v,
        sd_valence=sd_v,
        mean_arousal=mean_a,
        sd_arousal=sd_a,
        unique_characters=len(characters),
        unique_locations=len(locations),
        year_range=(min(years), max(years)),
    )
