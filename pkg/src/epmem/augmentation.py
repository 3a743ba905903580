"""Offline pipeline turning source corpora into episodic memory records.

Four provider-driven stages per chunk — perspective transformation into
screenplay form, structured information extraction, affect enrichment,
augmented-context generation — followed by geocoding and a QA pass over
the assembled dataset.  A chunk that fails any stage is quarantined with
the raw provider output attached; the pipeline never drops work silently
(chunks in = records out + quarantined).
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, replace
from datetime import date
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .geocoding import Geocoder, geocode
from .memory import (
    AffectiveState, EpisodicMemory, LifespanBounds, MemoryDataset,
    TimestampParseError, Violation, normalize_timestamp, validate_memory,
)
from .providers import TextGenProvider

logger = logging.getLogger(__name__)

DEFAULT_CHUNK_SIZE = 3000
STAGE_MAX_TOKENS = 1200
GEOCODE_REFERENCE_RATE = 0.05  # share of memories expected to resist geocoding


class StageParseError(RuntimeError):
    """Provider output for one stage could not be parsed; carries the raw
    output so the chunk can be quarantined for audit."""

    def __init__(self, message: str, raw_output: str):
        self.raw_output = raw_output
        super().__init__(message)


class CorrectionsError(ValueError):
    pass


@dataclass(frozen=True)
class SourceChunk:
    chunk_id: str
    text: str
    source: str
    sequence: int


@dataclass(frozen=True)
class ScreenplayScene:
    narrator_lines: tuple[str, ...]
    background: str
    voiceover_lines: tuple[str, ...]
    chunk_id: str

    def render(self, figure_name: str) -> str:
        parts = []
        for line in self.narrator_lines:
            parts.append(f"NARRATOR (V.O.): {line}")
        if self.background:
            parts.append(f"BACKGROUND: {self.background}")
        for line in self.voiceover_lines:
            parts.append(f"{figure_name.upper()} (V.O.): {line}")
        return "\n".join(parts)


@dataclass(frozen=True)
class ExtractedRecord:
    location_raw: str
    timestamp_raw: str
    emotions: tuple[str, ...]
    characters: tuple[str, ...]
    context: str
    relevance: int
    comments: str


@dataclass(frozen=True)
class QuarantineEntry:
    chunk_id: str
    stage: str  # perspective | extraction | normalization
    reason: str
    raw_output: str


class EmotionLexicon:
    """Versioned emotion word → (valence, arousal) table."""

    def __init__(self, entries: dict[str, tuple[float, float]], version: str):
        for word, (v, a) in entries.items():
            if not (-1.0 <= v <= 1.0 and -1.0 <= a <= 1.0):
                raise ValueError(f"lexicon entry {word!r} outside [-1, 1]: {(v, a)}")
        self.entries = {w.casefold(): (float(v), float(a)) for w, (v, a) in entries.items()}
        self.version = version

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, word: str) -> bool:
        return word.casefold() in self.entries

    @classmethod
    def load(cls, path: Optional[str | Path] = None) -> "EmotionLexicon":
        if path is None:
            text = (resources.files("epmem") / "data/emotion_lexicon.json").read_text("utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        raw = json.loads(text)
        return cls({k: (v[0], v[1]) for k, v in raw["entries"].items()}, raw["version"])


def _load_stage_template(name: str, figure_name: str) -> str:
    text = (resources.files("epmem") / f"data/templates/{name}.txt").read_text("utf-8")
    return text.format(figure_name=figure_name, figure_upper=figure_name.upper())


def split_paragraphs(text: str) -> list[str]:
    return [p.strip() for p in re.split(r"\n\s*\n", text) if p.strip()]


def segment_source(text: str, source: str,
                   target_size: int = DEFAULT_CHUNK_SIZE) -> list[SourceChunk]:
    """Split a corpus into chunks at paragraph boundaries only.

    Each chunk is the smallest run of consecutive paragraphs whose joined
    length reaches ``target_size``; the trailing remainder becomes the
    final chunk.  Rejoining chunk texts reproduces the input up to
    paragraph-separator whitespace.
    """
    if not text.strip():
        raise ValueError("source text is empty")
    paragraphs = split_paragraphs(text)
    chunks: list[SourceChunk] = []
    run: list[str] = []

    def close_run() -> None:
        seq = len(chunks) + 1
        chunks.append(SourceChunk(
            chunk_id=f"{source}-{seq:04d}",
            text="\n\n".join(run),
            source=source,
            sequence=seq,
        ))
        run.clear()

    for paragraph in paragraphs:
        run.append(paragraph)
        if len("\n\n".join(run)) >= target_size:
            close_run()
    if run:
        close_run()
    return chunks


_MARKER_RE = re.compile(
    r"^(?P<marker>NARRATOR \(V\.O\.\)|BACKGROUND|(?P<figure>[A-ZÀ-Þ'. -]+) \(V\.O\.\)):\s*",
    re.MULTILINE,
)


def parse_screenplay(raw: str, figure_name: str, chunk_id: str) -> ScreenplayScene:
    """Split provider output on its screenplay markers.

    Any voiceover marker naming the figure (matched loosely on the
    surname) counts; a scene without first-person narration is invalid.
    """
    surname = figure_name.split()[-1].upper()
    narrator: list[str] = []
    background: list[str] = []
    voiceover: list[str] = []
    matches = list(_MARKER_RE.finditer(raw))
    if not matches:
        raise StageParseError("no screenplay markers in provider output", raw)
    for i, match in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(raw)
        body = raw[match.end():end].strip()
        if not body:
            continue
        marker = match.group("marker")
        if marker.startswith("NARRATOR"):
            narrator.append(body)
        elif marker == "BACKGROUND":
            background.append(body)
        elif match.group("figure") and surname in match.group("figure"):
            voiceover.append(body)
    if not voiceover:
        raise StageParseError("scene has no first-person voiceover", raw)
    return ScreenplayScene(
        narrator_lines=tuple(narrator),
        background=" ".join(background),
        voiceover_lines=tuple(voiceover),
        chunk_id=chunk_id,
    )


def transform_perspective(chunk: SourceChunk, provider: TextGenProvider,
                          figure_name: str) -> ScreenplayScene:
    """Stage 1: third-person (or fragmentary first-person) text becomes a
    screenplay scene with a first-person voiceover."""
    system = _load_stage_template("screenwriter", figure_name)
    raw = provider.complete(system, chunk.text, STAGE_MAX_TOKENS)
    return parse_screenplay(raw, figure_name, chunk.chunk_id)


_FIELD_RE = re.compile(r"^(Location|Timestamp|Emotions|Characters|Context|Relevance|Comments):\s*(.*)$")
_REQUIRED_EXTRACTION_FIELDS = ("Timestamp", "Emotions", "Context", "Relevance")


def _split_list(value: str) -> tuple[str, ...]:
    if value.strip().casefold() in ("", "none", "n/a"):
        return ()
    return tuple(part.strip() for part in value.split(",") if part.strip())


def parse_extraction(raw: str) -> ExtractedRecord:
    fields: dict[str, str] = {}
    for line in raw.splitlines():
        match = _FIELD_RE.match(line.strip())
        if match:
            fields[match.group(1)] = match.group(2).strip()
    missing = [f for f in _REQUIRED_EXTRACTION_FIELDS if f not in fields]
    if missing:
        raise StageParseError(f"extraction reply missing required fields {missing}", raw)

    relevance_text = fields["Relevance"]
    match = re.search(r"-?\d+", relevance_text)
    if not match:
        raise StageParseError(f"unparseable relevance {relevance_text!r}", raw)
    relevance = int(match.group())
    if not 1 <= relevance <= 10:
        clamped = min(10, max(1, relevance))
        logger.warning("relevance %d outside [1, 10]; clamped to %d", relevance, clamped)
        relevance = clamped

    emotions = tuple(
        word.casefold() for word in _split_list(fields["Emotions"])
        if " " not in word.strip()
    )
    location = fields.get("Location", "")
    if location.strip().casefold() in ("none", "n/a", "unknown"):
        location = ""
    return ExtractedRecord(
        location_raw=location,
        timestamp_raw=fields["Timestamp"],
        emotions=emotions,
        characters=_split_list(fields.get("Characters", "")),
        context=fields["Context"],
        relevance=relevance,
        comments=fields.get("Comments", ""),
    )


def extract_information(scene: ScreenplayScene, provider: TextGenProvider,
                        figure_name: str) -> ExtractedRecord:
    """Stage 2: a biographer-expert role pulls structured fields out of
    the scene, one field per reply line."""
    system = _load_stage_template("biographer", figure_name)
    raw = provider.complete(system, scene.render(figure_name), STAGE_MAX_TOKENS)
    return parse_extraction(raw)


def enrich_affect(emotions: Sequence[str], lexicon: EmotionLexicon) -> AffectiveState:
    """Stage 3: average the lexicon's valence/arousal over the unique
    emotion labels.  Unknown labels are skipped with a warning; an empty
    effective set defaults to neutral (0, 0)."""
    seen: list[str] = []
    for label in emotions:
        folded = label.casefold()
        if folded not in seen:
            seen.append(folded)
    values: list[tuple[float, float]] = []
    for label in seen:
        entry = lexicon.entries.get(label)
        if entry is None:
            logger.warning("emotion label %r not in lexicon v%s; skipped", label, lexicon.version)
            continue
        values.append(entry)
    if not values:
        logger.warning("no usable emotion labels in %r; defaulting to neutral", list(emotions))
        return AffectiveState(0.0, 0.0)
    valence = sum(v for v, _ in values) / len(values)
    arousal = sum(a for _, a in values) / len(values)
    return AffectiveState(valence, arousal)


def _human_date(d: date) -> str:
    import calendar
    return f"{d.day} {calendar.month_name[d.month]} {d.year}"


def generate_augmented_context(record: ExtractedRecord, when: date) -> str:
    """Stage 4: the condensed retrieval summary.

    Template: context sentence, date, location (omitted when absent),
    then the character list ("none" when empty).
    """
    context = record.context.strip().rstrip(".")
    if not context:
        raise ValueError("context sentence is empty")
    parts = [context, _human_date(when)]
    if record.location_raw.strip():
        parts.append(record.location_raw.strip())
    characters = ", ".join(record.characters) if record.characters else "none"
    return ". ".join(parts) + f". Characters: {characters}."


@dataclass(frozen=True)
class QAReport:
    total: int
    lifespan_violations: tuple[Violation, ...]
    range_violations: tuple[Violation, ...]
    geocode_failures: int
    corrections_applied: int

    @property
    def violation_count(self) -> int:
        return len(self.lifespan_violations) + len(self.range_violations)

    @property
    def violation_rate(self) -> float:
        return self.violation_count / self.total if self.total else 0.0

    @property
    def geocode_failure_rate(self) -> float:
        return self.geocode_failures / self.total if self.total else 0.0

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "lifespan_violations": [
                {"uid": v.uid, "field": v.field_name, "value": v.value, "rule": v.rule}
                for v in self.lifespan_violations
            ],
            "range_violations": [
                {"uid": v.uid, "field": v.field_name, "value": str(v.value), "rule": v.rule}
                for v in self.range_violations
            ],
            "violation_count": self.violation_count,
            "violation_rate": self.violation_rate,
            "geocode_failures": self.geocode_failures,
            "geocode_failure_rate": self.geocode_failure_rate,
            "geocode_reference_rate": GEOCODE_REFERENCE_RATE,
            "corrections_applied": self.corrections_applied,
        }


_CORRECTABLE_FIELDS = {
    "timestamp", "valence", "arousal", "relevance", "characters",
    "latitude", "longitude", "context", "comment", "augmented_context",
}


def _apply_correction(memory: EpisodicMemory, fields: dict) -> EpisodicMemory:
    unknown = set(fields) - _CORRECTABLE_FIELDS
    if unknown:
        raise CorrectionsError(f"uncorrectable fields for {memory.uid!r}: {sorted(unknown)}")
    kwargs: dict = {}
    affect = memory.affect
    if "valence" in fields:
        affect = AffectiveState(float(fields["valence"]), affect.arousal)
    if "arousal" in fields:
        affect = AffectiveState(affect.valence, float(fields["arousal"]))
    if affect is not memory.affect:
        kwargs["affect"] = affect
    if "timestamp" in fields:
        kwargs["timestamp"] = normalize_timestamp(str(fields["timestamp"]))
        kwargs["timestamp_raw"] = str(fields["timestamp"])
    if "relevance" in fields:
        kwargs["relevance"] = int(fields["relevance"])
    if "characters" in fields:
        kwargs["characters"] = tuple(fields["characters"])
    for name in ("latitude", "longitude", "context", "comment", "augmented_context"):
        if name in fields:
            kwargs[name] = fields[name]
    return replace(memory, **kwargs)


def qa_pass(ds: MemoryDataset, bounds: LifespanBounds,
            corrections: Optional[dict[str, dict]] = None) -> tuple[QAReport, MemoryDataset]:
    """Apply uid-keyed corrections, then report what still violates.

    Lifespan violations are flagged, never auto-clamped; geocode failures
    are counted against the expected-resistance reference rate.  The
    corrected dataset is returned alongside the report.
    """
    corrections = corrections or {}
    unknown = [uid for uid in corrections if uid not in ds]
    if unknown:
        raise CorrectionsError(f"corrections reference unknown uids: {sorted(unknown)}")

    memories = [
        _apply_correction(m, corrections[m.uid]) if m.uid in corrections else m
        for m in ds.memories
    ]
    corrected = MemoryDataset(memories, bounds)

    lifespan: list[Violation] = []
    ranges: list[Violation] = []
    geocode_failures = 0
    for m in corrected.memories:
        for v in validate_memory(m, bounds):
            if v.field_name == "timestamp":
                lifespan.append(v)
            else:
                ranges.append(v)
        if not m.has_coordinates:
            geocode_failures += 1
    report = QAReport(
        total=len(corrected),
        lifespan_violations=tuple(lifespan),
        range_violations=tuple(ranges),
        geocode_failures=geocode_failures,
        corrections_applied=len(corrections),
    )
    return report, corrected


@dataclass(frozen=True)
class PipelineResult:
    dataset: MemoryDataset
    report: QAReport
    quarantine: tuple[QuarantineEntry, ...]
    chunk_count: int

    def check_conservation(self) -> None:
        produced = len(self.dataset) + len(self.quarantine)
        if produced != self.chunk_count:
            raise RuntimeError(
                f"chunk conservation broken: {self.chunk_count} in, "
                f"{len(self.dataset)} records + {len(self.quarantine)} quarantined"
            )


def run_pipeline(text: str, source: str, figure_name: str, bounds: LifespanBounds,
                 provider: TextGenProvider, geocoder: Optional[Geocoder] = None,
                 lexicon: Optional[EmotionLexicon] = None,
                 target_size: int = DEFAULT_CHUNK_SIZE,
                 corrections: Optional[dict[str, dict]] = None) -> PipelineResult:
    """Run every stage over one source text and assemble the dataset.

    One memory per chunk, uid = chunk id.  Stage failures quarantine the
    chunk and the run continues; the final QA pass reports what remains.
    """
    lexicon = lexicon or EmotionLexicon.load()
    chunks = segment_source(text, source, target_size)
    memories: list[EpisodicMemory] = []
    quarantine: list[QuarantineEntry] = []

    for chunk in chunks:
        try:
            scene = transform_perspective(chunk, provider, figure_name)
        except StageParseError as exc:
            quarantine.append(QuarantineEntry(chunk.chunk_id, "perspective",
                                              str(exc), exc.raw_output))
            continue
        try:
            record = extract_information(scene, provider, figure_name)
        except StageParseError as exc:
            quarantine.append(QuarantineEntry(chunk.chunk_id, "extraction",
                                              str(exc), exc.raw_output))
            continue
        try:
            when = normalize_timestamp(record.timestamp_raw)
        except TimestampParseError as exc:
            quarantine.append(QuarantineEntry(chunk.chunk_id, "normalization",
                                              str(exc), record.timestamp_raw))
            continue
        affect = enrich_affect(record.emotions, lexicon)
        coords = geocode(record.location_raw, geocoder) if geocoder else None
        memories.append(EpisodicMemory(
            uid=chunk.chunk_id,
            background=scene.background,
            narrator="\n".join(scene.narrator_lines),
            voiceover="\n".join(scene.voiceover_lines),
            context=record.context,
            comment=record.comments,
            characters=record.characters,
            affect=affect,
            timestamp=when,
            timestamp_raw=record.timestamp_raw,
            latitude=coords[0] if coords else None,
            longitude=coords[1] if coords else None,
            relevance=record.relevance,
            augmented_context=generate_augmented_context(record, when),
            source=source,
        ))

    dataset = MemoryDataset(memories, bounds)
    report, dataset = qa_pass(dataset, bounds, corrections)
    result = PipelineResult(dataset=dataset, report=report,
                            quarantine=tuple(quarantine), chunk_count=len(chunks))
    result.check_conservation()
    return result


def write_quarantine(entries: Iterable[QuarantineEntry], directory: str | Path) -> None:
    """One JSON file per failed chunk, raw provider output included."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for entry in entries:
        payload = {
            "chunk_id": entry.chunk_id,
            "stage": entry.stage,
            "reason": entry.reason,
            "raw_output": entry.raw_output,
        }
        (directory / f"{entry.chunk_id}.json").write_text(
            json.dumps(payload, ensure_ascii=False, indent=2), encoding="utf-8"
        )


class OfflineStageProvider:
    """Deterministic rule-based stand-in for the augmentation LLM roles.

    Recognizes which stage is being requested from the system prompt and
    derives a plausible reply from the input text alone: screenplay scenes
    get a naive first-person rewrite; extraction replies are built from
    surface patterns (years, "in <Place>", lexicon words, known names).
    Useful for demos, air-gapped runs, and for generating replayable
    recordings in tests.
    """

    model_id = "offline-stages"

    _YEAR_RE = re.compile(r"\b(1[5-9]\d\d|20\d\d)\b")
    _MONTH_YEAR_RE = re.compile(
        r"\b(January|February|March|April|May|June|July|August|September|October|"
        r"November|December)\s+(1[5-9]\d\d|20\d\d)\b")
    _PLACE_RE = re.compile(r"\b(?:in|at|near|to)\s+([A-ZÀ-Þ][a-zà-ÿ]+(?:\s[A-ZÀ-Þ][a-zà-ÿ]+)?)")
    _NAME_RE = re.compile(r"\b([A-ZÀ-Þ][a-zà-ÿ]+\s[A-ZÀ-Þ][a-zà-ÿ]+)\b")
    _SENTINEL = "[[UNFILMABLE]]"

    _MONTHS = {
        "January", "February", "March", "April", "May", "June", "July",
        "August", "September", "October", "November", "December",
    }
    _PLACE_STOPWORDS = _MONTHS | {"The", "Father", "Mother", "God", "Heaven"}
    _NAME_STOPWORDS = {
        "A", "An", "And", "After", "At", "Before", "But", "By", "For", "From",
        "Dear", "Her", "His", "In", "It", "Its", "Madame", "Monsieur", "My",
        "Near", "No", "On", "Over", "She", "He", "Tell", "The", "Their",
        "To", "Under", "When", "With", "Your",
    } | _MONTHS

    def __init__(self, figure_name: str, lexicon: Optional[EmotionLexicon] = None):
        self.figure_name = figure_name
        self.lexicon = lexicon or EmotionLexicon.load()

    def complete(self, system: str, user: str, max_tokens: int) -> str:
        if "screenwriter" in system:
            return self._screenplay(user)
        if "biographer" in system:
            return self._extraction(user)
        raise ValueError("OfflineStageProvider only serves the augmentation stage roles")

    def _sentences(self, text: str) -> list[str]:
        flat = " ".join(text.split())
        return [s.strip() for s in re.split(r"(?<=[.!?])\s+", flat) if s.strip()]

    def _first_person(self, text: str) -> str:
        """Swap the figure's name for first person; references to other
        people sharing the surname are left intact."""
        first_name = self.figure_name.split()[0]
        surname = self.figure_name.split()[-1]
        pattern = re.compile(
            rf"(?:([A-ZÀ-Þ][a-zà-ÿ]+)\s+)?{re.escape(surname)}(’s|'s)?\b"
        )

        def repl(match: re.Match) -> str:
            other_first = match.group(1)
            if other_first and other_first != first_name:
                return match.group(0)
            return "my" if match.group(2) else "I"

        return pattern.sub(repl, text)

    def _screenplay(self, text: str) -> str:
        if self._SENTINEL in text:
            # Simulates a provider losing the plot: no markers at all.
            return "I cannot render this passage as a scene."
        sentences = self._sentences(text)
        first = sentences[0] if sentences else text.strip()
        rest = sentences[1:] if len(sentences) > 1 else sentences
        voice = self._first_person(" ".join(rest))
        return (
            f"NARRATOR (V.O.): {first}\n"
            f"BACKGROUND: The scene opens quietly; the period detail stays close to the source.\n"
            f"{self.figure_name.upper()} (V.O.): I remember it as if it were yesterday. {voice}"
        )

    def _extraction(self, scene_text: str) -> str:
        month_year = self._MONTH_YEAR_RE.search(scene_text)
        if month_year:
            timestamp = f"{month_year.group(1)} {month_year.group(2)}"
        else:
            year = self._YEAR_RE.search(scene_text)
            timestamp = year.group(1) if year else "unknown"

        place = ""
        for match in self._PLACE_RE.finditer(scene_text):
            candidate = match.group(1)
            if candidate.split()[0] not in self._PLACE_STOPWORDS:
                place = candidate
                break

        words = {w.casefold().strip(".,;:!?") for w in scene_text.split()}
        emotions = sorted(w for w in words if w in self.lexicon.entries)[:4]

        names = []
        for match in self._NAME_RE.finditer(scene_text):
            name = match.group(1)
            first, second = name.split()
            if name == self.figure_name or first in self._NAME_STOPWORDS \
                    or second in self._MONTHS:
                continue
            if name not in names:
                names.append(name)

        sentences = self._sentences(scene_text)
        context = ""
        for s in sentences:
            if s.startswith("NARRATOR (V.O.):"):
                context = s.removeprefix("NARRATOR (V.O.):").strip()
                break
        if not context:
            context = sentences[0] if sentences else "An undocumented episode"
        relevance = int(hashlib.sha256(scene_text.encode("utf-8")).hexdigest()[:8], 16) % 10 + 1

        return (
            f"Location: {place or 'none'}\n"
            f"Timestamp: {timestamp}\n"
            f"Emotions: {', '.join(emotions) or 'none'}\n"
            f"Characters: {', '.join(names) or 'none'}\n"
            f"Context: {context}\n"
            f"Relevance: {relevance}\n"
            f"Comments: The episode reads as a fixture of its period and bears on later work."
        )
