#!/usr/bin/env python3
"""Build an episodic memory dataset from a raw corpus, fully offline.

Walks the whole augmentation pipeline over the synthetic fixture corpus
(a fictional illustrator, so nothing copyrighted ships with the repo):
segmentation → screenplay perspective transform → field extraction →
affect enrichment → geocoding → augmented contexts → QA. One chunk that
cannot be transformed lands in quarantine instead of crashing the run,
and one extracted date falls outside the figure's lifespan, which the
QA pass flags and a corrections file then fixes — the same workflow you
would use after hand-reviewing a real run.

Run:  python3 demos/01_build_dataset.py
"""

import json
from datetime import date
from pathlib import Path

from epmem.augmentation import OfflineStageProvider, run_pipeline, write_quarantine
from epmem.geocoding import FixtureGeocoder
from epmem.memory import LifespanBounds, MemoryDataset, write_dataset

HERE = Path(__file__).parent
FIXTURES = HERE.parent / "tests" / "fixtures"
OUT = HERE / "output"

FIGURE = "Adelie Varenne"
BOUNDS = LifespanBounds(FIGURE, date(1824, 5, 12), date(1887, 11, 3))

# The birth-month chunk normalizes to 1824-05-01, eleven days before the
# figure was born — exactly the kind of extraction slip QA exists to catch.
CORRECTIONS = {"biography-0001": {"timestamp": "1824-05-12"}}


def main() -> None:
    OUT.mkdir(exist_ok=True)
    provider = OfflineStageProvider(FIGURE)  # deterministic, zero network
    geocoder = FixtureGeocoder(FIXTURES / "geocode_fixtures.json")

    merged = []
    quarantined = []
    for name, kind in (("corpus_biography.txt", "biography"),
                       ("corpus_letters.txt", "letters")):
        text = (FIXTURES / name).read_text(encoding="utf-8")
        result = run_pipeline(text, kind, FIGURE, BOUNDS, provider, geocoder,
                              target_size=1200,
                              corrections=CORRECTIONS if kind == "biography" else None)
        print(f"{kind}: {result.chunk_count} chunks → {len(result.dataset)} memories, "
              f"{len(result.quarantine)} quarantined")
        merged.extend(result.dataset.memories)
        quarantined.extend(result.quarantine)

    dataset = MemoryDataset(merged, BOUNDS)
    from epmem.augmentation import qa_pass
    report, dataset = qa_pass(dataset, BOUNDS)

    ds_path = OUT / "varenne_memories.jsonl"
    write_dataset(dataset, ds_path)
    (OUT / "qa_report.json").write_text(
        json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    if quarantined:
        write_quarantine(quarantined, OUT / "quarantine")

    print(f"\ndataset: {ds_path}  ({len(dataset)} memories)")
    print(f"QA violations remaining: {report.violation_count}")
    print(f"geocode failures: {report.geocode_failures} "
          f"({report.geocode_failure_rate:.1%}; ~5% is typical for vague places)")
    print(f"quarantine: {len(quarantined)} chunk(s) under {OUT / 'quarantine'}")
    print("\nsample augmented context (what stage-one retrieval embeds):")
    print(" ", dataset.memories[0].augmented_context)
    print("\nsample voiceover (what stage two hands to the prompt):")
    print(" ", dataset.memories[0].voiceover[:180], "…")


if __name__ == "__main__":
    main()
