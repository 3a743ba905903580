#!/usr/bin/env python3
"""A full dialogue session against the in-process engine.

Each turn costs exactly two embedding calls (query, then the finished
query-response pair) and one generation call; the two retrieval indexes
are searched in parallel. The third query repeats the second exchange
verbatim to force a conversational-memory hit, so the bundle composition
switches from three direct memories to conversational + associated + two
direct. Responses are scanned for third-person perspective drift at the
end — the structural failure mode first-person memories are meant to
prevent.

Run 01_build_dataset.py first, then:  python3 demos/03_dialogue_session.py
"""

from pathlib import Path

from epmem.config import EngineConfig
from epmem.index import EmbeddingCache, build_index
from epmem.memory import load_dataset
from epmem.providers import (
    CountingEmbeddingProvider, CountingTextGenProvider, EchoDialogueProvider,
    HashEmbeddingProvider,
)
from epmem.retrieval import RetrievalConfig
from epmem.service import DialogueEngine, Session, perspective_drift_scan

HERE = Path(__file__).parent
DS_PATH = HERE / "output" / "varenne_memories.jsonl"


def main() -> None:
    config = EngineConfig.load(HERE / "assets" / "demo_config.json")
    ds = load_dataset(DS_PATH)
    embedder = CountingEmbeddingProvider(HashEmbeddingProvider(dimension=256))
    generator = CountingTextGenProvider(EchoDialogueProvider())
    index = build_index(ds, embedder, EmbeddingCache(DS_PATH.with_suffix(".embcache.jsonl")))
    calls_after_build = embedder.calls  # 0 when the cache from demo 02 is warm
    engine = DialogueEngine(ds, index, embedder, generator,
                            static=config.static_context())

    session = Session(session_id="demo", created_at=0.0, config=RetrievalConfig())
    first = engine.chat(session, "Did you ever quarrel with the printers?")
    second = engine.chat(session, "And what did your brother think of it?")
    continuity_query = session.memory.exchanges[-1].combined  # exact repeat → hit
    third = engine.chat(session, continuity_query)

    responses = []
    for label, result in (("turn 1", first), ("turn 2", second), ("turn 3", third)):
        provenance = ", ".join(f"{r.provenance}:{r.uid}" for r in result.retrieved)
        print(f"{label}: {result.response_text[:110]}…")
        print(f"  retrieved → {provenance}")
        print(f"  prompt built in {result.timing.prompt_total_ms:.2f} ms "
              f"(embed {result.timing.embed_ms:.2f}, retrieve "
              f"{result.timing.retrieve_ms:.2f}, assemble {result.timing.assemble_ms:.2f})")
        responses.append(result.response_text)

    turns = len(responses)
    print(f"\nprovider calls over {turns} turns: "
          f"{embedder.calls - calls_after_build} embeddings, "
          f"{generator.calls} generations (budget: {2 * turns} + {turns})")

    count, matches = perspective_drift_scan(responses, config.figure_surname)
    print(f"perspective drift matches in responses: {count}")
    assert count == 0, matches

    print("\nsession path (turn → long-term uids):")
    for turn, uids in session.path:
        print(f"  {turn}: {', '.join(uids)}")


if __name__ == "__main__":
    main()
