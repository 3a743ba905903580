#!/usr/bin/env python3
"""Two-stage retrieval over the demo dataset.

Stage one embeds only the condensed augmented contexts and ranks them by
exact cosine similarity; stage two fetches the full first-person record
for the winners. The embedding cache sidecar means a second run of this
script performs zero embedding calls.

Run 01_build_dataset.py first, then:  python3 demos/02_search_and_retrieve.py
"""

from pathlib import Path

from epmem.index import EmbeddingCache, build_index, fetch_full, top_k
from epmem.memory import load_dataset
from epmem.providers import CountingEmbeddingProvider, HashEmbeddingProvider

HERE = Path(__file__).parent
DS_PATH = HERE / "output" / "varenne_memories.jsonl"

QUERIES = [
    "What happened during the journey to the south?",
    "Tell me about the dispute over the sea lavender plate.",
    "Who supported her when the family pressed her to quit?",
]


def main() -> None:
    ds = load_dataset(DS_PATH)
    provider = CountingEmbeddingProvider(HashEmbeddingProvider(dimension=256))
    cache = EmbeddingCache(DS_PATH.with_suffix(".embcache.jsonl"))

    index = build_index(ds, provider, cache)
    print(f"indexed {len(index)} memories at dimension {index.dimension} "
          f"({provider.calls} embedding calls; rerun → 0, cache is warm)")
    print("note: the hash embedder is a deterministic stand-in, blind to "
          "meaning — rankings below show the machinery, not semantics; plug "
          "a real embedding provider in the config for semantic search\n")

    for query in QUERIES:
        ranked = top_k(index, provider.embed(query), k=3)
        print(f"query: {query}")
        for rank, (uid, score) in enumerate(ranked, start=1):
            memory = fetch_full(uid, ds)  # stage two: the full record
            print(f"  {rank}. [{score:+.3f}] {uid}  ({memory.timestamp}, "
                  f"relevance {memory.relevance}/10)")
            print(f"      context: {memory.augmented_context[:100]}…")
        print()


if __name__ == "__main__":
    main()
