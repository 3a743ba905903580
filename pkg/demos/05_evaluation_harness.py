#!/usr/bin/env python3
"""Evaluation harnesses run end to end against an in-process service.

Spins up the dialogue app without a network listener (ASGI transport),
then exercises the three harness families:

  * latency of prompt construction per turn, with warmup discarded;
  * reference-free metrics (faithfulness, answer relevance, context
    relevance) using the deterministic offline metric provider, so the
    ratios are exactly reproducible;
  * position-inverted pairwise judging, showing how a position-biased
    judge is filtered out while a content-sensitive one survives.

Run 01_build_dataset.py first, then:  python3 demos/05_evaluation_harness.py
"""

from pathlib import Path

from fastapi.testclient import TestClient

from epmem.config import EngineConfig
from epmem.evaluation import (
    aggregate_scores, answer_relevance, context_relevance, faithfulness,
    latency_harness, pairwise_judge, split_sentences,
)
from epmem.index import EmbeddingCache, build_index
from epmem.memory import load_dataset
from epmem.providers import (
    EchoDialogueProvider, HashEmbeddingProvider, OfflineMetricProvider,
)
from epmem.retrieval import RetrievalConfig
from epmem.service import SessionRegistry, DialogueEngine, create_app

HERE = Path(__file__).parent
DS_PATH = HERE / "output" / "varenne_memories.jsonl"

QUESTIONS = [
    "What did the journey south change in your work?",
    "Who stood by you when the family objected?",
    "How did the dispute in the journals end?",
]


def main() -> None:
    config = EngineConfig.load(HERE / "assets" / "demo_config.json")
    ds = load_dataset(DS_PATH)
    embedder = HashEmbeddingProvider(dimension=256)
    index = build_index(ds, embedder, EmbeddingCache(DS_PATH.with_suffix(".embcache.jsonl")))
    engine = DialogueEngine(ds, index, embedder, EchoDialogueProvider(),
                            static=config.static_context())
    app = create_app(engine, SessionRegistry(config.retrieval))
    client = TestClient(app)  # in-process ASGI client, no listener needed

    # --- latency -----------------------------------------------------
    queries = [f"Question number {i} about the notebooks." for i in range(23)]
    report = latency_harness("http://testserver", queries, warmup=3, client=client,
                             reference_ms=520.0)
    print(f"latency over {report.count} measured turns: "
          f"mean {report.mean:.2f} ms, p50 {report.p50:.2f}, p95 {report.p95:.2f}")
    print(f"  (reference mean for a deployment with two live embedding "
          f"round-trips: {report.reference_ms:.0f} ms)")

    # --- reference-free metrics ---------------------------------------
    metric_provider = OfflineMetricProvider()
    rows = []
    for question in QUESTIONS:
        sid = client.post("/sessions", json={}).json()["session_id"]
        turn = client.post(f"/sessions/{sid}/chat", json={"query": question}).json()
        contexts = []
        for ref in turn["retrieved"]:
            if ref["provenance"] == "conversational":
                continue
            contexts.append(client.get(f"/memories/{ref['uid']}").json()["voiceover"])
        rows.append({
            "faithfulness": faithfulness(question, turn["response_text"],
                                         contexts, metric_provider),
            "answer_relevance": answer_relevance(question, turn["response_text"],
                                                 metric_provider, embedder, n=1),
            "context_relevance": context_relevance(question, contexts,
                                                   metric_provider),
        })
    print("\nreference-free metrics (aggregates over 3 questions):")
    for key in ("faithfulness", "answer_relevance", "context_relevance"):
        print(f"  {key}: {aggregate_scores([r[key] for r in rows]):.3f}")

    # --- pairwise judging with position inversion ---------------------
    class PositionAJudge:
        model_id = "pos-a"

        def complete(self, system, user, max_tokens):
            return "VERDICT: A"

    class ContentJudge:
        model_id = "content"

        def complete(self, system, user, max_tokens):
            a = system.split("Answer A:")[1].split("Answer B:")[0]
            return "VERDICT: A" if "the light" in a else "VERDICT: B"

    answer_1 = "I remember the light of the south, and what it asked of me."
    answer_2 = "There were some events in that period."
    biased = pairwise_judge("What changed in the south?", answer_1, answer_2,
                            PositionAJudge())
    grounded = pairwise_judge("What changed in the south?", answer_1, answer_2,
                              ContentJudge())
    print("\npairwise judging:")
    print(f"  position-biased judge → valid={biased.valid} (filtered out)")
    print(f"  content-driven judge  → valid={grounded.valid}, "
          f"winner={grounded.final}")


if __name__ == "__main__":
    main()
