"""Command-line entry points.

Subcommands: ``stats`` (dataset statistics / analytics exports), ``index``
(build or refresh the embedding cache), ``augment`` (corpus → dataset),
``serve`` (HTTP dialogue service), and ``eval`` (ragas / judge / latency).
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import date
from pathlib import Path

from . import augmentation
from .analytics import (
    build_feature_matrix, character_tally, geo_bins, pca_project, yearly_affect,
)
from .config import EngineConfig, make_embedding_provider, make_generation_provider
from .geocoding import CachedGeocoder, FixtureGeocoder, OpenCageGeocoder
from .index import EmbeddingCache, build_index
from .memory import LifespanBounds, load_dataset, write_dataset
from .providers import (
    RecordingTextGenProvider, ReplayTextGenProvider,
)


def _print_json(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, ensure_ascii=False)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def cmd_stats(args: argparse.Namespace) -> int:
    ds = load_dataset(args.dataset, validate=not args.lenient)
    if not args.analytics:
        _print_json(ds.stats.to_dict(), args.out)
        return 0

    config = EngineConfig.load(args.config)
    provider = make_embedding_provider(config.embedding)
    cache = EmbeddingCache(args.cache or f"{args.dataset}.embcache.jsonl")
    index = build_index(ds, provider, cache)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fm = build_feature_matrix(ds, index)
    payloads = {
        "stats.json": ds.stats.to_dict(),
        "projection.json": pca_project(fm, ds).to_dict(),
        "affect_series.json": yearly_affect(ds).to_dict(),
        "characters.json": character_tally(ds).to_dict(),
        "geo_bins.json": geo_bins(ds, bin_degrees=args.bin).to_dict(),
    }
    for name, payload in payloads.items():
        (out_dir / name).write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n",
                                    encoding="utf-8")
        print(f"wrote {out_dir / name}")
    return 0


def cmd_index(args: argparse.Namespace) -> int:
    ds = load_dataset(args.dataset)
    config = EngineConfig.load(args.config)
    provider = make_embedding_provider(config.embedding)
    cache_path = args.cache or f"{args.dataset}.embcache.jsonl"
    cache = EmbeddingCache(cache_path)
    index = build_index(ds, provider, cache, max_workers=args.workers)
    print(f"indexed {len(index)} memories (dimension {index.dimension}, "
          f"model {index.model_id}); cache at {cache_path}")
    return 0


def _parse_bounds(figure: str, bounds: str) -> LifespanBounds:
    birth, death = (part.strip() for part in bounds.split(","))
    return LifespanBounds(figure, date.fromisoformat(birth), date.fromisoformat(death))


def cmd_augment(args: argparse.Namespace) -> int:
    bounds = _parse_bounds(args.figure, args.bounds)
    text = Path(args.source).read_text(encoding="utf-8")

    if args.replay:
        provider = ReplayTextGenProvider(args.replay)
    elif args.offline_llm:
        provider = augmentation.OfflineStageProvider(args.figure)
    else:
        config = EngineConfig.load(args.config)
        provider = make_generation_provider(config.generation)
    if args.record:
        provider = RecordingTextGenProvider(provider, args.record)

    geocoder = None
    if args.offline_geocode:
        geocoder = FixtureGeocoder(args.offline_geocode)
    elif args.geocode:
        geocoder = CachedGeocoder(OpenCageGeocoder(), f"{args.out}.geocache.json")

    corrections = None
    if args.corrections:
        corrections = json.loads(Path(args.corrections).read_text(encoding="utf-8"))

    result = augmentation.run_pipeline(
        text=text, source=args.kind, figure_name=args.figure, bounds=bounds,
        provider=provider, geocoder=geocoder, target_size=args.chunk_size,
        corrections=corrections,
    )

    if args.append and Path(args.out).exists():
        existing = load_dataset(args.out, validate=False)
        if existing.bounds != bounds:
            print("error: --append target has different lifespan bounds", file=sys.stderr)
            return 2
        from .memory import MemoryDataset
        merged = MemoryDataset(list(existing.memories) + list(result.dataset.memories),
                               bounds)
        write_dataset(merged, args.out)
    else:
        write_dataset(result.dataset, args.out)

    if args.quarantine_dir and result.quarantine:
        augmentation.write_quarantine(result.quarantine, args.quarantine_dir)
    report_path = args.report or f"{args.out}.qa.json"
    Path(report_path).write_text(
        json.dumps(result.report.to_dict(), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    print(f"chunks: {result.chunk_count}  records: {len(result.dataset)}  "
          f"quarantined: {len(result.quarantine)}")
    print(f"QA violations: {result.report.violation_count} "
          f"({result.report.violation_rate:.2%}); geocode failures: "
          f"{result.report.geocode_failures} ({result.report.geocode_failure_rate:.2%} "
          f"vs {augmentation.GEOCODE_REFERENCE_RATE:.0%} reference)")
    print(f"dataset: {args.out}\nQA report: {report_path}")
    return 0


def _build_engine(args: argparse.Namespace):
    from .service import DialogueEngine, SessionRegistry

    config = EngineConfig.load(args.config)
    if args.k is not None or args.conv_threshold is not None:
        from .retrieval import RetrievalConfig
        config.retrieval = RetrievalConfig(
            k_direct=args.k if args.k is not None else config.retrieval.k_direct,
            conv_threshold=(args.conv_threshold if args.conv_threshold is not None
                            else config.retrieval.conv_threshold),
            n_direct_with_conv=config.retrieval.n_direct_with_conv,
        )
    ds = load_dataset(args.dataset)
    embedder = make_embedding_provider(config.embedding)
    generator = make_generation_provider(config.generation)
    cache = EmbeddingCache(args.index or f"{args.dataset}.embcache.jsonl")
    index = build_index(ds, embedder, cache)
    engine = DialogueEngine(
        dataset=ds, index=index, embedder=embedder, generator=generator,
        static=config.static_context(), budget=config.budget,
        template=config.prompt_template(),
    )
    registry = SessionRegistry(config.retrieval, ttl_seconds=config.session_ttl_seconds)
    return engine, registry, config


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    engine, registry, config = _build_engine(args)
    app = create_app(engine, registry, busy_mode=config.busy_mode,
                     ui_dir=args.ui_dir)
    print(f"serving {len(engine.dataset)} memories on {args.host}:{args.port}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _load_questions(path: str) -> list[str]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(raw, dict):
        raw = raw.get("questions", [])
    return [str(q) for q in raw]


def _chat_once(client, base_url: str, query: str) -> dict:
    resp = client.post(f"{base_url}/sessions", json={})
    resp.raise_for_status()
    sid = resp.json()["session_id"]
    resp = client.post(f"{base_url}/sessions/{sid}/chat", json={"query": query})
    resp.raise_for_status()
    return resp.json()


def _fetch_contexts(client, base_url: str, turn: dict) -> list[str]:
    contexts = []
    for ref in turn["retrieved"]:
        if ref["provenance"] == "conversational":
            continue
        resp = client.get(f"{base_url}/memories/{ref['uid']}")
        resp.raise_for_status()
        payload = resp.json()
        contexts.append(payload["voiceover"])
    return contexts


def cmd_eval_ragas(args: argparse.Namespace) -> int:
    import httpx

    from .evaluation import (
        aggregate_scores, answer_relevance, context_relevance, faithfulness,
    )

    config = EngineConfig.load(args.config)
    gen = make_generation_provider(config.generation)
    emb = make_embedding_provider(config.embedding)
    questions = _load_questions(args.questions)
    per_question = []
    with httpx.Client(timeout=120.0) as client:
        for question in questions:
            turn = _chat_once(client, args.endpoint, question)
            contexts = _fetch_contexts(client, args.endpoint, turn)
            answer = turn["response_text"]
            scores = {
                "question": question,
                "faithfulness": faithfulness(question, answer, contexts, gen),
                "answer_relevance": answer_relevance(question, answer, gen, emb,
                                                     n=args.generated_questions),
                "context_relevance": context_relevance(question, contexts, gen),
            }
            per_question.append(scores)
    report = {
        "per_question": per_question,
        "aggregates": {
            key: aggregate_scores([q[key] for q in per_question])
            for key in ("faithfulness", "answer_relevance", "context_relevance")
        },
    }
    _print_json(report, args.out)
    return 0


def cmd_eval_judge(args: argparse.Namespace) -> int:
    import httpx

    from .evaluation import pairwise_judge

    config = EngineConfig.load(args.config)
    judge = make_generation_provider(config.generation)
    questions = _load_questions(args.questions)
    wins = {"system1": 0, "system2": 0, "tie": 0}
    invalid = 0
    per_question = []
    with httpx.Client(timeout=120.0) as client:
        for question in questions:
            answer1 = _chat_once(client, args.sys1, question)["response_text"]
            answer2 = _chat_once(client, args.sys2, question)["response_text"]
            verdict = pairwise_judge(question, answer1, answer2, judge)
            if verdict.valid:
                wins[verdict.final] += 1
            else:
                invalid += 1
            per_question.append({
                "question": question,
                "valid": verdict.valid,
                "final": verdict.final,
            })
    report = {"per_question": per_question, "wins": wins, "invalid": invalid,
              "judgments": len(questions)}
    _print_json(report, args.out)
    return 0


def cmd_eval_latency(args: argparse.Namespace) -> int:
    from .evaluation import latency_harness

    queries = _load_questions(args.queries)
    report = latency_harness(args.endpoint, queries, warmup=args.warmup,
                             reference_ms=args.reference_ms)
    payload = report.to_dict()
    if not args.samples:
        payload.pop("samples")
    _print_json(payload, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epmem",
                                     description="episodic-memory dialogue engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p_stats = sub.add_parser("stats", help="dataset statistics (JSON) or analytics exports")
    p_stats.add_argument("dataset")
    p_stats.add_argument("--analytics", action="store_true",
                         help="also export projection/affect/characters/geo payloads")
    p_stats.add_argument("--config", default=None)
    p_stats.add_argument("--cache", default=None, help="embedding cache path")
    p_stats.add_argument("--out", default=None)
    p_stats.add_argument("--out-dir", default="analytics_out")
    p_stats.add_argument("--bin", type=float, default=1.0, help="geo bin size, degrees")
    p_stats.add_argument("--lenient", action="store_true",
                         help="load without record validation (QA workflows)")
    p_stats.set_defaults(func=cmd_stats)

    p_index = sub.add_parser("index", help="build/refresh the embedding cache")
    p_index.add_argument("dataset")
    p_index.add_argument("--config", default=None)
    p_index.add_argument("--cache", default=None)
    p_index.add_argument("--workers", type=int, default=1)
    p_index.set_defaults(func=cmd_index)

    p_aug = sub.add_parser("augment", help="transform a source corpus into a dataset")
    p_aug.add_argument("--source", required=True)
    p_aug.add_argument("--kind", required=True, choices=["biography", "letters"])
    p_aug.add_argument("--figure", required=True)
    p_aug.add_argument("--bounds", required=True, help="birth,death (ISO dates)")
    p_aug.add_argument("--out", required=True)
    p_aug.add_argument("--replay", default=None, help="recordings file to replay")
    p_aug.add_argument("--record", default=None, help="record provider replies here")
    p_aug.add_argument("--offline-llm", action="store_true",
                       help="use the deterministic rule-based stage provider")
    p_aug.add_argument("--offline-geocode", default=None, help="fixture table JSON")
    p_aug.add_argument("--geocode", action="store_true", help="use the live geocoder")
    p_aug.add_argument("--corrections", default=None, help="uid-keyed corrections JSON")
    p_aug.add_argument("--quarantine-dir", default=None)
    p_aug.add_argument("--report", default=None, help="QA report path")
    p_aug.add_argument("--chunk-size", type=int, default=augmentation.DEFAULT_CHUNK_SIZE)
    p_aug.add_argument("--append", action="store_true",
                       help="append to an existing dataset with identical bounds")
    p_aug.add_argument("--config", default=None)
    p_aug.set_defaults(func=cmd_augment)

    p_serve = sub.add_parser("serve", help="run the dialogue HTTP service")
    p_serve.add_argument("--dataset", required=True)
    p_serve.add_argument("--index", default=None, help="embedding cache path")
    p_serve.add_argument("--config", default=None)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--k", type=int, default=None, help="k_direct override")
    p_serve.add_argument("--conv-threshold", type=float, default=None)
    p_serve.add_argument("--ui-dir", default=None,
                         help="serve a built browser UI from this directory at /ui")
    p_serve.set_defaults(func=cmd_serve)

    p_eval = sub.add_parser("eval", help="evaluation harnesses")
    eval_sub = p_eval.add_subparsers(dest="eval_command", required=True)

    p_ragas = eval_sub.add_parser("ragas", help="faithfulness / relevance metrics")
    p_ragas.add_argument("--questions", required=True)
    p_ragas.add_argument("--endpoint", required=True)
    p_ragas.add_argument("--config", default=None)
    p_ragas.add_argument("--generated-questions", type=int, default=3)
    p_ragas.add_argument("--out", default=None)
    p_ragas.set_defaults(func=cmd_eval_ragas)

    p_judge = eval_sub.add_parser("judge", help="position-inverted pairwise judging")
    p_judge.add_argument("--questions", required=True)
    p_judge.add_argument("--sys1", required=True)
    p_judge.add_argument("--sys2", required=True)
    p_judge.add_argument("--config", default=None)
    p_judge.add_argument("--out", default=None)
    p_judge.set_defaults(func=cmd_eval_judge)

    p_lat = eval_sub.add_parser("latency", help="prompt build latency against a service")
    p_lat.add_argument("--queries", required=True)
    p_lat.add_argument("--endpoint", required=True)
    p_lat.add_argument("--warmup", type=int, default=3)
    p_lat.add_argument("--reference-ms", type=float, default=None,
                       help="print the gap to a published reference mean")
    p_lat.add_argument("--samples", action="store_true", help="include raw samples")
    p_lat.add_argument("--out", default=None)
    p_lat.set_defaults(func=cmd_eval_latency)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
