#!/usr/bin/env python3
"""Analytics over the memory space: PCA map, affect trajectory, character
tallies, geographic bins — plus a session's conversation path projected
into the 2D map.

Writes the JSON payloads the visualization endpoints serve, and renders
two PNGs when matplotlib is available.

Run 01_build_dataset.py first, then:  python3 demos/04_memory_analytics.py
"""

import json
from pathlib import Path

from epmem.analytics import (
    build_feature_matrix, character_tally, conversation_path, geo_bins,
    pca_project, yearly_affect,
)
from epmem.index import EmbeddingCache, build_index
from epmem.memory import load_dataset
from epmem.providers import EchoDialogueProvider, HashEmbeddingProvider
from epmem.prompts import StaticContext
from epmem.retrieval import RetrievalConfig
from epmem.service import DialogueEngine, Session

HERE = Path(__file__).parent
DS_PATH = HERE / "output" / "varenne_memories.jsonl"
OUT = HERE / "output"


def main() -> None:
    ds = load_dataset(DS_PATH)
    embedder = HashEmbeddingProvider(dimension=256)
    index = build_index(ds, embedder, EmbeddingCache(DS_PATH.with_suffix(".embcache.jsonl")))

    projection = pca_project(build_feature_matrix(ds, index), ds)
    series = yearly_affect(ds)
    tally = character_tally(ds)
    grid = geo_bins(ds, bin_degrees=1.0)

    # A short session to draw a path through the projection.
    engine = DialogueEngine(ds, index, embedder, EchoDialogueProvider(),
                            StaticContext("First-person narrator."))
    session = Session(session_id="walk", created_at=0.0, config=RetrievalConfig())
    engine.chat(session, "What did the mountains mean to you?")
    engine.chat(session, "And the printing dispute?")
    path_points = conversation_path(session.path, projection)

    payloads = {
        "projection.json": projection.to_dict(),
        "affect_series.json": series.to_dict(),
        "characters.json": tally.to_dict(),
        "geo_bins.json": grid.to_dict(),
        "conversation_path.json": {
            "points": [{"turn": t, "uid": u, "x": x, "y": y}
                       for t, u, x, y in path_points]},
    }
    for name, payload in payloads.items():
        (OUT / name).write_text(json.dumps(payload, indent=2) + "\n")
        print(f"wrote {OUT / name}")

    print(f"\nexplained variance: {projection.explained_variance[0]:.3f}, "
          f"{projection.explained_variance[1]:.3f}")
    print("top characters:", ", ".join(f"{n} ({c})" for n, c, _ in tally.entries[:4]))
    print("yearly affect (year, weighted valence, weighted arousal):")
    for year, wv, wa, count, _ in series.entries:
        print(f"  {year}: {wv:+.2f} / {wa:+.2f}  ({count} memories)")
    print(f"geo bins: {len(grid.bins)} cells, "
          f"{sum(b[2] for b in grid.bins)} geocoded memories")

    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not available; skipping PNGs")
        return

    fig, ax = plt.subplots(figsize=(7, 5))
    xs = [x for _, x, _, _ in projection.points]
    ys = [y for _, _, y, _ in projection.points]
    vs = [v for _, _, _, v in projection.points]
    scatter = ax.scatter(xs, ys, c=vs, cmap="cividis", vmin=-1, vmax=1, s=60)
    px = [x for _, _, x, _ in path_points]
    py = [y for _, _, _, y in path_points]
    ax.plot(px, py, "r.-", alpha=0.7, label="conversation path")
    fig.colorbar(scatter, label="valence")
    ax.set_title("Memory space (top two principal components)")
    ax.legend()
    fig.savefig(OUT / "memory_map.png", dpi=120, bbox_inches="tight")
    print(f"wrote {OUT / 'memory_map.png'}")

    fig, ax = plt.subplots(figsize=(7, 3.5))
    years = [e[0] for e in series.entries]
    ax.plot(years, [e[1] for e in series.entries], "o-", label="weighted valence")
    ax.plot(years, [e[2] for e in series.entries], "s--", label="weighted arousal")
    ax.axhline(0.0, color="grey", lw=0.5)
    ax.set_title("Affect trajectory by year")
    ax.legend()
    fig.savefig(OUT / "affect_trajectory.png", dpi=120, bbox_inches="tight")
    print(f"wrote {OUT / 'affect_trajectory.png'}")


if __name__ == "__main__":
    main()
