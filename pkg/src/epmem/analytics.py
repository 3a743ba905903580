"""Visualization substrates: PCA memory map, affect trajectory, character
tallies, geographic bins, conversation paths.

Everything here is a pure function of the dataset/index, so results are
safe to compute concurrently and to cache per dataset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date
from typing import Optional, Sequence

import numpy as np

from .index import MemoryIndex
from .memory import MemoryDataset, normalize_character


class AnalyticsError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureMatrix:
    """Per-memory rows (ascending uid): embedding columns as-is, then
    z-scored valence, arousal, relevance (constant columns stay 0)."""
    uids: tuple[str, ...]
    matrix: np.ndarray
    embedding_columns: int


@dataclass(frozen=True)
class Projection2D:
    points: tuple[tuple[str, float, float, float], ...]  # uid, x, y, valence
    explained_variance: tuple[float, float]

    def coords(self, uid: str) -> tuple[float, float]:
        for p_uid, x, y, _ in self.points:
            if p_uid == uid:
                return x, y
        raise KeyError(f"uid {uid!r} not in projection")

    def to_dict(self) -> dict:
        return {
            "points": [
                {"uid": uid, "x": x, "y": y, "valence": v}
                for uid, x, y, v in self.points
            ],
            "explained_variance": list(self.explained_variance),
        }


def _zscore(column: np.ndarray) -> np.ndarray:
    mean = column.mean()
    sd = column.std()  # population SD
    if sd == 0.0:
        return np.zeros_like(column)
    return (column - mean) / sd


def build_feature_matrix(ds: MemoryDataset, index: MemoryIndex) -> FeatureMatrix:
    """Combine each memory's embedding with its standardized numeric
    salience triplet (valence, arousal, relevance)."""
    by_uid = {e.uid: e.vector for e in index.entries}
    missing = [m.uid for m in ds.memories if m.uid not in by_uid]
    if missing:
        raise AnalyticsError(f"dataset uids missing from index: {missing[:5]}")
    ordered = sorted(ds.memories, key=lambda m: m.uid)
    embeddings = np.vstack([by_uid[m.uid] for m in ordered])
    valence = _zscore(np.array([m.affect.valence for m in ordered]))
    arousal = _zscore(np.array([m.affect.arousal for m in ordered]))
    relevance = _zscore(np.array([float(m.relevance) for m in ordered]))
    matrix = np.column_stack([embeddings, valence, arousal, relevance])
    return FeatureMatrix(
        uids=tuple(m.uid for m in ordered),
        matrix=matrix,
        embedding_columns=embeddings.shape[1],
    )


def pca_project(fm: FeatureMatrix, ds: Optional[MemoryDataset] = None) -> Projection2D:
    """Exact top-2 principal-component projection.

    Rows are centered and decomposed with a full SVD (equivalent to exact
    eigen-decomposition of the sample covariance); each component is
    oriented so that its largest-magnitude loading is positive, making
    the output sign-deterministic.  Explained variance is the pair of
    leading covariance eigenvalues.
    """
    X = fm.matrix
    n, d = X.shape
    if n < 3 or d < 2:
        raise AnalyticsError(f"need at least 3 rows and 2 columns, got {n}x{d}")
    centered = X - X.mean(axis=0)
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:2]
    eigenvalues = (singular[:2] ** 2) / (n - 1)
    for i in range(2):
        j = int(np.argmax(np.abs(components[i])))
        if components[i, j] < 0:
            components[i] = -components[i]
    projected = centered @ components.T

    valences: dict[str, float] = {}
    if ds is not None:
        valences = {m.uid: m.affect.valence for m in ds.memories}
    points = tuple(
        (uid, float(projected[i, 0]), float(projected[i, 1]), valences.get(uid, 0.0))
        for i, uid in enumerate(fm.uids)
    )
    ev = (float(eigenvalues[0]), float(eigenvalues[1]) if len(eigenvalues) > 1 else 0.0)
    return Projection2D(points=points, explained_variance=ev)


@dataclass(frozen=True)
class AffectSeries:
    """Per-year relevance-weighted affect; years without memories absent."""
    entries: tuple[tuple[int, float, float, int, int], ...]
    # (year, weighted_valence, weighted_arousal, memory_count, weight_sum)

    def to_dict(self) -> dict:
        return {
            "entries": [
                {"year": y, "weighted_valence": v, "weighted_arousal": a,
                 "memory_count": c, "weight_sum": w}
                for y, v, a, c, w in self.entries
            ]
        }


def yearly_affect(ds: MemoryDataset) -> AffectSeries:
    """Relevance-weighted yearly means: sum(relevance * value) / sum(relevance)
    per calendar year of the memory timestamps."""
    groups: dict[int, list] = {}
    for m in ds.memories:
        groups.setdefault(m.timestamp.year, []).append(m)
    entries = []
    for year in sorted(groups):
        members = groups[year]
        weight = sum(m.relevance for m in members)
        wv = sum(m.relevance * m.affect.valence for m in members) / weight
        wa = sum(m.relevance * m.affect.arousal for m in members) / weight
        entries.append((year, wv, wa, len(members), weight))
    return AffectSeries(entries=tuple(entries))


@dataclass(frozen=True)
class CharacterTally:
    entries: tuple[tuple[str, int, float], ...]  # name, memory count, share

    def to_dict(self) -> dict:
        return {
            "entries": [
                {"name": n, "count": c, "share": s} for n, c, s in self.entries
            ]
        }


def character_tally(ds: MemoryDataset) -> CharacterTally:
    """Memories mentioning each normalized character name (at most once
    per memory), sorted by count descending then name ascending."""
    counts: dict[str, int] = {}
    for m in ds.memories:
        for name in {normalize_character(c) for c in m.characters if c.strip()}:
            counts[name] = counts.get(name, 0) + 1
    total = len(ds.memories)
    ordered = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return CharacterTally(entries=tuple(
        (name, count, count / total if total else 0.0) for name, count in ordered
    ))


@dataclass(frozen=True)
class GeoBinGrid:
    bin_degrees: float
    bins: tuple[tuple[float, float, int, float], ...]  # lat_edge, lon_edge, count, mean valence
    date_filter: Optional[tuple[str, str]]
    valence_filter: Optional[tuple[float, float]]

    def to_dict(self) -> dict:
        return {
            "bin_degrees": self.bin_degrees,
            "bins": [
                {"lat": la, "lon": lo, "count": c, "mean_valence": v}
                for la, lo, c, v in self.bins
            ],
            "date_filter": list(self.date_filter) if self.date_filter else None,
            "valence_filter": list(self.valence_filter) if self.valence_filter else None,
        }


def geo_bins(ds: MemoryDataset, bin_degrees: float = 1.0,
             date_filter: Optional[tuple[date, date]] = None,
             valence_filter: Optional[tuple[float, float]] = None) -> GeoBinGrid:
    """Floor-aligned fixed-degree bins over geocoded, filter-passing
    memories.  Both filters are inclusive ranges."""
    if bin_degrees <= 0:
        raise AnalyticsError(f"bin_degrees must be positive, got {bin_degrees}")
    buckets: dict[tuple[float, float], list[float]] = {}
    for m in ds.memories:
        if not m.has_coordinates:
            continue
        if date_filter and not (date_filter[0] <= m.timestamp <= date_filter[1]):
            continue
        if valence_filter and not (valence_filter[0] <= m.affect.valence <= valence_filter[1]):
            continue
        key = (math.floor(m.latitude / bin_degrees) * bin_degrees,
               math.floor(m.longitude / bin_degrees) * bin_degrees)
        buckets.setdefault(key, []).append(m.affect.valence)
    bins = tuple(
        (lat, lon, len(vals), sum(vals) / len(vals))
        for (lat, lon), vals in sorted(buckets.items())
    )
    return GeoBinGrid(
        bin_degrees=bin_degrees,
        bins=bins,
        date_filter=(date_filter[0].isoformat(), date_filter[1].isoformat()) if date_filter else None,
        valence_filter=valence_filter,
    )


def conversation_path(path: Sequence[tuple[int, Sequence[str]]],
                      proj: Projection2D) -> list[tuple[int, str, float, float]]:
    """Place a session's retrieved long-term uids in the projection, one
    point per retrieval, turn order preserved (revisits repeat)."""
    coords = {uid: (x, y) for uid, x, y, _ in proj.points}
    out: list[tuple[int, str, float, float]] = []
    for turn, uids in path:
        for uid in uids:
            if uid not in coords:
                raise AnalyticsError(f"path uid {uid!r} missing from projection")
            x, y = coords[uid]
            out.append((turn, uid, x, y))
    return out
