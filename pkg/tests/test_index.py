"""Embedding cache, cosine similarity, exact top-k search."""

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from epmem.index import (
    EmbeddingCache, IndexBuildError, IndexError_, MemoryIndex, build_index,
    cosine_similarity, fetch_full, top_k,
)
from epmem.memory import MemoryDataset
from epmem.providers import CountingEmbeddingProvider, HashEmbeddingProvider

from conftest import FailingEmbeddingProvider, make_memory


def unit(*values):
    v = np.asarray(values, dtype=np.float64)
    return v / np.linalg.norm(v)


class TestCosineSimilarity:
    def test_identical_unit_vectors(self):
        v = unit(0.3, -0.4, 0.5)
        assert cosine_similarity(v, v) == pytest.approx(1.0, abs=1e-9)

    def test_orthogonal(self):
        assert cosine_similarity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0

    def test_hand_arithmetic(self):
        a = np.array([1.0, 2.0, 2.0])
        b = np.array([2.0, 1.0, 2.0])
        assert cosine_similarity(a, b) == pytest.approx(8 / 9, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(IndexError_, match="dimension"):
            cosine_similarity(np.ones(3), np.ones(4))

    def test_zero_vector(self):
        with pytest.raises(IndexError_, match="zero"):
            cosine_similarity(np.zeros(3), np.ones(3))

    vectors = st.lists(st.floats(-5, 5), min_size=4, max_size=4).map(
        lambda xs: np.asarray(xs)
    ).filter(lambda v: np.linalg.norm(v) > 1e-3)

    @given(vectors, vectors)
    def test_symmetry(self, a, b):
        assert cosine_similarity(a, b) == pytest.approx(cosine_similarity(b, a), abs=1e-12)

    @given(vectors, st.floats(0.01, 100.0))
    def test_positive_scaling_invariance(self, a, scale):
        b = unit(1.0, 2.0, -1.0, 0.5)
        assert cosine_similarity(a * scale, b) == pytest.approx(
            cosine_similarity(a, b), abs=1e-9)

    @given(vectors)
    def test_self_similarity_is_one(self, a):
        assert cosine_similarity(a, a) == pytest.approx(1.0, abs=1e-9)


@pytest.fixture
def provider():
    return HashEmbeddingProvider(dimension=32)


class TestBuildIndex:
    def test_empty_dataset(self, bounds, provider):
        index = build_index(MemoryDataset([], bounds), provider)
        assert len(index) == 0

    def test_entries_preserve_dataset_order(self, small_dataset, provider):
        index = build_index(small_dataset, provider)
        assert [e.uid for e in index.entries] == [m.uid for m in small_dataset.memories]
        assert index.dimension == 32

    def test_embeds_augmented_context_only(self, small_dataset, provider):
        index = build_index(small_dataset, provider)
        expected = provider.embed(small_dataset.memories[0].augmented_context)
        assert np.array_equal(index.entries[0].vector, expected)

    def test_warm_cache_makes_zero_provider_calls(self, small_dataset, tmp_path, provider):
        cache_path = tmp_path / "cache.jsonl"
        counting = CountingEmbeddingProvider(provider)
        build_index(small_dataset, counting, EmbeddingCache(cache_path))
        assert counting.calls == len(small_dataset)

        counting2 = CountingEmbeddingProvider(provider)
        index = build_index(small_dataset, counting2, EmbeddingCache(cache_path))
        assert counting2.calls == 0
        assert len(index) == len(small_dataset)

    def test_cache_round_trip_is_bitwise_equal(self, small_dataset, tmp_path, provider):
        cache_path = tmp_path / "cache.jsonl"
        first = build_index(small_dataset, provider, EmbeddingCache(cache_path))
        second = build_index(small_dataset, provider, EmbeddingCache(cache_path))
        for a, b in zip(first.entries, second.entries):
            assert a.vector.tobytes() == b.vector.tobytes()

    def test_dimension_drift_versus_cache_errors(self, small_dataset, tmp_path):
        cache_path = tmp_path / "cache.jsonl"
        build_index(small_dataset, HashEmbeddingProvider(16, model_id="m"),
                    EmbeddingCache(cache_path))
        with pytest.raises(IndexError_, match="dimension"):
            build_index(small_dataset, HashEmbeddingProvider(32, model_id="m"),
                        EmbeddingCache(cache_path))

    def test_provider_failure_lists_failed_uids(self, small_dataset):
        failing = FailingEmbeddingProvider(
            16, should_fail=lambda text: "m-002" in text or "m-005" in text)
        with pytest.raises(IndexBuildError) as excinfo:
            build_index(small_dataset, failing)
        assert excinfo.value.failed_uids == ["m-002", "m-005"]

    def test_parallel_build_matches_serial(self, small_dataset, provider):
        serial = build_index(small_dataset, provider)
        threaded = build_index(small_dataset, provider, max_workers=4)
        for a, b in zip(serial.entries, threaded.entries):
            assert a.uid == b.uid and np.array_equal(a.vector, b.vector)

    def test_index_entries_carry_no_narrative_text(self, small_dataset, provider):
        # Stage separation by interface shape: the searchable structure
        # holds uid, vector, norm and nothing else.
        index = build_index(small_dataset, provider)
        assert [f.name for f in dataclasses.fields(index.entries[0])] == \
               ["uid", "vector", "cached_norm"]


def brute_force_ranking(entries, query):
    """Independent oracle: per-entry cosine from scratch, full sort."""
    scored = []
    for uid, vec in entries:
        num = float(np.dot(vec, query))
        denom = float(np.linalg.norm(vec)) * float(np.linalg.norm(query))
        scored.append((uid, min(1.0, max(-1.0, num / denom))))
    return sorted(scored, key=lambda item: (-item[1], item[0]))


def assert_same_ranking(results, oracle):
    """Rank order must agree exactly; scores may differ in the last ulp
    because the index scores via one matrix product."""
    assert [uid for uid, _ in results] == [uid for uid, _ in oracle]
    for (_, got), (_, want) in zip(results, oracle):
        assert got == pytest.approx(want, abs=1e-12)


class TestTopK:
    def _index_from_vectors(self, vectors, model="test"):
        from epmem.index import IndexedEntry
        entries = [IndexedEntry(uid, v, float(np.linalg.norm(v)))
                   for uid, v in vectors]
        return MemoryIndex(entries, model)

    def test_default_k_is_three(self, small_dataset, provider):
        index = build_index(small_dataset, provider)
        results = top_k(index, provider.embed("a question about printing"))
        assert len(results) == 3

    def test_k_larger_than_index_returns_everything_ranked(self):
        rng = np.random.default_rng(11)
        vectors = [(f"u{i}", rng.standard_normal(8)) for i in range(4)]
        index = self._index_from_vectors(vectors)
        query = rng.standard_normal(8)
        results = top_k(index, query, k=50)
        assert_same_ranking(results, brute_force_ranking(vectors, query)[:4])

    def test_matches_exhaustive_oracle_on_random_instances(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            vectors = [(f"u{i:03d}", rng.standard_normal(16)) for i in range(50)]
            index = self._index_from_vectors(vectors)
            query = rng.standard_normal(16)
            assert_same_ranking(top_k(index, query, 50), brute_force_ranking(vectors, query))

    def test_ties_break_by_ascending_uid(self):
        shared = unit(1.0, 1.0, 0.0)
        vectors = [("zz", shared.copy()), ("aa", shared.copy()),
                   ("mm", shared * 2.0)]  # same direction, same cosine
        index = self._index_from_vectors(vectors)
        results = top_k(index, shared, k=3)
        assert [uid for uid, _ in results] == ["aa", "mm", "zz"]

    def test_dimension_mismatch(self, small_dataset, provider):
        index = build_index(small_dataset, provider)
        with pytest.raises(IndexError_, match="dimension"):
            top_k(index, np.ones(5))

    def test_k_below_one(self, small_dataset, provider):
        index = build_index(small_dataset, provider)
        with pytest.raises(IndexError_, match="k must be"):
            top_k(index, provider.embed("q"), k=0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 60), st.integers(0, 2 ** 31 - 1))
    def test_property_prefix_of_full_ranking(self, k, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 40))
        vectors = [(f"u{i:03d}", rng.standard_normal(8)) for i in range(n)]
        index = self._index_from_vectors(vectors)
        query = rng.standard_normal(8)
        assert_same_ranking(top_k(index, query, k), brute_force_ranking(vectors, query)[:k])


class TestFetchFull:
    def test_existing_uid_returns_complete_record(self, small_dataset):
        m = fetch_full("m-004", small_dataset)
        assert m.voiceover and m.affect is not None

    def test_unknown_uid(self, small_dataset):
        with pytest.raises(KeyError, match="nope"):
            fetch_full("nope", small_dataset)

    def test_stage_two_field_manifest(self, small_dataset):
        # The full record must cover: narrative, temporal markers, affect,
        # characters, coordinates, relevance.
        m = fetch_full("m-001", small_dataset)
        manifest = {"voiceover", "timestamp", "affect", "characters",
                    "latitude", "longitude", "relevance"}
        present = {f.name for f in dataclasses.fields(m)}
        assert manifest <= present
