"""Command-line surface: stats, index, augment, analytics exports."""

import json

import pytest

from epmem.cli import main

from conftest import FIXTURES


BOUNDS_ARG = "1824-05-12,1887-11-03"


class TestStats:
    def test_stats_prints_dataset_statistics_json(self, capsys):
        assert main(["stats", str(FIXTURES / "mini_dataset.jsonl")]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["count"] == 3
        assert payload["count_by_source"] == {"biography": 2, "letters": 1}
        assert payload["year_range"] == [1851, 1871]

    def test_stats_analytics_exports_payload_files(self, tmp_path, capsys):
        out_dir = tmp_path / "analytics"
        code = main(["stats", str(FIXTURES / "mini_dataset.jsonl"),
                     "--analytics", "--out-dir", str(out_dir),
                     "--cache", str(tmp_path / "cache.jsonl")])
        assert code == 0
        for name in ("stats.json", "projection.json", "affect_series.json",
                     "characters.json", "geo_bins.json"):
            assert (out_dir / name).exists(), name
        projection = json.loads((out_dir / "projection.json").read_text())
        assert len(projection["points"]) == 3


class TestIndex:
    def test_index_builds_cache_sidecar(self, tmp_path, capsys):
        cache = tmp_path / "cache.jsonl"
        code = main(["index", str(FIXTURES / "mini_dataset.jsonl"),
                     "--cache", str(cache)])
        assert code == 0
        assert cache.exists()
        first_size = cache.stat().st_size
        # Second run is a pure cache refresh: no new entries appended.
        main(["index", str(FIXTURES / "mini_dataset.jsonl"), "--cache", str(cache)])
        assert cache.stat().st_size == first_size


class TestAugment:
    def test_offline_augment_writes_dataset_report_and_quarantine(self, tmp_path, capsys):
        out = tmp_path / "memories.jsonl"
        qdir = tmp_path / "quarantine"
        code = main([
            "augment",
            "--source", str(FIXTURES / "corpus_letters.txt"),
            "--kind", "letters",
            "--figure", "Adelie Varenne",
            "--bounds", BOUNDS_ARG,
            "--out", str(out),
            "--offline-llm",
            "--offline-geocode", str(FIXTURES / "geocode_fixtures.json"),
            "--quarantine-dir", str(qdir),
            "--chunk-size", "1200",
        ])
        assert code == 0
        assert out.exists()
        report = json.loads((tmp_path / "memories.jsonl.qa.json").read_text())
        assert report["total"] >= 1
        assert list(qdir.glob("*.json")), "sentinel chunk should be quarantined"

        from epmem.memory import load_dataset
        ds = load_dataset(out)
        assert len(ds) == report["total"]

    def test_record_then_replay_produces_identical_dataset(self, tmp_path):
        recordings = tmp_path / "recordings.jsonl"
        out_record = tmp_path / "recorded.jsonl"
        out_replay = tmp_path / "replayed.jsonl"
        base_args = [
            "augment",
            "--source", str(FIXTURES / "corpus_biography.txt"),
            "--kind", "biography",
            "--figure", "Adelie Varenne",
            "--bounds", BOUNDS_ARG,
            "--offline-geocode", str(FIXTURES / "geocode_fixtures.json"),
            "--chunk-size", "1200",
            "--corrections", str(tmp_path / "corrections.json"),
        ]
        (tmp_path / "corrections.json").write_text(
            json.dumps({"biography-0001": {"timestamp": "1824-05-12"}}))
        assert main(base_args + ["--offline-llm", "--record", str(recordings),
                                 "--out", str(out_record)]) == 0
        assert main(base_args + ["--replay", str(recordings),
                                 "--out", str(out_replay)]) == 0
        assert out_record.read_bytes() == out_replay.read_bytes()

        report = json.loads((tmp_path / "replayed.jsonl.qa.json").read_text())
        assert report["violation_count"] == 0
        assert report["corrections_applied"] == 1

    def test_append_merges_sources_under_same_bounds(self, tmp_path):
        out = tmp_path / "full.jsonl"
        common = [
            "--figure", "Adelie Varenne", "--bounds", BOUNDS_ARG,
            "--out", str(out), "--offline-llm",
            "--offline-geocode", str(FIXTURES / "geocode_fixtures.json"),
            "--chunk-size", "1200",
            "--corrections", str(tmp_path / "corr.json"),
        ]
        (tmp_path / "corr.json").write_text(
            json.dumps({"biography-0001": {"timestamp": "1824-05-12"}}))
        assert main(["augment", "--source", str(FIXTURES / "corpus_biography.txt"),
                     "--kind", "biography"] + common) == 0
        first_count = len(open(out).readlines())
        (tmp_path / "corr.json").write_text("{}")
        assert main(["augment", "--source", str(FIXTURES / "corpus_letters.txt"),
                     "--kind", "letters", "--append"] + common) == 0
        assert len(open(out).readlines()) > first_count

        from epmem.memory import load_dataset
        ds = load_dataset(out)
        sources = {m.source for m in ds.memories}
        assert sources == {"biography", "letters"}
