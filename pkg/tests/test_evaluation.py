"""RAGAs-style metrics, position-inverted judging, latency summarization."""

import numpy as np
import pytest

from epmem.evaluation import (
    EvaluationError, aggregate_scores, answer_relevance, context_relevance,
    faithfulness, pairwise_judge, split_sentences, summarize_latencies,
)

from conftest import MapEmbeddingProvider, ScriptedTextGenProvider


def claims_reply(n):
    return "\n".join(f"{i + 1}. Claim number {i + 1}." for i in range(n))


class TestFaithfulness:
    def test_all_claims_supported_scores_one(self):
        provider = ScriptedTextGenProvider(
            [claims_reply(4)] + ["VERDICT: SUPPORTED"] * 4)
        score = faithfulness("q?", "An answer.", ["ctx"], provider)
        assert score == 1.0

    def test_three_of_four_supported(self):
        provider = ScriptedTextGenProvider(
            [claims_reply(4), "VERDICT: SUPPORTED", "VERDICT: SUPPORTED",
             "VERDICT: UNSUPPORTED", "VERDICT: SUPPORTED"])
        score = faithfulness("q?", "An answer.", ["ctx"], provider)
        assert score == 0.75
        assert score == 3 / 4

    def test_empty_answer_is_an_error(self):
        with pytest.raises(EvaluationError, match="empty"):
            faithfulness("q?", "   ", ["ctx"], ScriptedTextGenProvider([]))

    def test_zero_extractable_claims_is_absent(self):
        provider = ScriptedTextGenProvider(["NONE"])
        assert faithfulness("q?", "Hmm.", ["ctx"], provider) is None

    def test_unparseable_support_verdict_raises(self):
        provider = ScriptedTextGenProvider([claims_reply(1), "maybe??"])
        with pytest.raises(EvaluationError, match="unparseable"):
            faithfulness("q?", "An answer.", ["ctx"], provider)


class TestAnswerRelevance:
    def test_regenerating_the_original_question_scores_one(self):
        gen = ScriptedTextGenProvider(["1. What did the garden mean to you?"])
        emb = MapEmbeddingProvider({}, 16)  # identical text, identical vector
        score = answer_relevance("What did the garden mean to you?", "a", gen, emb, n=1)
        assert score == pytest.approx(1.0, abs=1e-9)

    def test_engineered_mean_of_two_similarities(self):
        table = {
            "orig": np.array([1.0, 0.0, 0.0]),
            "gen-a": np.array([0.9, np.sqrt(1 - 0.81), 0.0]),
            "gen-b": np.array([0.7, np.sqrt(1 - 0.49), 0.0]),
        }
        gen = ScriptedTextGenProvider(["1. gen-a\n2. gen-b"])
        emb = MapEmbeddingProvider(table, 3)
        score = answer_relevance("orig", "answer", gen, emb, n=2)
        assert score == pytest.approx(0.8, abs=1e-9)

    def test_negative_similarity_floors_at_zero(self):
        table = {
            "orig": np.array([1.0, 0.0]),
            "gen-a": np.array([-1.0, 0.0]),
        }
        gen = ScriptedTextGenProvider(["1. gen-a"])
        emb = MapEmbeddingProvider(table, 2)
        assert answer_relevance("orig", "answer", gen, emb, n=1) == 0.0

    def test_n_zero_is_a_precondition_error(self):
        with pytest.raises(EvaluationError, match="n must be"):
            answer_relevance("q", "a", ScriptedTextGenProvider([]),
                             MapEmbeddingProvider({}, 4), n=0)


class TestContextRelevance:
    def test_all_sentences_relevant(self):
        contexts = ["One fact. Another fact.", "Third fact here."]
        provider = ScriptedTextGenProvider(["VERDICT: RELEVANT"] * 3)
        assert context_relevance("q?", contexts, provider) == 1.0

    def test_two_of_ten_relevant(self):
        sentences = " ".join(f"Sentence number {i} stands alone." for i in range(10))
        replies = ["VERDICT: RELEVANT"] * 2 + ["VERDICT: IRRELEVANT"] * 8
        provider = ScriptedTextGenProvider(replies)
        score = context_relevance("q?", [sentences], provider)
        assert score == 0.2
        assert score == 2 / 10

    def test_empty_contexts_error(self):
        with pytest.raises(EvaluationError, match="empty"):
            context_relevance("q?", [], ScriptedTextGenProvider([]))

    def test_sentence_splitting_rule(self):
        text = "Mr. smith went home. He slept! Did he dream? all lowercase stays."
        sentences = split_sentences(text)
        assert sentences == ["Mr. smith went home.", "He slept!",
                             "Did he dream? all lowercase stays."]


def judge_replying(sequence):
    return ScriptedTextGenProvider([f"Some reasoning.\nVERDICT: {v}" for v in sequence])


class TestPairwiseJudge:
    def test_consistent_preference_for_system1_is_valid(self):
        # Round 1: sys1 is A; round 2 inverted: sys1 is B.
        verdict = pairwise_judge("q", "ans one", "ans two", judge_replying(["A", "B"]))
        assert verdict.valid
        assert verdict.final == "system1"

    def test_pure_position_preference_is_invalid(self):
        verdict = pairwise_judge("q", "ans one", "ans two", judge_replying(["A", "A"]))
        assert not verdict.valid
        assert verdict.final is None

    def test_double_tie_is_a_valid_tie(self):
        verdict = pairwise_judge("q", "ans one", "ans two", judge_replying(["T", "T"]))
        assert verdict.valid
        assert verdict.final == "tie"

    def test_unparseable_reply_keeps_raw_text(self):
        judge = ScriptedTextGenProvider(["I refuse to pick.", "VERDICT: B"])
        verdict = pairwise_judge("q", "a1", "a2", judge)
        assert not verdict.valid
        assert verdict.round1.winner is None
        assert verdict.round1.raw_reply == "I refuse to pick."

    def test_over_limit_answers_are_rejected(self):
        long_answer = "x" * 2404  # 601 tokens under the default counter
        with pytest.raises(EvaluationError, match="limit"):
            pairwise_judge("q", long_answer, "fine", judge_replying(["A", "B"]))

    def test_inversion_mapping_is_an_involution(self):
        # A content-sensitive judge: always prefers the answer that contains
        # the token GOOD, wherever it sits.
        class ContentJudge:
            model_id = "content"

            def complete(self, system, user, max_tokens):
                a_part = system.split("Answer A:")[1].split("Answer B:")[0]
                return "VERDICT: A" if "GOOD" in a_part else "VERDICT: B"

        v1 = pairwise_judge("q", "GOOD answer", "plain", ContentJudge())
        v2 = pairwise_judge("q", "plain", "GOOD answer", ContentJudge())
        assert v1.valid and v1.final == "system1"
        assert v2.valid and v2.final == "system2"


class TestAggregation:
    def test_absent_scores_excluded_not_zero_filled(self):
        assert aggregate_scores([0.5, None, 1.0]) == pytest.approx(0.75)

    def test_all_absent_is_none(self):
        assert aggregate_scores([None, None]) is None


class TestLatencySummary:
    def test_empty_report(self):
        report = summarize_latencies([])
        assert report.count == 0
        assert report.mean is None and report.p95 is None

    def test_nearest_rank_percentiles(self):
        samples = [float(v) for v in range(1, 101)]  # 1..100 ms
        report = summarize_latencies(samples)
        assert report.mean == pytest.approx(50.5)
        assert report.p50 == 50.0
        assert report.p95 == 95.0
        assert report.count == 100

    def test_mean_within_min_max(self):
        report = summarize_latencies([3.0, 9.0, 4.5])
        assert min(report.samples) <= report.mean <= max(report.samples)

    def test_reference_is_carried_through(self):
        report = summarize_latencies([1.0], reference_ms=520.0)
        assert report.to_dict()["reference_ms"] == 520.0
