"""Token accounting, template parsing, budget-safe assembly, drop order."""

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from epmem.index import build_index
from epmem.memory import MemoryDataset
from epmem.prompts import (
    BudgetConfigError, CharRatioTokenCounter, DEFAULT_COUNTER, PromptTemplate,
    StaticContext, TokenBudget, affect_labels, build_prompt, count_tokens,
    format_metadata, truncate_to_tokens,
)
from epmem.providers import HashEmbeddingProvider
from epmem.retrieval import (
    RetrievalBundle, RetrievalConfig, SessionMemory, record_exchange, retrieve,
)
from epmem.memory import AffectiveState

from conftest import make_memory


@pytest.fixture
def provider():
    return HashEmbeddingProvider(dimension=16)


def bundle_for(ds, uids, conversational=None, associated=None):
    direct = tuple((uid, 1.0 - 0.1 * i) for i, uid in enumerate(uids))
    ordered = (() if associated is None else (associated[0],)) + tuple(uids)
    return RetrievalBundle(conversational=conversational, associated=associated,
                           direct=direct, retrieved_uids_ordered=ordered)


class TestTokenCounter:
    def test_empty_string_counts_zero(self):
        assert count_tokens("") == 0

    def test_four_chars_is_one_token(self):
        assert count_tokens("abcd") == 1

    def test_four_thousand_chars_is_one_thousand_tokens(self):
        assert count_tokens("x" * 4000) == 1000

    @given(st.text(max_size=200), st.text(max_size=200))
    def test_monotone_under_concatenation(self, a, b):
        counter = CharRatioTokenCounter()
        assert counter.count(a + b) >= counter.count(a)

    @given(st.text(max_size=300), st.integers(0, 50))
    def test_truncate_respects_limit(self, text, limit):
        counter = CharRatioTokenCounter()
        cut = truncate_to_tokens(text, limit, counter)
        assert counter.count(cut) <= limit
        assert text.startswith(cut)


class TestTokenBudget:
    def test_default_caps_sum_to_total(self):
        budget = TokenBudget()
        assert budget.static_context + budget.retrieved_memories + budget.metadata \
               + budget.history + budget.response_reserve == budget.total
        assert budget.input_total == 1500

    def test_mismatched_caps_rejected(self):
        with pytest.raises(BudgetConfigError):
            TokenBudget(static_context=100, total=2000)

    def test_nonpositive_cap_rejected(self):
        with pytest.raises(BudgetConfigError):
            TokenBudget(metadata=0, static_context=400)


class TestPromptTemplate:
    def test_default_template_has_all_sections_in_order(self):
        template = PromptTemplate.default()
        assert tuple(template.frames) == ("static", "memories", "metadata", "history")

    def test_missing_placeholder_rejected(self):
        with pytest.raises(BudgetConfigError, match="placeholders"):
            PromptTemplate("{static}\n{memories}\n{history}")

    def test_wrong_order_rejected(self):
        with pytest.raises(BudgetConfigError):
            PromptTemplate("{memories}{static}{metadata}{history}")

    def test_empty_section_drops_its_heading(self):
        template = PromptTemplate("{static}\nHEAD\n{memories}\nMETA\n{metadata}\nHIST\n{history}")
        assert template.block("memories", "") == ""
        assert template.block("memories", "body") == "\nHEAD\nbody"


class TestAffectLabels:
    @pytest.mark.parametrize("valence,arousal,expected", [
        (0.8, 0.5, ("positive", "energized")),
        (-0.5, -0.5, ("negative", "calm")),
        (0.0, 0.0, ("neutral", "moderate")),
        (-0.33, 0.33, ("neutral", "moderate")),  # boundary is inclusive
        (-0.34, 0.34, ("negative", "energized")),
    ])
    def test_bucketing(self, valence, arousal, expected):
        assert affect_labels(AffectiveState(valence, arousal)) == expected


class TestFormatMetadata:
    def test_positive_energized_label_rendering(self, small_dataset):
        bundle = bundle_for(small_dataset, ["m-004"])  # valence 0.8, arousal 0.5
        text = format_metadata(bundle, small_dataset)
        assert "positive, energized" in text
        assert "relevance 9/10" in text

    def test_no_characters_renders_none_recorded(self, small_dataset):
        bundle = bundle_for(small_dataset, ["m-003"])
        assert "characters: none recorded" in format_metadata(bundle, small_dataset)

    def test_three_memories_fit_default_cap(self, small_dataset):
        bundle = bundle_for(small_dataset, ["m-001", "m-002", "m-004"])
        text = format_metadata(bundle, small_dataset)
        assert DEFAULT_COUNTER.count(text) <= 100

    def test_character_lists_trim_from_the_back(self, small_dataset):
        bundle = bundle_for(small_dataset, ["m-002"])  # two characters
        full = format_metadata(bundle, small_dataset)
        tight_cap = DEFAULT_COUNTER.count(full) - 1
        trimmed = format_metadata(bundle, small_dataset, cap=tight_cap)
        assert "Edouard Brandt" in trimmed
        assert "Henri Varenne" not in trimmed


class TestBuildPrompt:
    def test_tiny_inputs_keep_all_sections_within_total(self, small_dataset, provider):
        ltm = build_index(small_dataset, provider)
        session = SessionMemory()
        record_exchange(session, "Tell me of Montpellier", "The light changed me.",
                        provider)
        bundle = retrieve("What of the dispute?", session, ltm, provider)
        static = StaticContext("You are a botanical illustrator of the last century.")
        prompt = build_prompt(static, bundle, small_dataset, session.exchanges,
                              TokenBudget())
        budget = TokenBudget()
        assert prompt.per_section_tokens["static"] <= budget.static_context
        assert prompt.per_section_tokens["memories"] <= budget.retrieved_memories
        assert prompt.per_section_tokens["metadata"] <= budget.metadata
        assert prompt.per_section_tokens["history"] <= budget.history
        assert prompt.input_tokens <= 1500
        assert DEFAULT_COUNTER.count(prompt.rendered) <= 1500
        assert prompt.assembly_duration_ms >= 0.0

    def test_empty_bundle_and_history_is_static_only(self, small_dataset):
        empty = RetrievalBundle(conversational=None, associated=None, direct=(),
                                retrieved_uids_ordered=())
        static = StaticContext("Persona.")
        prompt = build_prompt(static, empty, small_dataset, [], TokenBudget())
        assert prompt.rendered.strip() == "Persona."
        assert prompt.per_section_tokens["memories"] == 0
        assert prompt.per_section_tokens["metadata"] == 0
        assert prompt.per_section_tokens["history"] == 0

    def test_static_over_cap_is_a_configuration_error(self, small_dataset):
        empty = RetrievalBundle(conversational=None, associated=None, direct=(),
                                retrieved_uids_ordered=())
        static = StaticContext("x" * 2000)  # 500 tokens > 300 cap
        with pytest.raises(BudgetConfigError, match="static"):
            build_prompt(static, empty, small_dataset, [], TokenBudget())

    def _oversized_setup(self, bounds):
        # Three direct memories whose voiceovers cannot all fit 600 tokens.
        big = "A sentence that fills space and keeps going on. " * 60  # ~735 tokens
        memories = [
            make_memory("big-1", voiceover=big, relevance=5),
            make_memory("big-2", voiceover=big, relevance=5),
            make_memory("big-3", voiceover="I kept only a short note of this day.",
                        relevance=5),
        ]
        ds = MemoryDataset(memories, bounds)
        direct = (("big-3", 0.9), ("big-1", 0.8), ("big-2", 0.7))
        bundle = RetrievalBundle(conversational=None, associated=None,
                                 direct=direct,
                                 retrieved_uids_ordered=("big-3", "big-1", "big-2"))
        return ds, bundle

    def test_lowest_scoring_direct_memory_drops_first(self, bounds):
        ds, bundle = self._oversized_setup(bounds)
        prompt = build_prompt(StaticContext("P."), bundle, ds, [], TokenBudget())
        rendered = prompt.rendered
        assert "I kept only a short note" in rendered          # best survives
        assert "A sentence that fills space" not in rendered   # both big ones gone
        assert prompt.per_section_tokens["memories"] <= 600

    def test_memories_render_verbatim_or_not_at_all(self, bounds):
        ds, bundle = self._oversized_setup(bounds)
        prompt = build_prompt(StaticContext("P."), bundle, ds, [], TokenBudget())
        survivor = ds.get("big-3").voiceover
        assert survivor in prompt.rendered  # no mid-text elision

    def test_associated_drops_after_direct(self, bounds):
        # Each memory fits the 600-token section alone; the pair does not.
        memories = [
            make_memory("assoc", voiceover="Linked recollection, amply padded. " * 57),
            make_memory("dir-1", voiceover="Direct recollection, amply padded. " * 57),
        ]
        ds = MemoryDataset(memories, bounds)
        bundle = RetrievalBundle(
            conversational=None, associated=("assoc", 0.95),
            direct=(("dir-1", 0.9),),
            retrieved_uids_ordered=("assoc", "dir-1"),
        )
        prompt = build_prompt(StaticContext("P."), bundle, ds, [], TokenBudget())
        # The direct memory went first; the associated one survived.
        assert ds.get("assoc").voiceover in prompt.rendered
        assert ds.get("dir-1").voiceover not in prompt.rendered
        assert prompt.per_section_tokens["memories"] <= 600

    def test_oldest_history_drops_first(self, small_dataset, provider):
        session = SessionMemory()
        for i in range(40):
            record_exchange(session, f"question number {i} " + "padding words " * 10,
                            f"reply number {i} " + "more padding here " * 10, provider)
        empty = RetrievalBundle(conversational=None, associated=None, direct=(),
                                retrieved_uids_ordered=())
        prompt = build_prompt(StaticContext("P."), empty, small_dataset,
                              session.exchanges, TokenBudget())
        assert prompt.per_section_tokens["history"] <= 500
        assert "question number 39" in prompt.rendered   # newest kept
        assert "question number 0 " not in prompt.rendered  # oldest dropped

    def test_conversational_memory_survives_truncation(self, bounds, provider):
        big = "Space filling narrative for the budget to choke on. " * 50
        memories = [make_memory("d-1", voiceover=big),
                    make_memory("d-2", voiceover=big)]
        ds = MemoryDataset(memories, bounds)
        session = SessionMemory()
        record_exchange(session, "What was the garden like?",
                        "Walled, and kinder than the city.", provider)
        exchange = session.exchanges[0]
        bundle = RetrievalBundle(
            conversational=(exchange, 0.99), associated=None,
            direct=(("d-1", 0.9), ("d-2", 0.8)),
            retrieved_uids_ordered=("d-1", "d-2"),
        )
        prompt = build_prompt(StaticContext("P."), bundle, ds, session.exchanges,
                              TokenBudget())
        assert "Walled, and kinder than the city." in prompt.rendered
        assert prompt.per_section_tokens["memories"] <= 600

    def test_identical_inputs_render_identically(self, small_dataset, provider):
        ltm = build_index(small_dataset, provider)
        bundle = retrieve("the same query", SessionMemory(), ltm, provider)
        static = StaticContext("Persona text.")
        first = build_prompt(static, bundle, small_dataset, [], TokenBudget())
        second = build_prompt(static, bundle, small_dataset, [], TokenBudget())
        assert first.rendered == second.rendered
        assert first.per_section_tokens == second.per_section_tokens

    @settings(max_examples=60, deadline=None,
              suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(st.integers(0, 2 ** 31 - 1))
    def test_random_inputs_never_violate_caps(self, small_dataset, provider, seed):
        rng = np.random.default_rng(seed)
        ltm = build_index(small_dataset, provider)
        session = SessionMemory()
        for t in range(int(rng.integers(0, 6))):
            record_exchange(session, f"q{t} " + "w" * int(rng.integers(0, 300)),
                            f"r{t} " + "v" * int(rng.integers(0, 1200)), provider)
        query = "Q " + "x" * int(rng.integers(0, 200))
        bundle = retrieve(query, session, ltm, provider,
                          RetrievalConfig(conv_threshold=0.3))
        prompt = build_prompt(StaticContext("Persona."), bundle, small_dataset,
                              session.exchanges, TokenBudget())
        budget = TokenBudget()
        for name in ("static", "memories", "metadata", "history"):
            assert prompt.per_section_tokens[name] <= budget.cap_for(name)
        assert prompt.input_tokens <= budget.input_total
