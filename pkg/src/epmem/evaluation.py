"""Reference-free retrieval/generation metrics and the pairwise judge.

Faithfulness is the share of an answer's extracted claims the contexts
support; context relevance the share of context sentences relevant to
the question; answer relevance the mean embedding similarity between
questions regenerated from the answer and the original question.  The
pairwise judge runs every comparison twice with the answers' positions
inverted and only keeps order-consistent verdicts.
"""

from __future__ import annotations

import logging
import math
import re
import statistics
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Sequence

from .index import cosine_similarity
from .prompts import DEFAULT_COUNTER, TokenCounter
from .providers import EmbeddingProvider, TextGenProvider

logger = logging.getLogger(__name__)

JUDGE_MAX_TOKENS = 400
METRIC_MAX_TOKENS = 600
DEFAULT_GENERATED_QUESTIONS = 3
ANSWER_TOKEN_LIMIT = 500  # verbosity-bias mitigation: both answers capped


class EvaluationError(ValueError):
    pass


def _template(name: str) -> str:
    return (resources.files("epmem") / f"data/templates/{name}.txt").read_text("utf-8")


_VERDICT_RE = re.compile(r"VERDICT:\s*([A-Z]+)", re.IGNORECASE)
_NUMBERED_RE = re.compile(r"^\s*\d+[.)]\s*(.+)$")


def _final_verdict(reply: str, allowed: set[str]) -> Optional[str]:
    """Last VERDICT marker in the reply, or None if absent/out of set."""
    found = _VERDICT_RE.findall(reply)
    if not found:
        return None
    verdict = found[-1].upper()
    return verdict if verdict in allowed else None


def _numbered_lines(reply: str) -> list[str]:
    items = []
    for line in reply.splitlines():
        match = _NUMBERED_RE.match(line)
        if match:
            items.append(match.group(1).strip())
    return items


def extract_claims(answer: str, provider: TextGenProvider) -> list[str]:
    reply = provider.complete(_template("claims").format(answer=answer), answer,
                              METRIC_MAX_TOKENS)
    if reply.strip().upper() == "NONE":
        return []
    return _numbered_lines(reply)


def faithfulness(question: str, answer: str, contexts: Sequence[str],
                 provider: TextGenProvider) -> Optional[float]:
    """Proportion of the answer's claims supported by the contexts.

    Returns None (score absent, excluded from aggregates) when no claims
    can be extracted from a non-empty answer.
    """
    if not answer.strip():
        raise EvaluationError("answer is empty; no claims to check")
    claims = extract_claims(answer, provider)
    if not claims:
        logger.warning("no extractable claims for question %r; score absent", question[:60])
        return None
    joined = "\n\n".join(contexts)
    supported = 0
    for claim in claims:
        reply = provider.complete(
            _template("claim_support").format(claim=claim, contexts=joined),
            claim, METRIC_MAX_TOKENS,
        )
        verdict = _final_verdict(reply, {"SUPPORTED", "UNSUPPORTED"})
        if verdict is None:
            raise EvaluationError(f"unparseable support verdict: {reply!r}")
        if verdict == "SUPPORTED":
            supported += 1
    return supported / len(claims)


def answer_relevance(question: str, answer: str, gen: TextGenProvider,
                     emb: EmbeddingProvider,
                     n: int = DEFAULT_GENERATED_QUESTIONS) -> float:
    """Mean cosine similarity between n questions regenerated from the
    answer and the original question, each similarity floored at 0."""
    if n < 1:
        raise EvaluationError(f"n must be >= 1, got {n}")
    reply = gen.complete(_template("question_gen").format(n=n, answer=answer),
                         answer, METRIC_MAX_TOKENS)
    generated = _numbered_lines(reply)[:n]
    if not generated:
        raise EvaluationError(f"question generation produced nothing: {reply!r}")
    original_vec = emb.embed(question)
    sims = [max(0.0, cosine_similarity(emb.embed(g), original_vec)) for g in generated]
    return sum(sims) / len(sims)


_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+(?=[A-ZÀ-Þ])")


def split_sentences(text: str) -> list[str]:
    """Terminal punctuation followed by whitespace and an uppercase letter
    starts a new sentence; pinned so relevance ratios are reproducible."""
    return [s.strip() for s in _SENTENCE_SPLIT_RE.split(text) if s.strip()]


def context_relevance(question: str, contexts: Sequence[str],
                      provider: TextGenProvider) -> float:
    """Share of context sentences the provider marks relevant."""
    if not contexts:
        raise EvaluationError("contexts are empty")
    sentences = [s for ctx in contexts for s in split_sentences(ctx)]
    if not sentences:
        raise EvaluationError("contexts contain no sentences")
    relevant = 0
    for sentence in sentences:
        reply = provider.complete(
            _template("sentence_relevance").format(question=question, sentence=sentence),
            sentence, METRIC_MAX_TOKENS,
        )
        verdict = _final_verdict(reply, {"RELEVANT", "IRRELEVANT"})
        if verdict is None:
            raise EvaluationError(f"unparseable relevance verdict: {reply!r}")
        if verdict == "RELEVANT":
            relevant += 1
    return relevant / len(sentences)


@dataclass(frozen=True)
class JudgeVerdict:
    winner: Optional[str]  # "A" | "B" | "T"; None when unparseable
    raw_reply: str


@dataclass(frozen=True)
class PairVerdict:
    round1: JudgeVerdict
    round2_inverted: JudgeVerdict
    valid: bool
    final: Optional[str]  # "system1" | "system2" | "tie"


_POSITION_TO_SYSTEM = {
    # round 1 presents (sys1 as A, sys2 as B); round 2 is inverted
    1: {"A": "system1", "B": "system2", "T": "tie"},
    2: {"A": "system2", "B": "system1", "T": "tie"},
}


def pairwise_judge(question: str, answer_sys1: str, answer_sys2: str,
                   judge: TextGenProvider,
                   counter: TokenCounter = DEFAULT_COUNTER) -> PairVerdict:
    """Two-round position-inverted comparison.

    A verdict counts only when both rounds attribute the win to the same
    underlying system (or both call a tie); anything else — including an
    unparseable reply — is invalid and keeps the raw reply for audit.
    """
    for label, answer in (("system1", answer_sys1), ("system2", answer_sys2)):
        tokens = counter.count(answer)
        if tokens > ANSWER_TOKEN_LIMIT:
            raise EvaluationError(
                f"{label} answer counts {tokens} tokens; limit is {ANSWER_TOKEN_LIMIT}"
            )

    def ask(a: str, b: str) -> JudgeVerdict:
        prompt = _template("judge").format(question=question, answer_a=a, answer_b=b)
        reply = judge.complete(prompt, question, JUDGE_MAX_TOKENS)
        return JudgeVerdict(_final_verdict(reply, {"A", "B", "T"}), reply)

    round1 = ask(answer_sys1, answer_sys2)
    round2 = ask(answer_sys2, answer_sys1)
    if round1.winner is None or round2.winner is None:
        return PairVerdict(round1, round2, valid=False, final=None)
    mapped1 = _POSITION_TO_SYSTEM[1][round1.winner]
    mapped2 = _POSITION_TO_SYSTEM[2][round2.winner]
    if mapped1 != mapped2:
        return PairVerdict(round1, round2, valid=False, final=None)
    return PairVerdict(round1, round2, valid=True, final=mapped1)


def aggregate_scores(scores: Sequence[Optional[float]]) -> Optional[float]:
    """Mean over defined scores; absent scores are excluded, never
    zero-filled.  None when nothing is defined."""
    defined = [s for s in scores if s is not None]
    return sum(defined) / len(defined) if defined else None


@dataclass(frozen=True)
class RagasScores:
    faithfulness: Optional[float]
    answer_relevance: Optional[float]
    context_relevance: Optional[float]

    def to_dict(self) -> dict:
        return {
            "faithfulness": self.faithfulness,
            "answer_relevance": self.answer_relevance,
            "context_relevance": self.context_relevance,
        }


@dataclass(frozen=True)
class LatencyReport:
    samples: tuple[float, ...]
    mean: Optional[float]
    p50: Optional[float]
    p95: Optional[float]
    count: int
    reference_ms: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "samples": list(self.samples),
            "mean_ms": self.mean,
            "p50_ms": self.p50,
            "p95_ms": self.p95,
            "count": self.count,
            "reference_ms": self.reference_ms,
        }


def _nearest_rank(sorted_samples: Sequence[float], quantile: float) -> float:
    rank = max(1, math.ceil(quantile * len(sorted_samples)))
    return sorted_samples[rank - 1]


def summarize_latencies(samples: Sequence[float],
                        reference_ms: Optional[float] = None) -> LatencyReport:
    samples = tuple(samples)
    if not samples:
        return LatencyReport((), None, None, None, 0, reference_ms)
    ordered = sorted(samples)
    return LatencyReport(
        samples=samples,
        mean=statistics.fmean(samples),
        p50=_nearest_rank(ordered, 0.50),
        p95=_nearest_rank(ordered, 0.95),
        count=len(samples),
        reference_ms=reference_ms,
    )


def latency_harness(base_url: str, queries: Sequence[str], warmup: int = 3,
                    client=None, reference_ms: Optional[float] = None) -> LatencyReport:
    """Drive a running dialogue service and collect per-turn prompt build
    times (query receipt to final prompt delivery, as the service reports
    them).  The first ``warmup`` queries are discarded.
    """
    import httpx

    own_client = client is None
    if client is None:
        client = httpx.Client(base_url=base_url, timeout=60.0)
    try:
        resp = client.post("/sessions", json={})
        resp.raise_for_status()
        session_id = resp.json()["session_id"]
        samples: list[float] = []
        for i, query in enumerate(queries):
            resp = client.post(f"/sessions/{session_id}/chat", json={"query": query})
            resp.raise_for_status()
            if i >= warmup:
                samples.append(float(resp.json()["timing"]["prompt_total_ms"]))
        return summarize_latencies(samples, reference_ms)
    finally:
        if own_client:
            client.close()
