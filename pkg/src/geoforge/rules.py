"""Four-stage preference-rule extraction: explain, extract, merge, filter.

Merging is hierarchical: insights are greedily packed in order into chunks
under a token budget, each chunk is merged by one LLM call, levels repeat
until the surviving set fits the budget, then one final consolidation call
runs. A level that fails to shrink the total token estimate aborts with a
divergence error.
"""

from __future__ import annotations

import json
import logging
import re
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

from .answers import AnswerDocument, compute_visibility, select_extreme_pair
from .corpus import Dataset, Document
from .errors import (
    ContractError,
    EmptyResponseError,
    GeoforgeError,
    MalformedOutputError,
    MergeDivergenceError,
    NoExtractablePairsError,
    ValidationError,
)
from .gateway import Gateway, estimate_tokens, generate_answer
from .prompts import (
    render_explainer_prompt,
    render_extractor_prompt,
    render_filter_prompt,
    render_merger_prompt,
)

logger = logging.getLogger(__name__)

DEFAULT_CHUNK_TOKEN_LIMIT = 12000

PAIR_LABELS = ("Document A", "Document B")

_FENCE_RE = re.compile(r"^\s*```[a-zA-Z0-9_-]*\s*\n?(.*?)\n?\s*```\s*$", re.DOTALL)


class RuleStage(str, Enum):
    MERGED = "merged"
    FILTERED = "filtered"


@dataclass(frozen=True)
class Explanation:
    """One pairwise comparison; winner/loser are positions in the compared pair."""

    query_id: str
    winner: int
    loser: int
    text: str

    def __post_init__(self):
        if self.winner == self.loser:
            raise ValidationError("explanation winner and loser must differ")
        if not self.text.strip():
            raise ValidationError("explanation text is empty")

    @property
    def winner_label(self) -> str:
        return PAIR_LABELS[self.winner]


@dataclass(frozen=True)
class Insight:
    text: str
    origin: str

    def __post_init__(self):
        if not self.text or self.text != self.text.strip():
            raise ValidationError("insight text must be non-empty and trimmed")


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[str, ...]
    stage: RuleStage
    lineage: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(list(self.rules), ensure_ascii=False, indent=2) + "\n"


def normalize_rule_key(text: str) -> str:
    return " ".join(unicodedata.normalize("NFC", text).split()).casefold()


def unique_and_sort(texts: Sequence[str]) -> list[str]:
    """Canonical order: lexicographic on NFC text, deduplicated by
    case/whitespace-insensitive key. Idempotent."""
    ordered = sorted(unicodedata.normalize("NFC", t) for t in texts)
    out: list[str] = []
    seen: set[str] = set()
    for text in ordered:
        key = normalize_rule_key(text)
        if key not in seen:
            seen.add(key)
            out.append(text)
    return out


def strip_code_fences(text: str) -> str:
    match = _FENCE_RE.match(text)
    return match.group(1) if match else text


def parse_string_array(raw: str, what: str) -> list[str]:
    """Parse a top-level JSON array of strings, with one fence-strip repair."""
    for candidate in (raw, strip_code_fences(raw)):
        try:
            parsed = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if isinstance(parsed, list) and all(isinstance(item, str) for item in parsed):
            return parsed
        break
    raise MalformedOutputError(f"malformed {what} output: expected a JSON array of strings", raw=raw)


def explain_pair(
    gateway: Gateway,
    query: str,
    doc_a: Document,
    doc_b: Document,
    winner: int,
    query_id: str = "",
) -> Explanation:
    """Ask the explainer why the winning document was preferred.

    `winner` is 0 if doc_a won, 1 if doc_b won.
    """
    if winner not in (0, 1):
        raise ContractError("winner must identify one of the two documents (0 or 1)")
    prompt = render_explainer_prompt(query, doc_a.text, doc_b.text, PAIR_LABELS[winner])
    text = gateway.run_stage("explainer", prompt)
    if not text.strip():
        raise EmptyResponseError("empty explanation")
    return Explanation(query_id=query_id, winner=winner, loser=1 - winner, text=text)


def extract_insights(gateway: Gateway, explanation: Explanation) -> list[Insight]:
    """Distill one explanation into zero or more general rule sentences."""
    prompt = render_extractor_prompt(explanation.text, explanation.winner_label)
    raw = gateway.run_stage("extractor", prompt)
    texts = parse_string_array(raw, "extractor")
    return [Insight(text=t.strip(), origin=explanation.query_id) for t in texts if t.strip()]


def _total_tokens(texts: Sequence[str]) -> int:
    return sum(estimate_tokens(t) for t in texts)


def chunk_by_token_limit(texts: Sequence[str], limit: int) -> list[list[str]]:
    """Greedy in-order packing; each chunk's estimated tokens stay <= limit."""
    chunks: list[list[str]] = []
    current: list[str] = []
    current_tokens = 0
    for text in texts:
        tokens = estimate_tokens(text)
        if tokens > limit:
            raise ContractError(f"single text exceeds chunk token limit ({tokens} > {limit})")
        if current and current_tokens + tokens > limit:
            chunks.append(current)
            current = []
            current_tokens = 0
        current.append(text)
        current_tokens += tokens
    if current:
        chunks.append(current)
    return chunks


def _merge_chunk(gateway: Gateway, texts: Sequence[str], chunk_id: str) -> list[str]:
    raw = gateway.run_stage("merger", render_merger_prompt(texts))
    try:
        return parse_string_array(raw, "merger")
    except MalformedOutputError as exc:
        raise MalformedOutputError(f"malformed merger output for chunk {chunk_id}", raw=exc.raw) from exc


def hierarchical_merge(
    insights: Sequence[Insight],
    chunk_token_limit: int,
    gateway: Gateway,
    concurrency: int = 1,
) -> RuleSet:
    """Reduce insights to a merged RuleSet under the token budget.

    Lineage maps each surviving rule to the chunk ids that transitively fed
    the call producing it; with a single final consolidation call that is the
    full chunk-id set of the run.
    """
    texts = unique_and_sort([insight.text for insight in insights])
    if not texts:
        return RuleSet(rules=(), stage=RuleStage.MERGED, lineage={})

    all_chunk_ids: list[str] = []
    level = 0
    while _total_tokens(texts) > chunk_token_limit:
        before_tokens = _total_tokens(texts)
        chunks = chunk_by_token_limit(texts, chunk_token_limit)
        chunk_ids = [f"L{level}.C{i}" for i in range(len(chunks))]
        if concurrency > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=concurrency) as pool:
                merged_lists = list(pool.map(lambda pair: _merge_chunk(gateway, pair[0], pair[1]), zip(chunks, chunk_ids)))
        else:
            merged_lists = [_merge_chunk(gateway, chunk, cid) for chunk, cid in zip(chunks, chunk_ids)]
        all_chunk_ids.extend(chunk_ids)
        merged: list[str] = []
        for result in merged_lists:
            merged.extend(result)
        texts = unique_and_sort(merged)
        after_tokens = _total_tokens(texts)
        if after_tokens >= before_tokens:
            raise MergeDivergenceError(
                f"merge level {level} did not shrink ({before_tokens} -> {after_tokens} tokens)"
            )
        level += 1

    final = unique_and_sort(_merge_chunk(gateway, texts, "final"))
    lineage_ids = tuple(all_chunk_ids + ["final"])
    return RuleSet(
        rules=tuple(final),
        stage=RuleStage.MERGED,
        lineage={rule: lineage_ids for rule in final},
    )


def filter_rule(gateway: Gateway, rule: str) -> str | None:
    """Drop or trim the query-dependent parts of one rule.

    Returns None when the whole rule was query-bound (the filter answered
    with an empty string).
    """
    if not rule.strip():
        raise ContractError("rule is empty")
    raw = gateway.run_stage("filter", render_filter_prompt(rule))
    for candidate in (raw, strip_code_fences(raw)):
        try:
            parsed = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if isinstance(parsed, dict) and "modified rule" in parsed and isinstance(parsed["modified rule"], str):
            modified = parsed["modified rule"].strip()
            return modified or None
        break
    raise MalformedOutputError("malformed filter output: expected {\"modified rule\": ...}", raw=raw)


AnswerSource = Callable[[str, Sequence[Document]], AnswerDocument]


@dataclass
class RuleExtractionRun:
    """Outcome of extract_rules: the rule set plus the fail-soft run report."""

    rule_set: RuleSet
    skipped_query_ids: list[str]
    errors: dict[str, str]
    insight_count: int


def _query_insights(
    gateway: Gateway,
    record,
    engine: AnswerSource,
) -> list[Insight] | None:
    """Answer, score, pair, explain, extract for one query. None: no citations."""
    answer = engine(record.query, record.candidates)
    if all(not s.citations for s in answer.sentences):
        return None
    scores = compute_visibility(answer, len(record.candidates))
    winner_idx, loser_idx = select_extreme_pair(scores)
    explanation = explain_pair(
        gateway,
        record.query,
        record.candidates[winner_idx],
        record.candidates[loser_idx],
        winner=0,
        query_id=record.id,
    )
    return extract_insights(gateway, explanation)


def extract_rules(
    dataset: Dataset,
    gateway: Gateway,
    chunk_token_limit: int = DEFAULT_CHUNK_TOKEN_LIMIT,
    engine: AnswerSource | None = None,
    concurrency: int = 1,
) -> RuleExtractionRun:
    """Run the full pipeline over a dataset and return the filtered rule set.

    Per-query stage failures are collected without aborting the run; merge or
    filter failures abort (a corrupted merge poisons everything downstream).
    Queries whose answers cite nothing are skipped and counted.
    """
    if not dataset.records:
        raise ContractError("dataset is empty")
    if engine is None:
        engine = lambda query, candidates: generate_answer(gateway, query, candidates)

    skipped: list[str] = []
    errors: dict[str, str] = {}
    insights: list[Insight] = []

    def run_one(record):
        return _query_insights(gateway, record, engine)

    if concurrency > 1:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            futures = [(record, pool.submit(run_one, record)) for record in dataset.records]
            outcomes = []
            for record, future in futures:
                try:
                    outcomes.append((record, future.result(), None))
                except GeoforgeError as exc:
                    outcomes.append((record, None, exc))
    else:
        outcomes = []
        for record in dataset.records:
            try:
                outcomes.append((record, run_one(record), None))
            except GeoforgeError as exc:
                outcomes.append((record, None, exc))

    for record, result, error in outcomes:
        if error is not None:
            errors[record.id] = str(error)
            logger.warning("query %s failed: %s", record.id, error)
        elif result is None:
            skipped.append(record.id)
        else:
            insights.extend(result)

    if len(skipped) + len(errors) == len(dataset.records):
        raise NoExtractablePairsError("no extractable pairs: every query was skipped or failed")

    merged = hierarchical_merge(insights, chunk_token_limit, gateway, concurrency=concurrency)

    kept_rules: list[tuple[str, tuple[str, ...]]] = []
    for rule in merged.rules:
        kept = filter_rule(gateway, rule)
        if kept is not None:
            kept_rules.append((kept, merged.lineage.get(rule, ())))

    final_rules = unique_and_sort([text for text, _ in kept_rules])
    lineage_by_key: dict[str, set[str]] = {}
    for text, sources in kept_rules:
        lineage_by_key.setdefault(normalize_rule_key(text), set()).update(sources)
    lineage = {rule: tuple(sorted(lineage_by_key[normalize_rule_key(rule)])) for rule in final_rules}
    rule_set = RuleSet(rules=tuple(final_rules), stage=RuleStage.FILTERED, lineage=lineage)
    return RuleExtractionRun(
        rule_set=rule_set,
        skipped_query_ids=skipped,
        errors=errors,
        insight_count=len(insights),
    )
