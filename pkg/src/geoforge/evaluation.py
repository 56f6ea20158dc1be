"""End-to-end evaluation: per-method visibility tables, structural citation
recall, pluggable judged metrics, and keyword-set overlap analysis."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol, Sequence

from .answers import AnswerDocument, compute_visibility
from .corpus import Dataset, Document
from .errors import ContractError, GeoforgeError, JudgeUnconfiguredError, NoExtractablePairsError, ValidationError
from .gateway import Gateway, generate_answer
from .keyword_fixtures import KEYWORD_SETS
from .rules import AnswerSource

logger = logging.getLogger(__name__)

VANILLA = "vanilla"

# Documented score ranges per judged metric.
METRIC_RANGES: dict[str, tuple[float, float]] = {
    "kpr": (0.0, 1.0),
    "kpc": (0.0, 1.0),
    "precision": (0.0, 100.0),
    "clarity": (0.0, 100.0),
    "insight": (0.0, 100.0),
}


@dataclass(frozen=True)
class KeywordSet:
    label: str
    keywords: frozenset[str]

    def __post_init__(self):
        if not self.keywords:
            raise ValidationError(f"keyword set {self.label!r} is empty")
        normalized = frozenset(k.strip().lower() for k in self.keywords if k.strip())
        if not normalized:
            raise ValidationError(f"keyword set {self.label!r} is empty after normalization")
        object.__setattr__(self, "keywords", normalized)

    @classmethod
    def fixture(cls, name: str) -> "KeywordSet":
        try:
            return cls(label=name, keywords=KEYWORD_SETS[name])
        except KeyError:
            raise ValidationError(f"unknown keyword fixture {name!r}") from None


def jaccard_overlap(a: KeywordSet, b: KeywordSet) -> float:
    """|a n b| / |a u b| over normalized keywords."""
    if not a.keywords or not b.keywords:
        raise ContractError("keyword sets must be non-empty")
    union = a.keywords | b.keywords
    return len(a.keywords & b.keywords) / len(union)


def citation_recall(answer: AnswerDocument) -> float:
    """Fraction of sentences carrying at least one citation; 0 for an empty
    answer (vacuous)."""
    if not answer.sentences:
        return 0.0
    cited = sum(1 for s in answer.sentences if s.citations)
    return cited / len(answer.sentences)


class RubricJudge(Protocol):
    """Pluggable judge scoring a named rubric over arbitrary inputs."""

    def score(self, name: str, inputs: Mapping[str, str]) -> float: ...


def judged_metric(name: str, inputs: Mapping[str, str], judge: RubricJudge | None) -> float:
    """Dispatch one named rubric to the judge and validate its range."""
    if name not in METRIC_RANGES:
        raise ValidationError(f"unknown judged metric {name!r}")
    if judge is None:
        raise JudgeUnconfiguredError(f"judge unconfigured for metric {name!r}")
    score = judge.score(name, inputs)
    low, high = METRIC_RANGES[name]
    if not low <= score <= high:
        raise ValidationError(f"{name} score {score} outside [{low}, {high}]")
    return score


@dataclass(frozen=True)
class RewriteMethod:
    """A named document-rewriting strategy applied to the target document."""

    name: str
    apply: Callable[[Document], Document]

    @classmethod
    def identity(cls, name: str = VANILLA) -> "RewriteMethod":
        return cls(name=name, apply=lambda doc: doc)


@dataclass(frozen=True)
class QueryRow:
    query_id: str
    method: str
    word: float
    pos: float
    overall: float
    recall: float
    judged: dict[str, float] = field(default_factory=dict)


@dataclass
class EvalReport:
    methods: list[str]
    rows: list[QueryRow]
    means: dict[str, dict[str, float]]
    skipped: dict[str, int]
    metadata: dict[str, object]

    def to_json(self) -> str:
        obj = {
            "methods": self.methods,
            "means": self.means,
            "skipped": self.skipped,
            "rows": [
                {
                    "query_id": r.query_id,
                    "method": r.method,
                    "word": r.word,
                    "pos": r.pos,
                    "overall": r.overall,
                    "recall": r.recall,
                    "judged": r.judged,
                }
                for r in self.rows
            ],
            "metadata": self.metadata,
        }
        return json.dumps(obj, ensure_ascii=False, sort_keys=True, indent=2) + "\n"

    def to_table(self) -> str:
        """Fixed-width table, one row per method: Word | Pos | Overall first."""
        judged_names = sorted({name for row in self.rows for name in row.judged})
        headers = ["Method", "Word", "Pos", "Overall", "Recall", *judged_names, "Skipped"]
        name_width = max([len(h) for h in headers[:1]] + [len(m) for m in self.methods]) + 2
        lines = [
            headers[0].ljust(name_width) + "".join(h.rjust(10) for h in headers[1:])
        ]
        for method in self.methods:
            mean = self.means.get(method, {})
            cells = [
                f"{mean.get('word', float('nan')):.2f}",
                f"{mean.get('pos', float('nan')):.2f}",
                f"{mean.get('overall', float('nan')):.2f}",
                f"{mean.get('recall', float('nan')):.2f}",
            ]
            cells += [f"{mean.get(name, float('nan')):.2f}" for name in judged_names]
            cells.append(str(self.skipped.get(method, 0)))
            lines.append(method.ljust(name_width) + "".join(c.rjust(10) for c in cells))
        return "\n".join(lines) + "\n"


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def run_evaluation(
    dataset: Dataset,
    methods: Sequence[RewriteMethod],
    gateway: Gateway,
    engine: AnswerSource | None = None,
    judge: RubricJudge | None = None,
    judged_metrics: Sequence[str] = (),
    metadata: Mapping[str, object] | None = None,
    concurrency: int = 1,
) -> EvalReport:
    """Score each method's rewritten target document over the dataset.

    The unmodified-candidates baseline always runs first so reports from
    different method lists share an identical baseline row. Zero-citation
    answers are excluded from means and counted per method; other per-query
    failures are logged and the run continues.
    """
    if not dataset.records:
        raise ContractError("dataset is empty")
    if judged_metrics and judge is None:
        raise JudgeUnconfiguredError("judged metrics requested without a judge")
    if engine is None:
        engine = lambda query, candidates: generate_answer(gateway, query, candidates)

    all_methods = [RewriteMethod.identity()] + [m for m in methods if m.name != VANILLA]
    method_names = [m.name for m in all_methods]
    if len(set(method_names)) != len(method_names):
        raise ValidationError("method names must be unique")

    def evaluate_one(record, method: RewriteMethod):
        candidates = list(record.candidates)
        candidates[record.target_index] = method.apply(record.target)
        answer = engine(record.query, candidates)
        if all(not s.citations for s in answer.sentences):
            return None
        score = compute_visibility(answer, len(candidates))[record.target_index]
        judged = {
            name: judged_metric(name, {"query": record.query, "answer": answer.raw}, judge)
            for name in judged_metrics
        }
        return QueryRow(
            query_id=record.id,
            method=method.name,
            word=score.word,
            pos=score.pos,
            overall=score.overall,
            recall=citation_recall(answer),
            judged=judged,
        )

    tasks = [(record, method) for method in all_methods for record in dataset.records]
    if concurrency > 1:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            futures = [pool.submit(evaluate_one, record, method) for record, method in tasks]
            outcomes = []
            for (record, method), future in zip(tasks, futures):
                try:
                    outcomes.append((record, method, future.result(), None))
                except GeoforgeError as exc:
                    outcomes.append((record, method, None, exc))
    else:
        outcomes = []
        for record, method in tasks:
            try:
                outcomes.append((record, method, evaluate_one(record, method), None))
            except GeoforgeError as exc:
                outcomes.append((record, method, None, exc))

    rows: list[QueryRow] = []
    skipped = {name: 0 for name in method_names}
    failures = 0
    for record, method, row, error in outcomes:
        if error is not None:
            failures += 1
            logger.warning("query %s / method %s failed: %s", record.id, method.name, error)
        elif row is None:
            skipped[method.name] += 1
        else:
            rows.append(row)

    if not rows:
        raise NoExtractablePairsError("every query was skipped: no citations anywhere")

    means: dict[str, dict[str, float]] = {}
    for name in method_names:
        method_rows = [r for r in rows if r.method == name]
        if not method_rows:
            continue
        entry = {
            "word": _mean([r.word for r in method_rows]),
            "pos": _mean([r.pos for r in method_rows]),
            "overall": _mean([r.overall for r in method_rows]),
            "recall": _mean([r.recall for r in method_rows]),
        }
        for metric in judged_metrics:
            entry[metric] = _mean([r.judged[metric] for r in method_rows])
        means[name] = entry

    meta = dict(metadata or {})
    meta.setdefault("failed_pairs", failures)
    return EvalReport(methods=method_names, rows=rows, means=means, skipped=skipped, metadata=meta)
