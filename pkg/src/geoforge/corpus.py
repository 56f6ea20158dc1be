"""Query datasets: loading, validation, serialization, and commercial-query curation.

Dataset files are line-delimited JSON (one record per line, UTF-8) with fields
id, query, candidates (array of {id, text}), target_index.
"""

from __future__ import annotations

import json
import math
import random
import unicodedata
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable

from .errors import DatasetParseError, EmptyCurationError, ValidationError

DEFAULT_CANDIDATES = 5
MAX_QUERY_CHARS = 400
TRAIN_FRACTION = 4 / 5
SPLIT_POLICY = "seeded-random"


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"


class SourceTag(str, Enum):
    ORIGINAL = "original"
    REWRITTEN = "rewritten"
    INJECTED = "injected"


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    source_tag: SourceTag | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise ValidationError(f"document {self.id!r}: text is empty")


@dataclass(frozen=True)
class QueryRecord:
    id: str
    query: str
    candidates: tuple[Document, ...]
    target_index: int
    num_candidates: int = DEFAULT_CANDIDATES

    def __post_init__(self):
        if not self.query.strip():
            raise ValidationError(f"record {self.id!r}: query is empty")
        if len(self.candidates) != self.num_candidates:
            raise ValidationError(
                f"record {self.id!r}: expected {self.num_candidates} candidates, "
                f"got {len(self.candidates)}"
            )
        if not 0 <= self.target_index < len(self.candidates):
            raise ValidationError(
                f"record {self.id!r}: target_index {self.target_index} out of range"
            )

    @property
    def target(self) -> Document:
        return self.candidates[self.target_index]


@dataclass(frozen=True)
class Dataset:
    records: tuple[QueryRecord, ...]
    split: Split = Split.TRAIN

    def __post_init__(self):
        seen: set[str] = set()
        for record in self.records:
            if record.id in seen:
                raise ValidationError(f"duplicate record id {record.id!r}")
            seen.add(record.id)

    def __len__(self) -> int:
        return len(self.records)


def _record_from_obj(obj: dict, num_candidates: int) -> QueryRecord:
    try:
        record_id = obj["id"]
        query = obj["query"]
        raw_candidates = obj["candidates"]
        target_index = obj["target_index"]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"missing field: {exc}") from exc
    candidates = tuple(
        Document(id=c["id"], text=c["text"], source_tag=SourceTag(c["source_tag"]) if c.get("source_tag") else None)
        for c in raw_candidates
    )
    return QueryRecord(
        id=record_id,
        query=query,
        candidates=candidates,
        target_index=target_index,
        num_candidates=num_candidates,
    )


def load_dataset(path: str | Path, split: Split = Split.TRAIN, num_candidates: int = DEFAULT_CANDIDATES) -> Dataset:
    """Load and validate a line-delimited dataset file.

    Candidate order is preserved exactly as on disk. Any malformed line or
    invariant violation aborts the whole load; partial loads are impossible.
    """
    records = []
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetParseError(f"invalid JSON: {exc.msg}", line_number) from exc
            if not isinstance(obj, dict):
                raise DatasetParseError("record is not an object", line_number)
            records.append(_record_from_obj(obj, num_candidates))
    return Dataset(records=tuple(records), split=split)


def serialize_record(record: QueryRecord) -> str:
    """Canonical one-line JSON form; loading then re-serializing is byte-stable."""
    obj = {
        "id": record.id,
        "query": record.query,
        "candidates": [
            {"id": c.id, "text": c.text, **({"source_tag": c.source_tag.value} if c.source_tag else {})}
            for c in record.candidates
        ],
        "target_index": record.target_index,
    }
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def write_dataset(dataset: Dataset, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in dataset.records:
            handle.write(serialize_record(record) + "\n")


def _normalize_query(query: str) -> str:
    return unicodedata.normalize("NFC", query).strip()


def curate_commercial_queries(
    raw_queries: Iterable[str],
    seed: int,
    relevance_predicate: Callable[[str], bool] | None = None,
) -> tuple[list[str], list[str]]:
    """Deduplicate, length-filter, and split raw queries 4:1 train:test.

    Deduplication is exact match after NFC normalization and trim; queries
    longer than 400 Unicode scalar values are dropped. `relevance_predicate`
    is the hook for external relevance filtering (default: accept all).
    The split shuffles the canonically sorted survivors under `seed`, so the
    result depends only on the surviving query set — re-curating its own
    output changes nothing.
    """
    survivors: list[str] = []
    seen: set[str] = set()
    for raw in raw_queries:
        query = _normalize_query(raw)
        if not query or query in seen:
            continue
        seen.add(query)
        if len(query) > MAX_QUERY_CHARS:
            continue
        if relevance_predicate is not None and not relevance_predicate(query):
            continue
        survivors.append(query)
    if not survivors:
        raise EmptyCurationError("no queries survived curation")

    ordered = sorted(survivors)
    random.Random(seed).shuffle(ordered)
    train_size = math.ceil(TRAIN_FRACTION * len(ordered))
    return ordered[:train_size], ordered[train_size:]
