"""Shared fixtures: deterministic mock backends and prompt-slot parsers."""

from __future__ import annotations

import hashlib
import json
import re

import pytest

from geoforge.corpus import Dataset, Document, QueryRecord, Split
from geoforge.gateway import ChatRequest, Gateway, MockBackend, Transcript

_MERGER_SLOT = re.compile(r"\[Original Rules\]\n(.*)\n\n\[Merged Rules JSON\]", re.DOTALL)
_FILTER_SLOT = re.compile(r"\[Input Rule\]\n\"(.*)\"\n\n\[Output JSON\]", re.DOTALL)
_VERIFIER_SLOT = re.compile(r"Quality Rules:\n(.*?)\n\n---\n\nText Document:\n(.*)$", re.DOTALL)


def merger_input(prompt: str) -> list[str]:
    match = _MERGER_SLOT.search(prompt)
    assert match, "merger prompt missing the rules slot"
    return json.loads(match.group(1))


def filter_input(prompt: str) -> str:
    match = _FILTER_SLOT.search(prompt)
    assert match, "filter prompt missing the rule slot"
    return match.group(1)


def verifier_input(prompt: str) -> tuple[list[str], str]:
    match = _VERIFIER_SLOT.search(prompt)
    assert match, "verifier prompt missing its slots"
    return json.loads(match.group(1)), match.group(2)


def stage_responder(**handlers):
    """Dispatch mock responses by request tag; unexpected stages fail loudly."""

    def respond(request: ChatRequest) -> str:
        handler = handlers.get(request.tag)
        if handler is None:
            raise AssertionError(f"no mock handler for stage {request.tag!r}")
        return handler(request)

    return respond


def make_gateway(responder, transcript: Transcript | None = None, **kwargs) -> Gateway:
    return Gateway(MockBackend(responder), transcript=transcript, **kwargs)


def short_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:8]


def make_record(record_id: str, query: str, texts: list[str], target_index: int = 0) -> QueryRecord:
    candidates = tuple(Document(id=f"{record_id}-d{i}", text=t) for i, t in enumerate(texts))
    return QueryRecord(
        id=record_id,
        query=query,
        candidates=candidates,
        target_index=target_index,
        num_candidates=len(texts),
    )


@pytest.fixture
def small_dataset() -> Dataset:
    records = tuple(
        make_record(
            f"q{i}",
            f"how do {topic} work",
            [f"{topic} document number {j} with useful body text" for j in range(5)],
        )
        for i, topic in enumerate(["engines", "batteries", "antennas"])
    )
    return Dataset(records=records, split=Split.TRAIN)
