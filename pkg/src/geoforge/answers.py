"""Citation parsing and visibility scoring for generative-engine answers.

An answer is segmented into sentences (terminators . ! ? followed by
whitespace or end of text, guarded by a fixed abbreviation list), bracketed
citation indices are collected per sentence, and per-candidate visibility is
computed as three 0-100 shares: word-count share, position-decay share, and
their mean. All three sum to 100 across candidates whenever anything is cited.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

from .errors import ContractError

# Both [1][2] and the discouraged [1, 2] forms are accepted.
CITATION_RE = re.compile(r"\[\s*\d+(?:\s*,\s*\d+)*\s*\]")
_MARKER_WITH_SPACE_RE = re.compile(r"\s*\[\s*\d+(?:\s*,\s*\d+)*\s*\]")

_TERMINATORS = ".!?"

# Bit-exact abbreviation guard list: a period directly after one of these
# tokens (case-insensitive) never ends a sentence. Single letters are also
# guarded to keep initials like "J. Smith" intact.
ABBREVIATIONS = frozenset(
    [
        "al", "approx", "cf", "dept", "dr", "e.g", "ed", "eds", "eq", "est",
        "et", "etc", "fig", "i.e", "inc", "jr", "ltd", "mr", "mrs", "ms",
        "no", "p", "pp", "prof", "rev", "sr", "st", "vol", "vs",
    ]
)


@dataclass(frozen=True)
class Sentence:
    text: str
    word_count: int
    citations: frozenset[int]
    start: int
    end: int


@dataclass(frozen=True)
class AnswerDocument:
    raw: str
    sentences: tuple[Sentence, ...]
    num_candidates: int
    dropped_citations: int = 0

    def reconstructed(self) -> str:
        """Rebuild the raw text from sentence spans and the gaps between them."""
        pieces = []
        cursor = 0
        for sentence in self.sentences:
            pieces.append(self.raw[cursor : sentence.start])
            pieces.append(self.raw[sentence.start : sentence.end])
            cursor = sentence.end
        pieces.append(self.raw[cursor:])
        return "".join(pieces)


@dataclass(frozen=True)
class VisibilityScore:
    word: float
    pos: float
    overall: float

    @property
    def vis(self) -> float:
        return self.word + self.pos + self.overall


def _token_before(text: str, index: int) -> str:
    """Word (letters/digits/inner periods) immediately preceding text[index]."""
    j = index
    while j > 0 and not text[j - 1].isspace() and text[j - 1] not in "([{\"'":
        j -= 1
    return text[j:index].rstrip(".")


def _is_guarded_period(text: str, index: int) -> bool:
    token = _token_before(text, index)
    if not token:
        return False
    if len(token) == 1 and token.isalpha():
        return True
    return token.casefold() in ABBREVIATIONS


def _sentence_spans(text: str) -> list[tuple[int, int]]:
    spans: list[tuple[int, int]] = []
    n = len(text)
    i = 0
    while i < n and text[i].isspace():
        i += 1
    start = i
    while i < n:
        ch = text[i]
        if ch in _TERMINATORS:
            j = i
            while j + 1 < n and text[j + 1] in _TERMINATORS:
                j += 1
            at_boundary = j + 1 >= n or text[j + 1].isspace()
            if at_boundary and not (ch == "." and j == i and _is_guarded_period(text, i)):
                spans.append((start, j + 1))
                i = j + 1
                while i < n and text[i].isspace():
                    i += 1
                start = i
                continue
            i = j + 1
            continue
        i += 1
    if start < n:
        spans.append((start, n))
    return spans


def _extract_citations(span_text: str, num_candidates: int) -> tuple[frozenset[int], int]:
    kept: set[int] = set()
    dropped = 0
    for match in CITATION_RE.finditer(span_text):
        for digits in re.findall(r"\d+", match.group()):
            index = int(digits)
            if 1 <= index <= num_candidates:
                kept.add(index)
            else:
                dropped += 1
    return frozenset(kept), dropped


def strip_citation_markers(text: str) -> str:
    return _MARKER_WITH_SPACE_RE.sub("", text)


def parse_citations(answer_text: str, num_candidates: int) -> AnswerDocument:
    """Split an answer into sentences and collect per-sentence citation indices.

    Parsing is total: unparseable text yields a single sentence with no
    citations. Indices outside 1..num_candidates are dropped and counted in
    `dropped_citations`.
    """
    if num_candidates < 1:
        raise ContractError("num_candidates must be >= 1")
    sentences = []
    total_dropped = 0
    for start, end in _sentence_spans(answer_text):
        span_text = answer_text[start:end]
        citations, dropped = _extract_citations(span_text, num_candidates)
        total_dropped += dropped
        word_count = len(strip_citation_markers(span_text).split())
        sentences.append(
            Sentence(text=span_text, word_count=word_count, citations=citations, start=start, end=end)
        )
    return AnswerDocument(
        raw=answer_text,
        sentences=tuple(sentences),
        num_candidates=num_candidates,
        dropped_citations=total_dropped,
    )


def compute_visibility(answer: AnswerDocument, num_candidates: int) -> list[VisibilityScore]:
    """Per-candidate visibility shares for one parsed answer.

    Sentence k (0-based over all n sentences) carries position weight
    exp(-k/n); a cited sentence splits its word count and its weight equally
    among its cited sources. Word and Pos are the resulting 0-100 shares,
    Overall is their mean. With no citations anywhere all scores are 0.
    """
    if num_candidates != answer.num_candidates:
        raise ContractError(
            f"answer was parsed with num_candidates={answer.num_candidates}, got {num_candidates}"
        )
    n = len(answer.sentences)
    word_share = [0.0] * num_candidates
    weight_share = [0.0] * num_candidates
    for k, sentence in enumerate(answer.sentences):
        if not sentence.citations:
            continue
        weight = math.exp(-k / n)
        fraction = 1.0 / len(sentence.citations)
        for index in sentence.citations:
            word_share[index - 1] += sentence.word_count * fraction
            weight_share[index - 1] += weight * fraction

    total_words = math.fsum(word_share)
    total_weight = math.fsum(weight_share)
    scores = []
    for d in range(num_candidates):
        word = 100.0 * word_share[d] / total_words if total_words > 0 else 0.0
        pos = 100.0 * weight_share[d] / total_weight if total_weight > 0 else 0.0
        scores.append(VisibilityScore(word=word, pos=pos, overall=(word + pos) / 2.0))
    return scores


def select_extreme_pair(scores: Sequence[VisibilityScore]) -> tuple[int, int]:
    """Indices (winner, loser) maximizing |vis_i - vis_j|.

    The winner is the higher-vis member; ties break to the lowest (i, j)
    pair in lexicographic order.
    """
    if len(scores) < 2:
        raise ContractError("need at least 2 candidates to select a pair")
    best_gap = -1.0
    best = (0, 1)
    for i in range(len(scores)):
        for j in range(i + 1, len(scores)):
            gap = abs(scores[i].vis - scores[j].vis)
            if gap > best_gap:
                best_gap = gap
                best = (i, j)
    i, j = best
    if scores[j].vis > scores[i].vis:
        return j, i
    return i, j


def outcome_reward(before: VisibilityScore, after: VisibilityScore) -> float:
    """Signed visibility improvement: after.vis - before.vis."""
    return after.vis - before.vis
