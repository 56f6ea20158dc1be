"""Annotated keyword sets for the shipped rule collections.

Keywords label rules per (engine, query domain); sets are input data for the
overlap analysis. EXPECTED_OVERLAPS lists the pairs whose Jaccard values the
transcribed sets determine; the geo_bench_gemini/e_commerce_gemini pair is
deliberately absent (the transcription does not determine it) and must not
be asserted.
"""

from __future__ import annotations

_COMMON_ALL_ENGINES = (
    "source citation",
    "comprehensive",
    "factual accuracy",
    "topic focus",
    "neutral tone",
    "balanced view",
    "self-contained",
    "actionable",
    "in-depth",
    "conclusion first",
    "logical structure",
    "specific evidence",
    "clear language",
    "up-to-date",
    "cohesive flow",
)

KEYWORD_SETS: dict[str, frozenset[str]] = {
    "researchy_gemini": frozenset(_COMMON_ALL_ENGINES) | {"conciseness", "writing quality"},
    "researchy_gpt": frozenset(_COMMON_ALL_ENGINES) | {"accessibility", "informational purpose"},
    "researchy_claude": frozenset(_COMMON_ALL_ENGINES) | {"accessibility", "conciseness", "single idea"},
    "geo_bench_gemini": frozenset(
        [
            "source citation",
            "comprehensive",
            "factual accuracy",
            "logical structure",
            "clear language",
            "up-to-date",
            "conciseness",
            "in-depth",
            "conclusion first",
            "topic focus",
            "specific evidence",
            "balanced view",
            "self-contained",
            "cohesive flow",
            "actionable",
        ]
    ),
    "e_commerce_gemini": frozenset(
        [
            "source citation",
            "comprehensive",
            "factual accuracy",
            "neutral tone",
            "logical structure",
            "clear language",
            "up-to-date",
            "conciseness",
            "pros & cons rec",
            "non-exaggerated",
            "step-by-step guide",
            "production details",
            "modular",
            "term definition",
        ]
    ),
}

# Percent overlaps the transcribed sets reproduce, rounded to two decimals.
EXPECTED_OVERLAPS: dict[tuple[str, str], float] = {
    ("researchy_gemini", "researchy_gpt"): 78.95,
    ("researchy_gemini", "researchy_claude"): 84.21,
    ("researchy_gpt", "researchy_claude"): 84.21,
    ("researchy_gemini", "geo_bench_gemini"): 88.24,
    ("researchy_gemini", "e_commerce_gemini"): 34.78,
}
