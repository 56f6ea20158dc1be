"""Exception hierarchy. Exit codes: validation family -> 2, backend family -> 3."""

from __future__ import annotations


class GeoforgeError(Exception):
    """Base class for all geoforge errors."""

    exit_code = 1


class ValidationError(GeoforgeError):
    """Bad input data or a violated invariant."""

    exit_code = 2


class ContractError(ValidationError):
    """A caller violated an operation precondition."""


class DatasetParseError(ValidationError):
    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class EmptyCurationError(ValidationError):
    """Curation filters removed every query."""


class DoubleInjectionError(ValidationError):
    """Document already carries an adversarial injection marker."""


class JudgeUnconfiguredError(ValidationError):
    """A judged metric was requested without a judge backend."""


class BackendError(GeoforgeError):
    """LLM backend failures: transport, transcripts, unusable responses."""

    exit_code = 3


class HTTPStatusError(BackendError):
    def __init__(self, status: int, body: str):
        super().__init__(f"HTTP {status}: {body[:500]}")
        self.status = status
        self.body = body


class RetryExhaustedError(BackendError):
    """All retry attempts failed."""


class TranscriptMissError(BackendError):
    def __init__(self, request_hash: str):
        super().__init__(f"transcript miss for request hash {request_hash}")
        self.request_hash = request_hash


class EmptyResponseError(BackendError):
    """Backend returned an empty or whitespace-only completion."""


class MalformedOutputError(BackendError):
    """LLM output could not be parsed even after the one repair attempt."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class MergeDivergenceError(BackendError):
    """A merge level failed to shrink the total token estimate."""


class NoExtractablePairsError(BackendError):
    """Every query was skipped; the engine cited nothing anywhere."""
