"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class NewsTrendError(Exception):
    """Base class for every error raised by this package."""


# -- analysis documents ------------------------------------------------------


class AnalysisValidationError(NewsTrendError):
    """An LLM analysis document violates the response contract."""


class MissingField(AnalysisValidationError):
    def __init__(self, field: str):
        super().__init__(f"missing required field: {field}")
        self.field = field


class InvalidFieldType(AnalysisValidationError):
    def __init__(self, field: str, expected: str, value: object):
        super().__init__(f"field {field} must be {expected}, got {value!r}")
        self.field = field
        self.value = value


class ScoreOutOfRange(AnalysisValidationError):
    def __init__(self, field: str, value: object):
        super().__init__(f"score {field}={value!r} is outside [0, 1]")
        self.field = field
        self.value = value


class ProbabilitySumInvalid(AnalysisValidationError):
    def __init__(self, total: float):
        super().__init__(
            f"election probabilities sum to {total:.4f}; expected a value in [0.9, 1.1]"
        )
        self.total = total


class UnknownCandidate(AnalysisValidationError):
    def __init__(self, candidate: str, reason: str = "not a configured candidate"):
        super().__init__(f"candidate {candidate!r}: {reason}")
        self.candidate = candidate


# -- search ------------------------------------------------------------------


class EmptyConfig(NewsTrendError):
    """No periods or no sources were supplied."""


class SearchError(NewsTrendError):
    retryable = False


class BackendUnavailable(SearchError):
    retryable = True


class QuotaExceeded(SearchError):
    """The search quota is exhausted; no further requests should be sent."""


class MalformedResponse(SearchError):
    pass


# -- content extraction ------------------------------------------------------


class UnparseableContent(NewsTrendError):
    pass


class CacheIoError(NewsTrendError):
    pass


# -- LLM analysis ------------------------------------------------------------


class MissingPlaceholder(NewsTrendError):
    def __init__(self, name: str):
        super().__init__(f"prompt template placeholder {{{name}}} is missing or unsupplied")
        self.name = name


class EndpointUnavailable(NewsTrendError):
    pass


class ResponseParseError(NewsTrendError):
    """The model reply contains no decodable JSON object."""


class MalformedAfterRetries(NewsTrendError):
    def __init__(self, responses: list[str], last_error: str):
        super().__init__(
            f"no valid response after {len(responses)} attempt(s); last error: {last_error}"
        )
        self.responses = list(responses)
        self.last_error = last_error


class EmptyGroup(NewsTrendError):
    pass


class ContextBudgetExceeded(NewsTrendError):
    def __init__(self, size: int, budget: int):
        super().__init__(f"level-2 context is {size} characters; budget is {budget}")
        self.size = size
        self.budget = budget


# -- statistics / inference --------------------------------------------------


class EmptyInput(NewsTrendError):
    pass


class NonFiniteInput(NewsTrendError):
    pass


class DegenerateData(NewsTrendError):
    pass


class SingularPrecision(NewsTrendError):
    pass


class InsufficientDraws(NewsTrendError):
    pass


# -- reporting ---------------------------------------------------------------


class MismatchedScope(NewsTrendError):
    pass


class ReportIoError(NewsTrendError):
    pass


# -- configuration and orchestration -----------------------------------------


class ConfigError(NewsTrendError):
    pass


class ConfigParseError(ConfigError):
    def __init__(self, message: str, line: int | None = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.line = line


class ConfigValidationError(ConfigError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class MissingFixture(NewsTrendError):
    def __init__(self, kind: str, key: str):
        super().__init__(f"missing {kind} fixture: {key}")
        self.kind = kind
        self.key = key


class StageFailed(NewsTrendError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"stage {stage!r} failed: {message}")
        self.stage = stage
