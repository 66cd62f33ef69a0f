"""Domain types, their validation rules and JSON encodings.

Every type is a frozen dataclass.  ``to_dict`` produces the canonical JSON
shape (lower_snake_case keys, ISO dates, lists for sequences) and
``from_dict`` inverts it exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from datetime import date, datetime
from types import MappingProxyType
from typing import Any, Iterable, Mapping, Sequence
from urllib.parse import urlparse

from .errors import (
    InvalidFieldType,
    MissingField,
    ProbabilitySumInvalid,
    ScoreOutOfRange,
    UnknownCandidate,
)

SCORE_KINDS = ("probability_elected", "positive", "negative")
SCORE_FIELDS = {
    "probability_elected": "probability_elected",
    "positive": "positive_score",
    "negative": "negative_score",
}
AGGREGATE_MODES = ("by_period", "by_source", "trend")

# Scores this close outside [0, 1] are float noise and get clamped.
CLAMP_SLACK = 0.001
PROB_SUM_WINDOW = (0.9, 1.1)
_PROB_SUM_EXACT = 1e-12


def canonical_json(obj: Any, *, indent: int | None = None) -> str:
    """Deterministic JSON text: sorted keys, no ASCII escaping."""
    if indent is None:
        return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, indent=indent)


def sha256_hex(text: str | bytes) -> str:
    if isinstance(text, str):
        text = text.encode("utf-8")
    return hashlib.sha256(text).hexdigest()


def is_valid_url(url: str) -> bool:
    try:
        parts = urlparse(url)
    except ValueError:
        return False
    return parts.scheme in ("http", "https") and bool(parts.netloc) and " " not in url


# ---------------------------------------------------------------------------
# campaign structure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimePeriod:
    index: int
    start_date: date
    end_date: date

    def __post_init__(self) -> None:
        if not isinstance(self.index, int) or isinstance(self.index, bool) or self.index < 0:
            raise ValueError(f"period index must be a non-negative integer, got {self.index!r}")
        if self.start_date > self.end_date:
            raise ValueError(
                f"period {self.index}: start_date {self.start_date} is after end_date {self.end_date}"
            )

    @property
    def label(self) -> str:
        return f"{self.start_date.isoformat()} -- {self.end_date.isoformat()}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "start_date": self.start_date.isoformat(),
            "end_date": self.end_date.isoformat(),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> TimePeriod:
        return cls(
            index=data["index"],
            start_date=_as_date(data["start_date"]),
            end_date=_as_date(data["end_date"]),
        )


def check_periods(periods: Sequence[TimePeriod]) -> None:
    """Raise ValueError unless periods are indexed 0..K-1, ordered and disjoint."""
    for expected, period in enumerate(periods):
        if period.index != expected:
            raise ValueError(f"period indexes must be consecutive from 0; got {period.index} at position {expected}")
    for prev, cur in zip(periods, periods[1:]):
        if cur.start_date <= prev.end_date:
            raise ValueError(f"period {cur.index} overlaps or precedes period {prev.index}")


@dataclass(frozen=True)
class SourceLabel:
    name: str
    site_filter: str = ""

    def __post_init__(self) -> None:
        if not isinstance(self.name, str) or not self.name.strip():
            raise ValueError("source name must be a non-empty string")

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "site_filter": self.site_filter}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> SourceLabel:
        return cls(name=data["name"], site_filter=data.get("site_filter", "") or "")


# ---------------------------------------------------------------------------
# articles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Article:
    url: str
    source: str
    period: int
    text: str
    fetched_at: datetime
    content_hash: str = ""

    def __post_init__(self) -> None:
        if not is_valid_url(self.url):
            raise ValueError(f"invalid article url: {self.url!r}")
        if not self.text.strip():
            raise ValueError(f"article {self.url} has empty text")
        digest = sha256_hex(self.text)
        if not self.content_hash:
            object.__setattr__(self, "content_hash", digest)
        elif self.content_hash != digest:
            raise ValueError(f"content_hash does not match text for {self.url}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "url": self.url,
            "source": self.source,
            "period": self.period,
            "text": self.text,
            "fetched_at": self.fetched_at.isoformat(),
            "content_hash": self.content_hash,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Article:
        return cls(
            url=data["url"],
            source=data["source"],
            period=data["period"],
            text=data["text"],
            fetched_at=datetime.fromisoformat(data["fetched_at"]),
            content_hash=data.get("content_hash", ""),
        )


# ---------------------------------------------------------------------------
# analysis documents
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CandidateAnalysis:
    candidate: str
    probability_elected: float | None = None
    positive_score: float | None = None
    negative_score: float | None = None
    positive_sentiments: tuple[str, ...] = ()
    negative_sentiments: tuple[str, ...] = ()
    cites: tuple[str, ...] = ()
    main_narratives: tuple[str, ...] = ()

    def score(self, kind: str) -> float | None:
        return getattr(self, SCORE_FIELDS[kind])

    def to_dict(self) -> dict[str, Any]:
        return {
            "candidate": self.candidate,
            "probability_elected": self.probability_elected,
            "positive_score": self.positive_score,
            "negative_score": self.negative_score,
            "positive_sentiments": list(self.positive_sentiments),
            "negative_sentiments": list(self.negative_sentiments),
            "cites": list(self.cites),
            "main_narratives": list(self.main_narratives),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> CandidateAnalysis:
        return cls(
            candidate=data["candidate"],
            probability_elected=data.get("probability_elected"),
            positive_score=data.get("positive_score"),
            negative_score=data.get("negative_score"),
            positive_sentiments=tuple(data.get("positive_sentiments", ())),
            negative_sentiments=tuple(data.get("negative_sentiments", ())),
            cites=tuple(data.get("cites", ())),
            main_narratives=tuple(data.get("main_narratives", ())),
        )


@dataclass(frozen=True)
class ArticleAnalysis:
    article_ref: str
    summary: str
    per_candidate: tuple[CandidateAnalysis, ...]
    favorite_summary: str

    def candidate(self, name: str) -> CandidateAnalysis:
        for entry in self.per_candidate:
            if entry.candidate == name:
                return entry
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        return {
            "article_ref": self.article_ref,
            "summary": self.summary,
            "per_candidate": [c.to_dict() for c in self.per_candidate],
            "favorite_summary": self.favorite_summary,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ArticleAnalysis:
        return cls(
            article_ref=data["article_ref"],
            summary=data["summary"],
            per_candidate=tuple(CandidateAnalysis.from_dict(c) for c in data["per_candidate"]),
            favorite_summary=data["favorite_summary"],
        )


@dataclass(frozen=True)
class TrendSummary:
    overall_summary: str
    per_candidate_trend: Mapping[str, str]
    per_candidate_narratives: Mapping[str, str]
    favorite_summary: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "per_candidate_trend", MappingProxyType(dict(self.per_candidate_trend)))
        object.__setattr__(
            self, "per_candidate_narratives", MappingProxyType(dict(self.per_candidate_narratives))
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "overall_summary": self.overall_summary,
            "per_candidate_trend": dict(self.per_candidate_trend),
            "per_candidate_narratives": dict(self.per_candidate_narratives),
            "favorite_summary": self.favorite_summary,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> TrendSummary:
        return cls(
            overall_summary=data["overall_summary"],
            per_candidate_trend=data["per_candidate_trend"],
            per_candidate_narratives=data["per_candidate_narratives"],
            favorite_summary=data["favorite_summary"],
        )


@dataclass(frozen=True)
class AggregateAnalysis:
    """Level-2 output for one period, one source, or the whole campaign (trend)."""

    mode: str
    group_key: int | str | None
    summary: str
    per_candidate: tuple[CandidateAnalysis, ...] = ()
    favorite_summary: str = ""
    trend: TrendSummary | None = None

    def __post_init__(self) -> None:
        if self.mode not in AGGREGATE_MODES:
            raise ValueError(f"unknown aggregate mode {self.mode!r}")

    @property
    def name(self) -> str:
        if self.mode == "trend":
            return "trend"
        return f"{self.mode}_{self.group_key}"

    def candidate(self, name: str) -> CandidateAnalysis:
        for entry in self.per_candidate:
            if entry.candidate == name:
                return entry
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "group_key": self.group_key,
            "summary": self.summary,
            "per_candidate": [c.to_dict() for c in self.per_candidate],
            "favorite_summary": self.favorite_summary,
            "trend": self.trend.to_dict() if self.trend is not None else None,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> AggregateAnalysis:
        trend = data.get("trend")
        return cls(
            mode=data["mode"],
            group_key=data.get("group_key"),
            summary=data["summary"],
            per_candidate=tuple(CandidateAnalysis.from_dict(c) for c in data.get("per_candidate", ())),
            favorite_summary=data.get("favorite_summary", ""),
            trend=TrendSummary.from_dict(trend) if trend is not None else None,
        )


@dataclass(frozen=True)
class ScoreObservation:
    candidate: str
    kind: str
    period_index: int
    source: str
    value: float

    def __post_init__(self) -> None:
        if self.kind not in SCORE_KINDS:
            raise ValueError(f"unknown score kind {self.kind!r}")
        if not (0.0 <= self.value <= 1.0):
            raise ValueError(f"score value {self.value} outside [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        return {
            "candidate": self.candidate,
            "kind": self.kind,
            "period_index": self.period_index,
            "source": self.source,
            "value": self.value,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ScoreObservation:
        return cls(**{k: data[k] for k in ("candidate", "kind", "period_index", "source", "value")})


# ---------------------------------------------------------------------------
# validation of decoded LLM documents
# ---------------------------------------------------------------------------


def _as_date(value: Any) -> date:
    if isinstance(value, datetime):
        return value.date()
    if isinstance(value, date):
        return value
    return date.fromisoformat(str(value))


def _require(raw: Mapping[str, Any], key: str, path: str) -> Any:
    value = raw.get(key)
    if value is None:
        raise MissingField(path)
    return value


def _text(raw: Mapping[str, Any], key: str, path: str, *, required: bool = True) -> str:
    value = raw.get(key)
    if value is None:
        if required:
            raise MissingField(path)
        return ""
    if not isinstance(value, str):
        raise InvalidFieldType(path, "a string", value)
    return value.strip()


def _text_list(raw: Mapping[str, Any], key: str, path: str) -> tuple[str, ...]:
    # Absent lists are empty; a bare string is a one-item list; blank items are dropped.
    value = raw.get(key)
    if value is None:
        return ()
    if isinstance(value, str):
        value = [value]
    if not isinstance(value, list):
        raise InvalidFieldType(path, "a list of strings", value)
    items = []
    for item in value:
        if not isinstance(item, str):
            raise InvalidFieldType(path, "a list of strings", item)
        if item.strip():
            items.append(item.strip())
    return tuple(items)


def _unit_score(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScoreOutOfRange(path, value)
    value = float(value)
    if not math.isfinite(value):
        raise ScoreOutOfRange(path, value)
    if value < 0.0:
        if value < -CLAMP_SLACK:
            raise ScoreOutOfRange(path, value)
        return 0.0
    if value > 1.0:
        if value > 1.0 + CLAMP_SLACK:
            raise ScoreOutOfRange(path, value)
        return 1.0
    return value


def _optional_score(raw: Mapping[str, Any], key: str, path: str, required: bool) -> float | None:
    value = raw.get(key)
    if value is None:
        if required:
            raise MissingField(path)
        return None
    return _unit_score(value, path)


def _candidate_entries(raw: Mapping[str, Any], candidates: Sequence[str], path: str) -> dict[str, Mapping[str, Any]]:
    """Map each configured candidate to its raw block, accepting list or mapping form."""
    value = _require(raw, "per_candidate", path)
    if isinstance(value, Mapping):
        pairs = []
        for name, block in value.items():
            if not isinstance(block, Mapping):
                raise InvalidFieldType(f"{path}[{name}]", "an object", block)
            pairs.append((name, block))
    elif isinstance(value, list):
        pairs = []
        for i, block in enumerate(value):
            if not isinstance(block, Mapping):
                raise InvalidFieldType(f"{path}[{i}]", "an object", block)
            name = block.get("candidate")
            if not isinstance(name, str) or not name.strip():
                raise MissingField(f"{path}[{i}].candidate")
            pairs.append((name, block))
    else:
        raise InvalidFieldType(path, "a list of candidate objects", value)

    lookup = {c.casefold(): c for c in candidates}
    entries: dict[str, Mapping[str, Any]] = {}
    for name, block in pairs:
        canonical = lookup.get(str(name).strip().casefold())
        if canonical is None:
            raise UnknownCandidate(str(name))
        if canonical in entries:
            raise UnknownCandidate(str(name), "appears more than once")
        entries[canonical] = block
    for name in candidates:
        if name not in entries:
            raise MissingField(f"{path}[{name}]")
    return entries


def _candidate_block(
    name: str,
    block: Mapping[str, Any],
    path: str,
    *,
    require_probability: bool,
    require_sentiment_scores: bool,
) -> CandidateAnalysis:
    p = f"{path}[{name}]"
    return CandidateAnalysis(
        candidate=name,
        probability_elected=_optional_score(block, "probability_elected", f"{p}.probability_elected", require_probability),
        positive_score=_optional_score(block, "positive_score", f"{p}.positive_score", require_sentiment_scores),
        negative_score=_optional_score(block, "negative_score", f"{p}.negative_score", require_sentiment_scores),
        positive_sentiments=_text_list(block, "positive_sentiments", f"{p}.positive_sentiments"),
        negative_sentiments=_text_list(block, "negative_sentiments", f"{p}.negative_sentiments"),
        cites=_text_list(block, "cites", f"{p}.cites"),
        main_narratives=_text_list(block, "main_narratives", f"{p}.main_narratives"),
    )


def normalize_probabilities(blocks: Sequence[CandidateAnalysis]) -> tuple[CandidateAnalysis, ...]:
    """Rescale election probabilities to sum to one.

    Sums already equal to one are left untouched; sums inside the accepted
    window are divided out; anything else raises ProbabilitySumInvalid.
    """
    probs = [b.probability_elected for b in blocks]
    if any(p is None for p in probs):
        raise ValueError("every candidate needs a probability before normalizing")
    total = math.fsum(probs)  # type: ignore[arg-type]
    if abs(total - 1.0) <= _PROB_SUM_EXACT:
        return tuple(blocks)
    lo, hi = PROB_SUM_WINDOW
    if not (lo <= total <= hi):
        raise ProbabilitySumInvalid(total)
    return tuple(replace(b, probability_elected=b.probability_elected / total) for b in blocks)  # type: ignore[operator]


def validate_article_analysis(
    raw: Any,
    candidates: Sequence[str],
    article_ref: str | None = None,
) -> ArticleAnalysis:
    """Turn a decoded level-1 document into a validated ArticleAnalysis.

    ``article_ref`` fills in the reference when the document does not carry
    one (model replies never do).  Validation is idempotent: feeding back
    ``analysis.to_dict()`` returns an equal object.
    """
    if not isinstance(raw, Mapping):
        raise InvalidFieldType("<root>", "a JSON object", raw)
    ref = raw.get("article_ref") or article_ref
    if not ref:
        raise MissingField("article_ref")
    entries = _candidate_entries(raw, candidates, "per_candidate")
    blocks = [
        _candidate_block(
            name, entries[name], "per_candidate", require_probability=True, require_sentiment_scores=True
        )
        for name in candidates
    ]
    return ArticleAnalysis(
        article_ref=str(ref),
        summary=_text(raw, "summary", "summary"),
        per_candidate=normalize_probabilities(blocks),
        favorite_summary=_text(raw, "favorite_summary", "favorite_summary"),
    )


def _string_map(raw: Mapping[str, Any], key: str, candidates: Sequence[str], *, required: bool) -> dict[str, str]:
    value = raw.get(key)
    if value is None:
        if required:
            raise MissingField(key)
        return {}
    if not isinstance(value, Mapping):
        raise InvalidFieldType(key, "an object keyed by candidate", value)
    lookup = {c.casefold(): c for c in candidates}
    out: dict[str, str] = {}
    for name, text in value.items():
        canonical = lookup.get(str(name).strip().casefold())
        if canonical is None:
            raise UnknownCandidate(str(name))
        if not isinstance(text, str):
            raise InvalidFieldType(f"{key}[{name}]", "a string", text)
        out[canonical] = text.strip()
    if required:
        for name in candidates:
            if name not in out:
                raise MissingField(f"{key}[{name}]")
    return out


def validate_trend_summary(raw: Any, candidates: Sequence[str]) -> TrendSummary:
    if not isinstance(raw, Mapping):
        raise InvalidFieldType("<root>", "a JSON object", raw)
    return TrendSummary(
        overall_summary=_text(raw, "overall_summary", "overall_summary"),
        per_candidate_trend=_string_map(raw, "per_candidate_trend", candidates, required=True),
        per_candidate_narratives=_string_map(raw, "per_candidate_narratives", candidates, required=False),
        favorite_summary=_text(raw, "favorite_summary", "favorite_summary"),
    )


def validate_aggregate_analysis(
    raw: Any,
    candidates: Sequence[str],
    mode: str,
    group_key: int | str | None,
) -> AggregateAnalysis:
    """Validate a decoded level-2 document.

    Period aggregates must carry election probabilities.  Source aggregates
    may omit them, but if any candidate has one, all must.  Trend documents
    carry the four trend fields at the top level, with per-candidate scores
    optional.
    """
    if mode not in AGGREGATE_MODES:
        raise ValueError(f"unknown aggregate mode {mode!r}")
    if not isinstance(raw, Mapping):
        raise InvalidFieldType("<root>", "a JSON object", raw)

    if mode == "trend":
        trend = validate_trend_summary(raw, candidates)
        blocks: tuple[CandidateAnalysis, ...] = ()
        if raw.get("per_candidate") is not None:
            entries = _candidate_entries(raw, candidates, "per_candidate")
            blocks = tuple(
                _candidate_block(n, entries[n], "per_candidate", require_probability=False, require_sentiment_scores=False)
                for n in candidates
            )
            blocks = _probabilities_all_or_none(blocks)
        return AggregateAnalysis(
            mode=mode,
            group_key=None,
            summary=trend.overall_summary,
            per_candidate=blocks,
            favorite_summary=trend.favorite_summary,
            trend=trend,
        )

    entries = _candidate_entries(raw, candidates, "per_candidate")
    blocks = tuple(
        _candidate_block(
            n, entries[n], "per_candidate", require_probability=(mode == "by_period"), require_sentiment_scores=False
        )
        for n in candidates
    )
    blocks = _probabilities_all_or_none(blocks)
    return AggregateAnalysis(
        mode=mode,
        group_key=group_key,
        summary=_text(raw, "summary", "summary"),
        per_candidate=blocks,
        favorite_summary=_text(raw, "favorite_summary", "favorite_summary", required=False),
        trend=None,
    )


def _probabilities_all_or_none(blocks: tuple[CandidateAnalysis, ...]) -> tuple[CandidateAnalysis, ...]:
    present = [b.probability_elected is not None for b in blocks]
    if not any(present):
        return blocks
    if not all(present):
        missing = next(b.candidate for b in blocks if b.probability_elected is None)
        raise MissingField(f"per_candidate[{missing}].probability_elected")
    return normalize_probabilities(blocks)


def dumps_list(items: Iterable[Any]) -> str:
    """Encode a sequence of domain objects as canonical, indented JSON."""
    return canonical_json([item.to_dict() for item in items], indent=2) + "\n"
