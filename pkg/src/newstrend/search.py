"""Date- and source-restricted web search and URL grouping.

Two backends ship with the module: ``ProgrammableSearchBackend`` talks to a
programmable-search REST endpoint (Google Custom Search JSON API wire
format), and ``FixtureSearchBackend`` replays recorded responses from disk.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Protocol, Sequence

import requests

from .errors import (
    BackendUnavailable,
    EmptyConfig,
    MalformedResponse,
    MissingFixture,
    QuotaExceeded,
    SearchError,
)
from .models import SourceLabel, TimePeriod, canonical_json, sha256_hex

log = logging.getLogger(__name__)

DEFAULT_ENDPOINT = "https://www.googleapis.com/customsearch/v1"
MAX_RESULTS_CEILING = 10
RETRY_DELAYS = (1.0, 2.0, 4.0)


@dataclass(frozen=True)
class SearchRequest:
    query: str
    period: TimePeriod
    source: SourceLabel
    max_results: int = 10

    def __post_init__(self) -> None:
        if not self.query.strip():
            raise ValueError("search query must be non-empty")
        if not (1 <= self.max_results <= MAX_RESULTS_CEILING):
            raise ValueError(f"max_results must be in [1, {MAX_RESULTS_CEILING}], got {self.max_results}")

    @property
    def cell(self) -> tuple[int, str]:
        return (self.period.index, self.source.name)

    @property
    def digest(self) -> str:
        """Stable key used to name fixture files."""
        return sha256_hex(canonical_json(self.to_dict()))

    def to_dict(self) -> dict[str, Any]:
        return {
            "query": self.query,
            "period": self.period.to_dict(),
            "source": self.source.to_dict(),
            "max_results": self.max_results,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> SearchRequest:
        return cls(
            query=data["query"],
            period=TimePeriod.from_dict(data["period"]),
            source=SourceLabel.from_dict(data["source"]),
            max_results=data["max_results"],
        )


@dataclass(frozen=True)
class SearchHit:
    url: str
    title: str
    snippet: str
    rank: int

    def to_dict(self) -> dict[str, Any]:
        return {"url": self.url, "title": self.title, "snippet": self.snippet, "rank": self.rank}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> SearchHit:
        return cls(url=data["url"], title=data.get("title", ""), snippet=data.get("snippet", ""), rank=data["rank"])


@dataclass(frozen=True)
class UrlGroup:
    period: int
    source: str
    urls: tuple[str, ...]

    def to_dict(self) -> dict[str, Any]:
        return {"period": self.period, "source": self.source, "urls": list(self.urls)}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> UrlGroup:
        return cls(period=data["period"], source=data["source"], urls=tuple(data["urls"]))


class SearchBackend(Protocol):
    def search(self, request: SearchRequest) -> list[dict[str, Any]]:
        """Return raw result items (each with at least ``link``) for one request."""


def build_requests(
    query: str,
    periods: Sequence[TimePeriod],
    sources: Sequence[SourceLabel],
    max_results: int = 10,
) -> list[SearchRequest]:
    if not periods:
        raise EmptyConfig("at least one time period is required")
    if not sources:
        raise EmptyConfig("at least one source is required")
    return [
        SearchRequest(query=query, period=period, source=source, max_results=max_results)
        for period in periods
        for source in sources
    ]


def backend_params(request: SearchRequest) -> dict[str, Any]:
    """Query parameters encoding the request for a programmable-search endpoint.

    The date window uses the endpoint's ``sort=date:r:YYYYMMDD:YYYYMMDD``
    range restriction; a non-empty site filter becomes a ``site:`` qualifier.
    """
    q = request.query
    if request.source.site_filter:
        q = f"{q} site:{request.source.site_filter}"
    start = request.period.start_date.strftime("%Y%m%d")
    end = request.period.end_date.strftime("%Y%m%d")
    return {"q": q, "num": request.max_results, "sort": f"date:r:{start}:{end}"}


class ProgrammableSearchBackend:
    """Live client for a programmable-search JSON endpoint."""

    def __init__(
        self,
        api_key: str,
        engine_id: str,
        endpoint: str = DEFAULT_ENDPOINT,
        timeout: float = 30.0,
        session: requests.Session | None = None,
    ):
        self.api_key = api_key
        self.engine_id = engine_id
        self.endpoint = endpoint
        self.timeout = timeout
        self.session = session or requests.Session()

    @classmethod
    def from_env(cls, key_var: str = "SEARCH_API_KEY", engine_var: str = "SEARCH_ENGINE_ID", **kwargs: Any):
        api_key = os.environ.get(key_var)
        engine_id = os.environ.get(engine_var)
        if not api_key or not engine_id:
            raise BackendUnavailable(f"set {key_var} and {engine_var} to use the live search backend")
        return cls(api_key, engine_id, **kwargs)

    def search(self, request: SearchRequest) -> list[dict[str, Any]]:
        params = {"key": self.api_key, "cx": self.engine_id, **backend_params(request)}
        try:
            resp = self.session.get(self.endpoint, params=params, timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendUnavailable(f"search request failed: {exc}") from exc

        if resp.status_code == 429 or (resp.status_code == 403 and _quota_reason(resp)):
            raise QuotaExceeded(f"search quota exhausted (HTTP {resp.status_code})")
        if resp.status_code in (401, 403) or resp.status_code >= 500:
            raise BackendUnavailable(f"search endpoint returned HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise MalformedResponse(f"search endpoint rejected the request (HTTP {resp.status_code})")
        try:
            data = resp.json()
        except ValueError as exc:
            raise MalformedResponse("search response is not JSON") from exc
        if not isinstance(data, dict):
            raise MalformedResponse("search response is not a JSON object")
        # The endpoint omits "items" entirely when nothing matched.
        items = data.get("items", [])
        if not isinstance(items, list):
            raise MalformedResponse("search response 'items' is not a list")
        return items


def _quota_reason(resp: requests.Response) -> bool:
    try:
        errors = resp.json().get("error", {}).get("errors", [])
    except (ValueError, AttributeError):
        return False
    return any("limit" in str(e.get("reason", "")).lower() for e in errors if isinstance(e, dict))


class FixtureSearchBackend:
    """Replays ``<request digest>.json`` files written by RecordingSearchBackend."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    def path_for(self, request: SearchRequest) -> Path:
        return self.directory / f"{request.digest}.json"

    def search(self, request: SearchRequest) -> list[dict[str, Any]]:
        path = self.path_for(request)
        if not path.exists():
            raise MissingFixture("search", request.digest)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise MalformedResponse(f"unreadable search fixture {path}: {exc}") from exc
        items = data.get("items") if isinstance(data, dict) else None
        if not isinstance(items, list):
            raise MalformedResponse(f"search fixture {path} has no 'items' list")
        return items


class RecordingSearchBackend:
    """Wraps a live backend and stores every response as a replayable fixture."""

    def __init__(self, inner: SearchBackend, directory: str | Path):
        self.inner = inner
        self.directory = Path(directory)
        self._lock = threading.Lock()

    def search(self, request: SearchRequest) -> list[dict[str, Any]]:
        items = self.inner.search(request)
        payload = canonical_json({"request": request.to_dict(), "items": items}, indent=2) + "\n"
        with self._lock:
            self.directory.mkdir(parents=True, exist_ok=True)
            path = self.directory / f"{request.digest}.json"
            tmp = path.with_suffix(".tmp")
            tmp.write_text(payload, encoding="utf-8")
            os.replace(tmp, path)
        return items


def execute_search(
    request: SearchRequest,
    backend: SearchBackend,
    *,
    delays: Sequence[float] = RETRY_DELAYS,
    max_attempts: int = 3,
    sleep: Callable[[float], None] = time.sleep,
) -> list[SearchHit]:
    """Run one request, retrying retryable backend failures with backoff."""
    attempt = 0
    while True:
        attempt += 1
        try:
            items = backend.search(request)
            break
        except SearchError as exc:
            if not exc.retryable or attempt >= max_attempts:
                raise
            delay = delays[min(attempt - 1, len(delays) - 1)]
            log.warning("search %s attempt %d failed (%s); retrying in %.1fs", request.cell, attempt, exc, delay)
            sleep(delay)

    hits = []
    for item in items[: request.max_results]:
        if not isinstance(item, dict):
            raise MalformedResponse("search result item is not an object")
        url = item.get("link") or item.get("url")
        if not isinstance(url, str) or not url:
            raise MalformedResponse("search result item has no link")
        hits.append(
            SearchHit(
                url=url,
                title=str(item.get("title", "")),
                snippet=str(item.get("snippet", "")),
                rank=len(hits) + 1,
            )
        )
    return hits


@dataclass
class SearchOutcome:
    hits: dict[SearchRequest, list[SearchHit]]
    failed: dict[SearchRequest, str]


def run_searches(
    requests_: Iterable[SearchRequest],
    backend: SearchBackend,
    *,
    parallelism: int = 4,
    sleep: Callable[[float], None] = time.sleep,
) -> SearchOutcome:
    """Execute many requests concurrently.

    Cells that still fail after retries are reported in ``failed``; a
    QuotaExceeded error aborts the whole batch.
    """
    reqs = list(requests_)
    outcome = SearchOutcome(hits={}, failed={})

    def one(req: SearchRequest):
        try:
            return req, execute_search(req, backend, sleep=sleep), None
        except (BackendUnavailable, MalformedResponse) as exc:
            return req, None, str(exc)

    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        for req, hits, error in pool.map(one, reqs):
            if error is not None:
                log.warning("search cell %s failed: %s", req.cell, error)
                outcome.failed[req] = error
            else:
                outcome.hits[req] = hits
    return outcome


def group_urls(hits_by_request: Mapping[SearchRequest, Sequence[SearchHit]]) -> list[UrlGroup]:
    """Collect hits into one deduplicated URL list per (period, source) cell.

    Each URL keeps its best rank across the cell's requests; URLs are ordered
    by that rank, ties broken by URL so the result ignores input order.
    """
    best: dict[tuple[int, str], dict[str, int]] = {}
    for request, hits in hits_by_request.items():
        cell = best.setdefault(request.cell, {})
        for hit in hits:
            if hit.url not in cell or hit.rank < cell[hit.url]:
                cell[hit.url] = hit.rank
    groups = []
    for (period, source), ranks in sorted(best.items()):
        if not ranks:
            continue
        urls = tuple(sorted(ranks, key=lambda u: (ranks[u], u)))
        groups.append(UrlGroup(period=period, source=source, urls=urls))
    return groups
