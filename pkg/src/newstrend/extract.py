"""Page loading, readable-text extraction and the on-disk article cache."""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from html.parser import HTMLParser
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol
from urllib.parse import urlparse

import requests

from .errors import CacheIoError, MissingFixture, UnparseableContent
from .models import Article, canonical_json, is_valid_url, sha256_hex
from .search import UrlGroup

log = logging.getLogger(__name__)

DEFAULT_USER_AGENT = (
    "Mozilla/5.0 (X11; Linux x86_64) AppleWebKit/537.36 (KHTML, like Gecko) "
    "Chrome/124.0 Safari/537.36"
)

_SKIP_TAGS = {
    "script", "style", "noscript", "template", "svg", "canvas", "iframe",
    "nav", "header", "footer", "aside", "form", "button", "select", "head",
}
_BLOCK_TAGS = {
    "p", "div", "br", "hr", "h1", "h2", "h3", "h4", "h5", "h6", "li", "ul", "ol",
    "article", "section", "main", "blockquote", "pre", "tr", "td", "th", "table",
    "figure", "figcaption", "dd", "dt", "dl", "body", "html",
}
_VOID_TAGS = {"br", "hr", "img", "meta", "link", "input", "source", "wbr", "area", "base", "col", "embed", "track"}
_MARKUP_RE = re.compile(r"<\s*/?\s*[a-zA-Z!][^>]*>")


@dataclass(frozen=True)
class ExtractionLimits:
    min_chars: int = 200
    max_chars: int = 24_000
    timeout: float = 30.0
    parallelism: int = 4
    politeness_delay: float = 1.0
    attempts: int = 2


@dataclass(frozen=True)
class PageResponse:
    status: int
    body: str


class PageLoader(Protocol):
    def load(self, url: str, timeout: float) -> PageResponse:
        """Fetch a page; raise TimeoutError on timeout, ConnectionError when unreachable."""


@dataclass(frozen=True)
class FetchRecord:
    url: str
    status: str
    failure_reason: str | None = None
    article: Article | None = None

    def __post_init__(self) -> None:
        if self.status not in ("ok", "failed"):
            raise ValueError(f"unknown fetch status {self.status!r}")
        if (self.status == "ok") != (self.article is not None):
            raise ValueError("an ok record carries an article; a failed one does not")
        if (self.status == "failed") != (self.failure_reason is not None):
            raise ValueError("a failed record carries a failure_reason; an ok one does not")

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict[str, Any]:
        return {
            "url": self.url,
            "status": self.status,
            "failure_reason": self.failure_reason,
            "article": self.article.to_dict() if self.article else None,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> FetchRecord:
        article = data.get("article")
        return cls(
            url=data["url"],
            status=data["status"],
            failure_reason=data.get("failure_reason"),
            article=Article.from_dict(article) if article else None,
        )


# ---------------------------------------------------------------------------
# text extraction
# ---------------------------------------------------------------------------


class _TextCollector(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.paragraphs: list[str] = []
        self._buffer: list[str] = []
        self._skip_depth = 0

    def _flush(self) -> None:
        text = " ".join("".join(self._buffer).split())
        if text:
            self.paragraphs.append(text)
        self._buffer = []

    def handle_starttag(self, tag: str, attrs) -> None:
        if tag in _SKIP_TAGS:
            if tag not in _VOID_TAGS:
                self._skip_depth += 1
            return
        if tag in _BLOCK_TAGS and not self._skip_depth:
            self._flush()

    def handle_startendtag(self, tag: str, attrs) -> None:
        if tag in _BLOCK_TAGS and not self._skip_depth:
            self._flush()

    def handle_endtag(self, tag: str) -> None:
        if tag in _SKIP_TAGS:
            self._skip_depth = max(0, self._skip_depth - 1)
            return
        if tag in _BLOCK_TAGS and not self._skip_depth:
            self._flush()

    def handle_data(self, data: str) -> None:
        if not self._skip_depth:
            self._buffer.append(data)

    def close(self) -> None:
        super().close()
        self._flush()


def extract_text(raw_page: str | bytes) -> str:
    """Readable plain text from an HTML page or a plain-text blob.

    Paragraphs come out one per line with inner whitespace collapsed.  In
    plain text a paragraph break is a blank line.
    """
    if isinstance(raw_page, bytes):
        try:
            raw_page = raw_page.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise UnparseableContent("page is not UTF-8 text") from exc
    if not raw_page or not raw_page.strip():
        raise UnparseableContent("page is empty")
    if "\x00" in raw_page or raw_page.lstrip().startswith("%PDF"):
        raise UnparseableContent("page is binary content")

    if not _MARKUP_RE.search(raw_page):
        paragraphs = (" ".join(p.split()) for p in re.split(r"\n\s*\n", raw_page))
        return "\n".join(p for p in paragraphs if p)

    collector = _TextCollector()
    try:
        collector.feed(raw_page)
        collector.close()
    except Exception as exc:  # HTMLParser is lenient; anything raised here is fatal
        raise UnparseableContent(f"markup could not be parsed: {exc}") from exc
    return "\n".join(collector.paragraphs)


# ---------------------------------------------------------------------------
# loaders
# ---------------------------------------------------------------------------


class HttpLoader:
    """Plain HTTP GET with a browser-like user agent."""

    def __init__(self, user_agent: str = DEFAULT_USER_AGENT, session: requests.Session | None = None):
        self.session = session or requests.Session()
        self.session.headers.update({"User-Agent": user_agent, "Accept": "text/html,application/xhtml+xml"})

    def load(self, url: str, timeout: float) -> PageResponse:
        try:
            resp = self.session.get(url, timeout=timeout, allow_redirects=True)
        except requests.Timeout as exc:
            raise TimeoutError(str(exc)) from exc
        except requests.RequestException as exc:
            raise ConnectionError(str(exc)) from exc
        return PageResponse(status=resp.status_code, body=resp.text)


class BrowserLoader:
    """Renders script-heavy pages in headless Chrome via Selenium (optional dependency)."""

    def __init__(self, user_agent: str = DEFAULT_USER_AGENT):
        try:
            from selenium import webdriver
        except ImportError as exc:  # pragma: no cover - optional
            raise ImportError("BrowserLoader needs the 'selenium' package") from exc
        options = webdriver.ChromeOptions()
        options.add_argument("--headless=new")
        options.add_argument(f"--user-agent={user_agent}")
        self._driver = webdriver.Chrome(options=options)
        self._lock = threading.Lock()

    def load(self, url: str, timeout: float) -> PageResponse:  # pragma: no cover - needs a browser
        with self._lock:
            self._driver.set_page_load_timeout(timeout)
            try:
                self._driver.get(url)
            except Exception as exc:
                if "timeout" in type(exc).__name__.lower():
                    raise TimeoutError(str(exc)) from exc
                raise ConnectionError(str(exc)) from exc
            return PageResponse(status=200, body=self._driver.page_source)

    def close(self) -> None:  # pragma: no cover
        self._driver.quit()


class FixtureLoader:
    """Serves canned pages.

    ``pages`` maps url to a body string or a ``(status, body)`` pair.  Unknown
    URLs raise MissingFixture.
    """

    def __init__(self, pages: Mapping[str, str | tuple[int, str]]):
        self.pages = dict(pages)
        self.calls = 0

    @classmethod
    def from_dir(cls, directory: str | Path) -> FixtureLoader:
        directory = Path(directory)
        index = json.loads((directory / "index.json").read_text(encoding="utf-8"))
        pages: dict[str, tuple[int, str]] = {}
        for url, entry in index.items():
            body = (directory / entry["file"]).read_text(encoding="utf-8") if entry.get("file") else ""
            pages[url] = (int(entry.get("status", 200)), body)
        return cls(pages)

    def load(self, url: str, timeout: float) -> PageResponse:
        self.calls += 1
        if url not in self.pages:
            raise MissingFixture("page", url)
        entry = self.pages[url]
        if isinstance(entry, tuple):
            return PageResponse(status=entry[0], body=entry[1])
        return PageResponse(status=200, body=entry)


class RecordingLoader:
    """Wraps a live loader and writes every response in FixtureLoader.from_dir layout."""

    def __init__(self, inner: PageLoader, directory: str | Path):
        self.inner = inner
        self.directory = Path(directory)
        self._lock = threading.Lock()

    def load(self, url: str, timeout: float) -> PageResponse:
        response = self.inner.load(url, timeout)
        name = f"{sha256_hex(url)}.html"
        with self._lock:
            self.directory.mkdir(parents=True, exist_ok=True)
            (self.directory / name).write_text(response.body, encoding="utf-8")
            index_path = self.directory / "index.json"
            index = json.loads(index_path.read_text(encoding="utf-8")) if index_path.exists() else {}
            index[url] = {"status": response.status, "file": name}
            tmp = index_path.with_suffix(".tmp")
            tmp.write_text(canonical_json(index, indent=2) + "\n", encoding="utf-8")
            os.replace(tmp, index_path)
        return response


# ---------------------------------------------------------------------------
# fetching
# ---------------------------------------------------------------------------

_TRANSIENT = ("timeout", "connection_error")


def _utcnow() -> datetime:
    return datetime.now(timezone.utc).replace(microsecond=0)


def fetch_url(
    url: str,
    loader: PageLoader,
    *,
    source: str,
    period: int,
    limits: ExtractionLimits = ExtractionLimits(),
    clock: Callable[[], datetime] = _utcnow,
    sleep: Callable[[float], None] = time.sleep,
) -> FetchRecord:
    """Load one URL and turn it into an ok or failed FetchRecord.

    Failure reasons: ``timeout``, ``connection_error``, ``http_error(<code>)``,
    ``blocked`` (HTTP 403/429), ``empty_content`` (text shorter than
    ``limits.min_chars``) and ``unparseable``.  Timeouts, connection errors
    and 5xx responses are retried up to ``limits.attempts`` times.
    """
    if not is_valid_url(url):
        return FetchRecord(url=url, status="failed", failure_reason="invalid_url")

    reason = "timeout"
    response: PageResponse | None = None
    for attempt in range(max(1, limits.attempts)):
        if attempt:
            sleep(float(attempt))
        try:
            response = loader.load(url, limits.timeout)
        except TimeoutError:
            reason, response = "timeout", None
            continue
        except ConnectionError:
            reason, response = "connection_error", None
            continue
        if response.status >= 500:
            reason = f"http_error({response.status})"
            continue
        break

    if response is None or response.status >= 500:
        return FetchRecord(url=url, status="failed", failure_reason=reason)
    if response.status in (403, 429):
        return FetchRecord(url=url, status="failed", failure_reason="blocked")
    if response.status >= 400:
        return FetchRecord(url=url, status="failed", failure_reason=f"http_error({response.status})")

    try:
        text = extract_text(response.body) if response.body.strip() else ""
    except UnparseableContent:
        return FetchRecord(url=url, status="failed", failure_reason="unparseable")
    if len(text) < limits.min_chars:
        return FetchRecord(url=url, status="failed", failure_reason="empty_content")
    text = text[: limits.max_chars].rstrip()
    article = Article(url=url, source=source, period=period, text=text, fetched_at=clock())
    return FetchRecord(url=url, status="ok", article=article)


class ArticleCache:
    """One canonical-JSON FetchRecord per file, named by the URL's SHA-256."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def _lock(self, key: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(key, threading.Lock())

    def path_for(self, url: str) -> Path:
        return self.directory / f"{sha256_hex(url)}.json"

    def get(self, url: str) -> FetchRecord | None:
        path = self.path_for(url)
        if not path.exists():
            return None
        try:
            record = FetchRecord.from_dict(json.loads(path.read_text(encoding="utf-8")))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise CacheIoError(f"corrupt cache entry {path}: {exc}") from exc
        if sha256_hex(record.url) != path.stem:
            raise CacheIoError(f"cache entry {path.name} holds a record for a different url ({record.url})")
        return record

    def put(self, record: FetchRecord) -> None:
        path = self.path_for(record.url)
        with self._lock(path.stem):
            try:
                self.directory.mkdir(parents=True, exist_ok=True)
                tmp = path.with_suffix(f".{threading.get_ident()}.tmp")
                tmp.write_text(canonical_json(record.to_dict(), indent=2) + "\n", encoding="utf-8")
                os.replace(tmp, path)
            except OSError as exc:
                raise CacheIoError(f"cannot write cache entry {path}: {exc}") from exc


class HostThrottle:
    """Spaces out requests to the same host by at least ``delay`` seconds."""

    def __init__(self, delay: float, clock: Callable[[], float] = time.monotonic, sleep=time.sleep):
        self.delay = delay
        self._clock = clock
        self._sleep = sleep
        self._next: dict[str, float] = {}
        self._lock = threading.Lock()

    def wait(self, url: str) -> None:
        if self.delay <= 0:
            return
        host = urlparse(url).netloc
        with self._lock:
            now = self._clock()
            slot = max(now, self._next.get(host, now))
            self._next[host] = slot + self.delay
        if slot > now:
            self._sleep(slot - now)


def fetch_group(
    group: UrlGroup,
    cache: ArticleCache,
    loader: PageLoader,
    limits: ExtractionLimits = ExtractionLimits(),
    *,
    throttle: HostThrottle | None = None,
    clock: Callable[[], datetime] = _utcnow,
) -> list[FetchRecord]:
    """Fetch every URL of a group, serving and filling the cache.

    The output has one record per input URL in input order.  Cached articles
    are re-labelled with this group's period and source, since the same URL
    may be found under several cells.  Transient failures are not cached.
    """
    throttle = throttle or HostThrottle(limits.politeness_delay)

    def one(url: str) -> FetchRecord:
        cached = cache.get(url)
        if cached is None:
            throttle.wait(url)
            cached = fetch_url(url, loader, source=group.source, period=group.period, limits=limits, clock=clock)
            if cached.ok or cached.failure_reason not in _TRANSIENT and not cached.failure_reason.startswith("http_error(5"):
                cache.put(cached)
        if cached.article is not None and (
            cached.article.source != group.source or cached.article.period != group.period
        ):
            cached = replace(cached, article=replace(cached.article, source=group.source, period=group.period))
        return cached

    with ThreadPoolExecutor(max_workers=max(1, limits.parallelism)) as pool:
        return list(pool.map(one, group.urls))
