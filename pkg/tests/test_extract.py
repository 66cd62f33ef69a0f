from __future__ import annotations

import json

import pytest

from conftest import FIXED_TIME
from newstrend.errors import CacheIoError
from newstrend.extract import (
    ArticleCache,
    ExtractionLimits,
    FetchRecord,
    FixtureLoader,
    HostThrottle,
    PageResponse,
    RecordingLoader,
    extract_text,
    fetch_group,
    fetch_url,
)
from newstrend.search import UrlGroup

LONG = "The campaign held a rally in Pennsylvania on Saturday afternoon. " * 5
LIMITS = ExtractionLimits(politeness_delay=0.0)


def clock():
    return FIXED_TIME


def page(text: str = LONG) -> str:
    return f"<html><head><style>p {{}}</style></head><body><nav>menu</nav><p>{text}</p></body></html>"


def test_strip_script():
    assert extract_text("<p>Hello</p><script>x()</script>") == "Hello"


def test_plain_text_whitespace():
    assert extract_text("  several   words\tof  text  ") == "several words of text"


def test_three_paragraphs():
    html = """
    <html><body><header>Site header</header><article>
      <div><p>First <b>bold</b>   paragraph.</p></div>
      <section><p>Second <a href="#">linked</a> paragraph.</p>
      <p>Third
         paragraph.</p></section>
    </article><footer>footer</footer></body></html>
    """
    assert extract_text(html) == "First bold paragraph.\nSecond linked paragraph.\nThird paragraph."


def test_fetch_ok_and_errors():
    loader = FixtureLoader(
        {
            "https://a.com/ok": page(),
            "https://a.com/missing": (404, "not found"),
            "https://a.com/stub": page("x" * 50),
            "https://a.com/blocked": (403, ""),
        }
    )
    ok = fetch_url("https://a.com/ok", loader, source="CNN", period=1, limits=LIMITS, clock=clock)
    assert ok.ok and ok.article.text == LONG.strip() and ok.article.period == 1 and ok.article.source == "CNN"
    assert fetch_url("https://a.com/missing", loader, source="CNN", period=0, clock=clock).failure_reason == "http_error(404)"
    assert fetch_url("https://a.com/stub", loader, source="CNN", period=0, clock=clock).failure_reason == "empty_content"
    assert fetch_url("https://a.com/blocked", loader, source="CNN", period=0, clock=clock).failure_reason == "blocked"


def test_transient_errors_retried():
    class Slow:
        calls = 0

        def load(self, url, timeout):
            self.calls += 1
            if self.calls == 1:
                raise TimeoutError
            return PageResponse(200, page())

    loader = Slow()
    rec = fetch_url("https://a.com/x", loader, source="s", period=0, limits=LIMITS, clock=clock, sleep=lambda s: None)
    assert rec.ok and loader.calls == 2


def test_truncation():
    rec = fetch_url(
        "https://a.com/ok",
        FixtureLoader({"https://a.com/ok": page()}),
        source="s",
        period=0,
        limits=ExtractionLimits(min_chars=10, max_chars=40),
        clock=clock,
    )
    assert len(rec.article.text) <= 40


def test_record_invariant():
    with pytest.raises(ValueError):
        FetchRecord("https://a.com", "ok")
    with pytest.raises(ValueError):
        FetchRecord("https://a.com", "failed")


def test_fetch_group_cache_and_partial_failure(tmp_path):
    urls = ("https://a.com/1", "https://a.com/2", "https://b.com/3")
    loader = FixtureLoader({urls[0]: page(), urls[1]: page(LONG + " more"), urls[2]: (404, "")})
    cache = ArticleCache(tmp_path)
    group = UrlGroup(period=2, source="Reuters", urls=urls)
    first = fetch_group(group, cache, loader, LIMITS, clock=clock)
    assert [r.url for r in first] == list(urls)
    assert [r.ok for r in first] == [True, True, False]
    assert all(r.article.period == 2 and r.article.source == "Reuters" for r in first if r.ok)
    calls = loader.calls
    second = fetch_group(group, cache, loader, LIMITS, clock=clock)
    assert loader.calls == calls
    assert second == first


def test_cached_article_relabelled_for_other_cell(tmp_path):
    url = "https://a.com/1"
    loader = FixtureLoader({url: page()})
    cache = ArticleCache(tmp_path)
    fetch_group(UrlGroup(0, "Web sites", (url,)), cache, loader, LIMITS, clock=clock)
    rec = fetch_group(UrlGroup(0, "CNN", (url,)), cache, loader, LIMITS, clock=clock)[0]
    assert rec.article.source == "CNN" and loader.calls == 1


def test_poisoned_cache(tmp_path):
    cache = ArticleCache(tmp_path)
    url_a, url_b = "https://a.com/1", "https://a.com/2"
    loader = FixtureLoader({url_a: page(), url_b: page()})
    fetch_group(UrlGroup(0, "s", (url_a,)), cache, loader, LIMITS, clock=clock)
    # store a's record under b's digest
    cache.path_for(url_a).rename(cache.path_for(url_b))
    with pytest.raises(CacheIoError):
        fetch_group(UrlGroup(0, "s", (url_b,)), cache, loader, LIMITS, clock=clock)
    cache.path_for(url_b).write_text("{not json")
    with pytest.raises(CacheIoError):
        cache.get(url_b)


def test_recording_loader_roundtrip(tmp_path):
    inner = FixtureLoader({"https://a.com/1": page(), "https://a.com/2": (404, "gone")})
    rec = RecordingLoader(inner, tmp_path)
    for url in ("https://a.com/1", "https://a.com/2"):
        rec.load(url, 1.0)
    replay = FixtureLoader.from_dir(tmp_path)
    assert replay.load("https://a.com/1", 1.0) == PageResponse(200, page())
    assert replay.load("https://a.com/2", 1.0).status == 404
    assert set(json.loads((tmp_path / "index.json").read_text())) == {"https://a.com/1", "https://a.com/2"}


def test_host_throttle_spacing():
    now = [0.0]
    slept = []

    def sleep(s):
        slept.append(s)

    throttle = HostThrottle(1.0, clock=lambda: now[0], sleep=sleep)
    throttle.wait("https://a.com/1")
    throttle.wait("https://a.com/2")
    throttle.wait("https://b.com/1")
    assert slept == [1.0]
