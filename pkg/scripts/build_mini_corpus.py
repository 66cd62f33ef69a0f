"""Regenerate the replayable mini corpus under fixtures/mini.

Twelve synthetic articles (two per period/outlet cell) are served through a
scripted search backend, page loader and chat model.  The pipeline is then
run against those stand-ins with the recording wrappers switched on, so the
fixture files are exactly what a fixtures-mode replay will ask for.

Level-1 probabilities are chosen so the per-period means for the first
candidate are 0.505 and 0.52; the period aggregates repeat those values.

    python3 scripts/build_mini_corpus.py
"""

from __future__ import annotations

import json
import re
import shutil
import sys
import tempfile
from pathlib import Path

from newstrend.config import load_config
from newstrend.extract import PageResponse, RecordingLoader
from newstrend.llm import FixtureStore, LlmExchange, RecordingChatClient, RenderedPrompt
from newstrend.pipeline import Pipeline
from newstrend.search import RecordingSearchBackend, SearchRequest

ROOT = Path(__file__).resolve().parents[1]
CONFIG = ROOT / "configs" / "mini.yaml"
OUT = ROOT / "fixtures" / "mini"

HARRIS, TRUMP = "Kamala Harris", "Donald Trump"

# (period, source) -> two articles: (slug, harris probability, harris pos, harris neg, trump pos, trump neg)
ARTICLES = {
    (0, "Web sites"): [("rally-turnout", 0.50, 0.62, 0.30, 0.55, 0.41), ("ticket-announcement", 0.51, 0.70, 0.22, 0.44, 0.47)],
    (0, "CNN"): [("swing-state-tour", 0.49, 0.58, 0.35, 0.60, 0.38), ("policy-speech", 0.52, 0.66, 0.28, 0.41, 0.52)],
    (0, "Reuters"): [("polling-average", 0.50, 0.54, 0.33, 0.52, 0.36), ("fundraising-totals", 0.51, 0.61, 0.27, 0.49, 0.40)],
    (1, "Web sites"): [("convention-week", 0.52, 0.72, 0.24, 0.43, 0.49), ("debate-preparations", 0.53, 0.63, 0.31, 0.51, 0.44)],
    (1, "CNN"): [("economy-messaging", 0.51, 0.57, 0.36, 0.58, 0.39), ("union-endorsements", 0.54, 0.68, 0.25, 0.40, 0.50)],
    (1, "Reuters"): [("battleground-ads", 0.50, 0.55, 0.34, 0.56, 0.37), ("voter-registration", 0.52, 0.60, 0.29, 0.47, 0.43)],
}

DOMAINS = {"Web sites": "https://campaign-desk.example.org", "CNN": "https://www.cnn.com", "Reuters": "https://www.reuters.com"}
PERIOD_DATES = {0: "2024/08/0{}", 1: "2024/08/2{}"}
# One level-1 reply is malformed on the first attempt to exercise the retry path.
MALFORMED_FIRST = "debate-preparations"


def url_for(period: int, source: str, slug: str, k: int) -> str:
    return f"{DOMAINS[source]}/{PERIOD_DATES[period].format(k + 3)}/{slug}.html"


def article_text(period: int, source: str, slug: str, number: int) -> list[str]:
    topic = slug.replace("-", " ")
    return [
        f"Campaign notebook {number:02d}: {topic}.",
        f"This report follows the presidential race between {HARRIS} and {TRUMP} during "
        f"{'early' if period == 0 else 'late'} August 2024, with a focus on {topic}.",
        f"Staff for {HARRIS} described the week as a chance to widen the coalition, pointing to "
        "events in suburban counties and outreach to younger voters.",
        f"Aides to {TRUMP} stressed prices, border policy and turnout among loyal supporters, and "
        "said the schedule would stay concentrated in the industrial Midwest.",
        "Independent analysts interviewed for this piece called the contest close and said that "
        "small shifts in a handful of states could decide the outcome.",
    ]


def page_html(paragraphs: list[str], source: str) -> str:
    body = "\n".join(f"    <p>{p}</p>" for p in paragraphs)
    return (
        "<!doctype html>\n<html>\n<head><title>Campaign notebook</title>"
        "<script>var tracking = true;</script></head>\n<body>\n"
        f"  <nav>Home | Politics | {source}</nav>\n  <article>\n{body}\n  </article>\n"
        "  <footer>All rights reserved.</footer>\n</body>\n</html>\n"
    )


class ScriptedSearch:
    def __init__(self, urls: dict[tuple[int, str], list[str]]):
        self.urls = urls

    def search(self, request: SearchRequest) -> list[dict]:
        return [
            {"link": u, "title": u.rsplit("/", 1)[-1].removesuffix(".html").replace("-", " "), "snippet": ""}
            for u in self.urls[request.cell]
        ]


class ScriptedLoader:
    def __init__(self, pages: dict[str, str]):
        self.pages = pages

    def load(self, url: str, timeout: float) -> PageResponse:
        return PageResponse(200, self.pages[url])


def _lists(name: str, tone: str) -> dict:
    return {
        "positive_sentiments": [f"{name} is described as {tone}"],
        "negative_sentiments": [f"critics question how {name} would pay for the agenda"],
        "cites": [f"a campaign adviser said the focus for {name} is turnout"],
        "main_narratives": [f"{name} frames the race around the economy"],
    }


class ScriptedModel:
    """Answers each prompt type from the tables above."""

    def __init__(self, scores: dict[int, tuple]):
        self.scores = scores

    def complete(self, prompt: RenderedPrompt) -> LlmExchange:
        return LlmExchange(prompt.digest, "scripted-mini", self.reply(prompt), 0, 0, 0.0, prompt.messages)

    def reply(self, prompt: RenderedPrompt) -> str:
        user = prompt.messages[1][1]
        corrected = len(prompt.messages) > 2
        m = re.search(r"Campaign notebook (\d+): ([a-z ]+)\.", user)
        if "Article:\n<<<" in user and m:
            slug, hp, hpos, hneg, tpos, tneg = self.scores[int(m.group(1))]
            if slug == MALFORMED_FIRST and not corrected:
                return '{"summary": "Debate preparations dominate the week.", "per_candidate": ['
            doc = {
                "summary": f"The article covers {m.group(2)} and describes a close race.",
                "per_candidate": [
                    {"candidate": HARRIS, "probability_elected": hp, "positive_score": hpos, "negative_score": hneg, **_lists(HARRIS, "energetic")},
                    {"candidate": TRUMP, "probability_elected": round(1 - hp, 10), "positive_score": tpos, "negative_score": tneg, **_lists(TRUMP, "combative")},
                ],
                "favorite_summary": "The article suggests a near-even contest.",
            }
            text = json.dumps(doc, indent=2)
            return f"```json\n{text}\n```" if slug == "polling-average" else text
        m = re.search(r"during the time period (\S+ -- \S+)\.", user)
        if m:
            early = m.group(1).startswith("2024-08-01")
            hp = 0.505 if early else 0.52
            return json.dumps(
                {
                    "summary": "Coverage in this period centres on rallies, running-mate news and turnout plans."
                    if early
                    else "Coverage in this period centres on the convention, debate preparation and economic messaging.",
                    "per_candidate": [
                        {"candidate": HARRIS, "probability_elected": hp, **_lists(HARRIS, "energetic")},
                        {"candidate": TRUMP, "probability_elected": round(1 - hp, 10), **_lists(TRUMP, "combative")},
                    ],
                    "favorite_summary": f"{HARRIS} is slightly favored in this period." if hp > 0.5 else "Neither candidate leads.",
                }
            )
        m = re.search(r'from the web resource "([^"]+)"', user)
        if m:
            return json.dumps(
                {
                    "summary": f"{m.group(1)} presents the race as close, with attention on swing states.",
                    "per_candidate": [
                        {"candidate": HARRIS, **_lists(HARRIS, "energetic")},
                        {"candidate": TRUMP, **_lists(TRUMP, "combative")},
                    ],
                }
            )
        if "one document per time period" in user:
            return json.dumps(
                {
                    "overall_summary": "Across August the race stays close, with a small shift toward the first candidate.",
                    "per_candidate_trend": {HARRIS: "Coverage grows more favorable after the convention.", TRUMP: "Coverage is steady with a loyal base."},
                    "per_candidate_narratives": {HARRIS: "Coalition building and economic relief.", TRUMP: "Prices, border policy and turnout."},
                    "favorite_summary": f"Trends slightly favor {HARRIS}.",
                    "per_candidate": [
                        {"candidate": HARRIS, "positive_score": 0.63, "negative_score": 0.30},
                        {"candidate": TRUMP, "positive_score": 0.49, "negative_score": 0.43},
                    ],
                }
            )
        raise ValueError("unrecognized prompt")


def main() -> int:
    config = load_config(CONFIG)
    urls: dict[tuple[int, str], list[str]] = {}
    pages: dict[str, str] = {}
    scores: dict[int, tuple] = {}
    number = 0
    for (period, source), items in ARTICLES.items():
        for k, row in enumerate(items):
            number += 1
            url = url_for(period, source, row[0], k)
            urls.setdefault((period, source), []).append(url)
            pages[url] = page_html(article_text(period, source, row[0], number), source)
            scores[number] = row

    if OUT.exists():
        shutil.rmtree(OUT)
    with tempfile.TemporaryDirectory() as tmp:
        pipeline = Pipeline(
            config,
            Path(tmp) / "run",
            search_backend=RecordingSearchBackend(ScriptedSearch(urls), OUT / "search"),
            loader=RecordingLoader(ScriptedLoader(pages), OUT / "pages"),
            client=RecordingChatClient(ScriptedModel(scores), FixtureStore(OUT / "llm")),
        )
        pipeline.run(["search", "fetch", "analyze", "aggregate"])
    print(f"wrote {sum(1 for _ in OUT.rglob('*.json'))} fixture files under {OUT}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
