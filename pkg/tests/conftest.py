from __future__ import annotations

from datetime import date, datetime, timezone
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from newstrend.models import Article, SourceLabel, TimePeriod

settings.register_profile("default", max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ROOT = Path(__file__).resolve().parents[1]
CANDIDATES = ("Kamala Harris", "Donald Trump")
FIXED_TIME = datetime(2024, 8, 15, tzinfo=timezone.utc)


def make_article(text: str = "Some article text about the race.", *, url: str = "https://example.com/a", source: str = "CNN", period: int = 0) -> Article:
    return Article(url=url, source=source, period=period, text=text, fetched_at=FIXED_TIME)


def analysis_doc(h_prob: float = 0.505, t_prob: float = 0.495, **extra) -> dict:
    doc = {
        "summary": "A close race.",
        "per_candidate": [
            {
                "candidate": CANDIDATES[0],
                "probability_elected": h_prob,
                "positive_score": 0.6,
                "negative_score": 0.3,
                "positive_sentiments": ["energetic rallies"],
                "negative_sentiments": ["policy vagueness"],
                "cites": ["a spokesperson said the campaign is confident"],
                "main_narratives": ["economy"],
            },
            {
                "candidate": CANDIDATES[1],
                "probability_elected": t_prob,
                "positive_score": 0.5,
                "negative_score": 0.4,
                "positive_sentiments": ["loyal base"],
                "negative_sentiments": ["legal troubles"],
                "cites": [],
                "main_narratives": ["immigration"],
            },
        ],
        "favorite_summary": "Harris slightly favored.",
    }
    doc.update(extra)
    return doc


@pytest.fixture
def periods() -> list[TimePeriod]:
    return [
        TimePeriod(0, date(2024, 8, 1), date(2024, 8, 15)),
        TimePeriod(1, date(2024, 8, 16), date(2024, 8, 31)),
        TimePeriod(2, date(2024, 9, 1), date(2024, 9, 15)),
    ]


@pytest.fixture
def sources() -> list[SourceLabel]:
    return [SourceLabel("Web sites"), SourceLabel("CNN", "cnn.com")]
