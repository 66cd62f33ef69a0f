from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import CANDIDATES, analysis_doc, make_article
from newstrend.errors import (
    AnalysisValidationError,
    ContextBudgetExceeded,
    EmptyGroup,
    MalformedAfterRetries,
    MissingFixture,
    MissingPlaceholder,
    ResponseParseError,
)
from newstrend.llm import (
    FixtureChatClient,
    FixtureStore,
    LlmExchange,
    PromptTemplate,
    RecordingChatClient,
    analyze_article,
    analyze_articles,
    analyze_group,
    load_templates,
    parse_json_response,
    render_level1_prompt,
    render_level2_prompt,
)
from newstrend.models import AggregateAnalysis, validate_aggregate_analysis, validate_article_analysis

TEMPLATES = load_templates()


class Scripted:
    """Returns queued replies in order."""

    def __init__(self, *replies: str):
        self.replies = list(replies)
        self.prompts = []

    def complete(self, prompt):
        self.prompts.append(prompt)
        return LlmExchange(prompt.digest, "scripted", self.replies.pop(0), 0, 0, 0.0, prompt.messages)


def period_aggregate(index: int, h: float = 0.505) -> AggregateAnalysis:
    doc = analysis_doc(h, round(1 - h, 10), summary=f"period {index} summary")
    return validate_aggregate_analysis(doc, CANDIDATES, "by_period", index)


def test_level1_embeds_text_once():
    article = make_article("T")
    prompt = render_level1_prompt(article, TEMPLATES["level1"], ["A", "B"])
    user = prompt.messages[1][1]
    assert user.count("T\n>>>") == 1
    assert "A, B" in user
    assert "between 0 and 1" in user and "sum to 1" in user


def test_level1_deterministic():
    article = make_article("Body text.")
    a = render_level1_prompt(article, TEMPLATES["level1"], CANDIDATES)
    b = render_level1_prompt(article, TEMPLATES["level1"], CANDIDATES)
    assert a == b and a.digest == b.digest


def test_missing_placeholder():
    bad = PromptTemplate("sys", "No article here: {candidates}", "{}")
    with pytest.raises(MissingPlaceholder):
        render_level1_prompt(make_article("x"), bad, CANDIDATES)


def test_fenced_and_unfenced_parse_identically():
    body = json.dumps(analysis_doc())
    assert parse_json_response(f"```json\n{body}\n```") == parse_json_response(body)
    assert parse_json_response(f"Here you go:\n{body}\nThanks") == json.loads(body)
    with pytest.raises(ResponseParseError):
        parse_json_response("no json at all")
    with pytest.raises(ResponseParseError):
        parse_json_response("[1, 2]")


def test_reported_values_accepted():
    client = Scripted(json.dumps(analysis_doc(0.505, 0.495)))
    article = make_article("story")
    a = analyze_article(article, client, TEMPLATES["level1"], CANDIDATES, retries=0)
    assert [b.probability_elected for b in a.per_candidate] == [0.505, 0.495]
    assert a.article_ref == article.content_hash


def test_retry_with_correction():
    client = Scripted(json.dumps(analysis_doc(0.7, 0.7)), json.dumps(analysis_doc(0.6, 0.4)))
    a = analyze_article(make_article("story"), client, TEMPLATES["level1"], CANDIDATES, retries=1)
    assert a.per_candidate[0].probability_elected == 0.6
    second = client.prompts[1]
    assert second.messages[:2] == client.prompts[0].messages
    assert "sum" in second.messages[-1][1]


def test_malformed_after_retries_keeps_replies():
    client = Scripted("garbage", json.dumps(analysis_doc(0.7, 0.7)))
    with pytest.raises(MalformedAfterRetries) as err:
        analyze_article(make_article("story"), client, TEMPLATES["level1"], CANDIDATES, retries=1)
    assert err.value.responses == ["garbage", json.dumps(analysis_doc(0.7, 0.7))]


def test_batch_failures_become_outcomes():
    good = json.dumps(analysis_doc())
    client = Scripted(good, "bad", "bad")
    arts = [make_article("one", url="https://a.com/1"), make_article("two", url="https://a.com/2")]
    outcomes = analyze_articles(arts, client, TEMPLATES["level1"], CANDIDATES, retries=1, concurrency=1)
    assert outcomes[0].analysis is not None and outcomes[1].analysis is None and outcomes[1].error


def test_level2_embeds_summaries_not_articles():
    articles = [make_article("RAW ARTICLE TEXT ONE", url="https://a.com/1"), make_article("RAW ARTICLE TEXT TWO", url="https://a.com/2")]
    analyses = [
        validate_article_analysis(analysis_doc(summary=f"summary number {i}"), CANDIDATES, a.content_hash)
        for i, a in enumerate(articles)
    ]
    prompt = render_level2_prompt(analyses, 0, TEMPLATES["by_period"], "by_period", CANDIDATES, group_label="2024-08-01 -- 2024-08-15")
    text = prompt.text
    assert "summary number 0" in text and "summary number 1" in text
    assert "RAW ARTICLE TEXT" not in text
    assert "2024-08-01 -- 2024-08-15" in text


def test_trend_orders_periods():
    aggs = [period_aggregate(i) for i in (3, 0, 4, 1, 2)]
    text = render_level2_prompt(aggs, None, TEMPLATES["trend"], "trend", CANDIDATES).text
    positions = [text.index(f"period {i} summary") for i in range(5)]
    assert positions == sorted(positions)


def test_empty_group_and_budget():
    with pytest.raises(EmptyGroup):
        render_level2_prompt([], 0, TEMPLATES["by_period"], "by_period", CANDIDATES)
    analyses = [validate_article_analysis(analysis_doc(summary="x" * 300), CANDIDATES, f"ref{i}") for i in range(400)]
    with pytest.raises(ContextBudgetExceeded):
        render_level2_prompt(analyses, 0, TEMPLATES["by_period"], "by_period", CANDIDATES)


def test_analyze_group_modes():
    analyses = [validate_article_analysis(analysis_doc(), CANDIDATES, "ref")]
    agg = analyze_group(analyses, 0, Scripted(json.dumps(analysis_doc(0.505, 0.495))), TEMPLATES["by_period"], "by_period", CANDIDATES)
    assert agg.trend is None and agg.per_candidate[0].probability_elected == 0.505

    src = analysis_doc()
    for block in src["per_candidate"]:
        for key in ("probability_elected", "positive_score", "negative_score"):
            del block[key]
    agg = analyze_group(analyses, "CNN", Scripted(json.dumps(src)), TEMPLATES["by_source"], "by_source", CANDIDATES)
    assert agg.group_key == "CNN" and agg.per_candidate[0].probability_elected is None

    trend = {
        "overall_summary": "The race tightens.",
        "per_candidate_trend": {c: "steady" for c in CANDIDATES},
        "per_candidate_narratives": {c: "economy" for c in CANDIDATES},
        "favorite_summary": "Even.",
    }
    agg = analyze_group([period_aggregate(0), period_aggregate(1)], None, Scripted(json.dumps(trend)), TEMPLATES["trend"], "trend", CANDIDATES)
    assert agg.trend is not None and agg.trend.per_candidate_trend[CANDIDATES[0]] == "steady"


def test_fixture_store_replay(tmp_path):
    store = FixtureStore(tmp_path)
    article = make_article("story")
    live = RecordingChatClient(Scripted(json.dumps(analysis_doc())), store)
    first = analyze_article(article, live, TEMPLATES["level1"], CANDIDATES)
    replay = FixtureChatClient(store)
    assert analyze_article(article, replay, TEMPLATES["level1"], CANDIDATES) == first
    assert replay.calls == 1
    with pytest.raises(MissingFixture):
        analyze_article(make_article("other story"), replay, TEMPLATES["level1"], CANDIDATES)


# adversarial level-1 replies: anything returned must satisfy the model invariants
block_values = st.one_of(
    st.none(),
    st.floats(allow_nan=True, allow_infinity=True),
    st.integers(-2, 2),
    st.text(max_size=3),
    st.booleans(),
)


@st.composite
def adversarial_reply(draw):
    doc = analysis_doc(draw(st.floats(0.0, 1.0)), draw(st.floats(0.0, 1.0)))
    for block in doc["per_candidate"]:
        for key in ("probability_elected", "positive_score", "negative_score"):
            if draw(st.booleans()):
                block[key] = draw(block_values)
        if draw(st.integers(0, 9)) == 0:
            block["candidate"] = draw(st.text(max_size=5))
        if draw(st.booleans()):
            block["extra_field"] = "ignored"
    if draw(st.integers(0, 4)) == 0:
        doc["per_candidate"].pop()
    body = json.dumps(doc)
    return f"```json\n{body}\n```" if draw(st.booleans()) else body


@given(adversarial_reply())
def test_adversarial_replies(reply):
    try:
        a = analyze_article(make_article("story"), Scripted(reply), TEMPLATES["level1"], CANDIDATES, retries=0)
    except MalformedAfterRetries as exc:
        assert exc.responses == [reply]
        return
    assert [b.candidate for b in a.per_candidate] == list(CANDIDATES)
    assert sum(b.probability_elected for b in a.per_candidate) == pytest.approx(1.0, abs=1e-9)
    for b in a.per_candidate:
        assert 0 <= b.positive_score <= 1 and 0 <= b.negative_score <= 1 and 0 <= b.probability_elected <= 1


def test_validation_errors_are_analysis_errors():
    with pytest.raises(AnalysisValidationError):
        validate_article_analysis(analysis_doc(0.7, 0.7), CANDIDATES, "r")
