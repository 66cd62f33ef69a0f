from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import CANDIDATES, analysis_doc, make_article
from newstrend.errors import EmptyInput
from newstrend.models import ScoreObservation, validate_article_analysis
from newstrend.stats import (
    BoxplotSummary,
    ScoreTable,
    boxplot_summaries,
    boxplots_to_csv,
    collect_scores,
    group_means,
    quantile,
    summarize,
)


def oracle_quantile(values, q):
    xs = sorted(values)
    h = (len(xs) - 1) * q
    j = int(h)
    g = h - j
    if j + 1 >= len(xs):
        return xs[-1]
    return (1 - g) * xs[j] + g * xs[j + 1]


def check_box(s: BoxplotSummary, values) -> None:
    assert s.min <= s.q1 <= s.median <= s.q3 <= s.max
    iqr = s.q3 - s.q1
    lo, hi = s.q1 - 1.5 * iqr, s.q3 + 1.5 * iqr
    assert all(v < lo or v > hi for v in s.outliers)
    inliers = [v for v in values if lo <= v <= hi]
    assert len(inliers) + len(s.outliers) == len(values) == s.n
    assert s.min == min(min(inliers), s.q1) and s.max == max(max(inliers), s.q3)


def test_quantile_examples():
    assert quantile([1, 2, 3, 4], 0.5) == 2.5
    assert quantile([5], 0.0) == quantile([5], 0.37) == quantile([5], 1.0) == 5
    assert quantile([1, 2, 3, 4, 5, 6, 7, 8], 0.25) == pytest.approx(2.75, abs=1e-15)
    with pytest.raises(EmptyInput):
        quantile([], 0.5)
    with pytest.raises(ValueError):
        quantile([1.0], 1.5)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60), st.floats(0.0, 1.0))
def test_quantile_matches_oracles(values, q):
    got = quantile(values, q)
    assert got == pytest.approx(oracle_quantile(values, q), abs=1e-12, rel=1e-12)
    assert got == pytest.approx(float(np.quantile(values, q, method="linear")), abs=1e-9, rel=1e-12)


def test_nine_values():
    values = [round(0.1 * k, 10) for k in range(1, 10)]
    s = summarize(values, 0, "A", "positive")
    assert (s.q1, s.median, s.q3) == pytest.approx((0.3, 0.5, 0.7), abs=1e-12)
    assert s.outliers == ()


def test_single_value_and_outlier():
    s = summarize([0.42], 0, "A", "positive")
    assert (s.min, s.q1, s.median, s.q3, s.max) == (0.42,) * 5 and s.outliers == ()
    s = summarize([0.5] * 10 + [0.99], 0, "A", "positive")
    assert s.outliers == (0.99,) and s.max == 0.5


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=40))
def test_boxplot_invariants(values):
    check_box(summarize(values, "g", "A", "negative"), values)


def analyses(n: int):
    out = []
    for i in range(n):
        a = make_article(f"article {i}", url=f"https://a.com/{i}", period=i % 2, source=("CNN", "Reuters")[i % 2])
        out.append((validate_article_analysis(analysis_doc(), CANDIDATES, a.content_hash), a))
    return out


def test_collect_counts():
    assert len(collect_scores(analyses(1))) == 6
    assert len(collect_scores(analyses(436))) == 2616
    assert len(collect_scores([])) == 0


def test_table_rejects_unknown_groups():
    with pytest.raises(ValueError):
        collect_scores(analyses(2), periods=[0], sources=["CNN", "Reuters"])


def test_csv_roundtrip():
    table = collect_scores(analyses(3), periods=[0, 1], sources=["CNN", "Reuters"])
    text = table.to_csv()
    assert text.splitlines()[0] == "candidate,kind,period_index,source,value"
    assert ScoreTable.from_csv(text, [0, 1], ["CNN", "Reuters"]) == table
    assert all(len(row.split(",")) == 5 for row in text.splitlines())


def obs(values, *, candidate="A", kind="probability_elected", source="s", periods=None):
    return [
        ScoreObservation(candidate, kind, periods[i] if periods else i, source, v) for i, v in enumerate(values)
    ]


def test_group_means_examples():
    table = ScoreTable(tuple(obs([0.4, 0.6], periods=[0, 0])))
    assert group_means(table, "probability_elected", "period") == {(0, "A"): pytest.approx(0.5)}

    harris = [0.505, 0.52, 0.525, 0.5, 0.52]
    table = ScoreTable(tuple(obs(harris, source="all")))
    assert group_means(table, "probability_elected", "source")[("all", "A")] == pytest.approx(0.514, abs=1e-12)

    table = ScoreTable(tuple(obs([0.3], source="CNN")), sources=("Reuters", "CNN"))
    assert group_means(table, "probability_elected", "source") == {("CNN", "A"): 0.3}


def test_summaries_order_and_pooling():
    table = ScoreTable(
        tuple(obs([0.1, 0.2], source="CNN", periods=[1, 0]) + obs([0.3], source="Reuters", periods=[1])),
        periods=(0, 1),
        sources=("CNN", "Reuters"),
    )
    by_period = boxplot_summaries(table, "period")
    assert [(s.group_key, s.n) for s in by_period] == [(0, 1), (1, 2)]
    by_source = boxplot_summaries(table, "source")
    assert [(s.group_key, s.n) for s in by_source] == [("CNN", 2), ("Reuters", 1)]
    csv_rows = boxplots_to_csv(by_source).splitlines()
    assert len({len(r.split(",")) for r in csv_rows}) == 1


@st.composite
def tables(draw):
    n = draw(st.integers(0, 30))
    rows = []
    for _ in range(n):
        h = draw(st.floats(0.05, 0.95))
        p, s = draw(st.integers(0, 2)), draw(st.sampled_from(["x", "y"]))
        rows.append(ScoreObservation("H", "probability_elected", p, s, h))
        rows.append(ScoreObservation("T", "probability_elected", p, s, 1 - h))
        rows.append(ScoreObservation("H", "positive", p, s, draw(st.floats(0, 1))))
    return ScoreTable(tuple(rows))


@given(tables(), st.sampled_from(["period", "source"]))
def test_group_count_conservation_and_complement(table, axis):
    summaries = boxplot_summaries(table, axis)
    assert sum(s.n for s in summaries) == len(table)
    means = group_means(table, "probability_elected", axis)
    for (g, c), m in means.items():
        if c == "H":
            assert m + means[(g, "T")] == pytest.approx(1.0, abs=1e-9)
    assert all(not math.isnan(m) for m in means.values())
