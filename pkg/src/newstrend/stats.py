"""Score tables, quantiles, Tukey boxplot summaries and group means."""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

from .errors import EmptyInput
from .models import SCORE_KINDS, Article, ArticleAnalysis, ScoreObservation

CSV_HEADER = ("candidate", "kind", "period_index", "source", "value")
GROUP_AXES = ("period", "source")


@dataclass(frozen=True)
class ScoreTable:
    observations: tuple[ScoreObservation, ...]
    periods: tuple[int, ...] = ()
    sources: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        period_set, source_set = set(self.periods), set(self.sources)
        for obs in self.observations:
            if self.periods and obs.period_index not in period_set:
                raise ValueError(f"observation references unknown period {obs.period_index}")
            if self.sources and obs.source not in source_set:
                raise ValueError(f"observation references unknown source {obs.source!r}")

    def __len__(self) -> int:
        return len(self.observations)

    @property
    def candidates(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(o.candidate for o in self.observations))

    def select(self, *, candidate: str | None = None, kind: str | None = None, source: str | None = None) -> list[ScoreObservation]:
        return [
            o
            for o in self.observations
            if (candidate is None or o.candidate == candidate)
            and (kind is None or o.kind == kind)
            and (source is None or o.source == source)
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for o in self.observations:
            writer.writerow([o.candidate, o.kind, o.period_index, o.source, repr(o.value)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, periods: Sequence[int] = (), sources: Sequence[str] = ()) -> ScoreTable:
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"score CSV header must be {','.join(CSV_HEADER)}")
        obs = tuple(
            ScoreObservation(
                candidate=row["candidate"],
                kind=row["kind"],
                period_index=int(row["period_index"]),
                source=row["source"],
                value=float(row["value"]),
            )
            for row in reader
        )
        return cls(obs, tuple(periods), tuple(sources))


def collect_scores(
    items: Iterable[tuple[ArticleAnalysis, Article]],
    periods: Sequence[int] = (),
    sources: Sequence[str] = (),
) -> ScoreTable:
    """Flatten (analysis, article) pairs into observations, three per candidate."""
    observations = []
    for analysis, article in items:
        for block in analysis.per_candidate:
            for kind in SCORE_KINDS:
                value = block.score(kind)
                if value is None:
                    raise ValueError(f"level-1 analysis {analysis.article_ref} lacks {kind} for {block.candidate}")
                observations.append(
                    ScoreObservation(
                        candidate=block.candidate,
                        kind=kind,
                        period_index=article.period,
                        source=article.source,
                        value=value,
                    )
                )
    return ScoreTable(tuple(observations), tuple(periods), tuple(sources))


def quantile(values: Sequence[float], q: float) -> float:
    """Linear-interpolation quantile (Hyndman-Fan type 7).

    With sorted values x and h = (n - 1) q the result is
    x[floor(h)] + (h - floor(h)) (x[ceil(h)] - x[floor(h)]).
    """
    if not values:
        raise EmptyInput("quantile of an empty sequence")
    if not (0.0 <= q <= 1.0):
        raise ValueError(f"q must be in [0, 1], got {q}")
    xs = sorted(values)
    h = (len(xs) - 1) * q
    lo = math.floor(h)
    hi = math.ceil(h)
    return xs[lo] + (h - lo) * (xs[hi] - xs[lo])


@dataclass(frozen=True)
class BoxplotSummary:
    group_key: int | str
    candidate: str
    kind: str
    min: float
    q1: float
    median: float
    q3: float
    max: float
    n: int
    outliers: tuple[float, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "group_key": self.group_key,
            "candidate": self.candidate,
            "kind": self.kind,
            "min": self.min,
            "q1": self.q1,
            "median": self.median,
            "q3": self.q3,
            "max": self.max,
            "n": self.n,
            "outliers": list(self.outliers),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> BoxplotSummary:
        return cls(**{**data, "outliers": tuple(data.get("outliers", ()))})


def summarize(values: Sequence[float], group_key: int | str, candidate: str, kind: str) -> BoxplotSummary:
    """Tukey five-number summary with 1.5 IQR outlier fences.

    Whiskers reach the most extreme non-outlying values but never retreat
    inside the box: with interpolated quartiles the nearest inlier can lie
    beyond a quartile, in which case the whisker sits on that quartile.
    """
    if not values:
        raise EmptyInput("boxplot of an empty group")
    q1, med, q3 = quantile(values, 0.25), quantile(values, 0.5), quantile(values, 0.75)
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inliers = [v for v in values if lo_fence <= v <= hi_fence]
    outliers = tuple(sorted(v for v in values if v < lo_fence or v > hi_fence))
    return BoxplotSummary(
        group_key=group_key,
        candidate=candidate,
        kind=kind,
        min=min(min(inliers), q1),
        q1=q1,
        median=med,
        q3=q3,
        max=max(max(inliers), q3),
        n=len(values),
        outliers=outliers,
    )


def _group_of(obs: ScoreObservation, group_by: str) -> int | str:
    if group_by == "period":
        return obs.period_index
    if group_by == "source":
        return obs.source
    raise ValueError(f"group_by must be one of {GROUP_AXES}, got {group_by!r}")


def _group_order(table: ScoreTable, group_by: str, keys: Iterable[int | str]) -> list[int | str]:
    keys = set(keys)
    configured = table.periods if group_by == "period" else table.sources
    ordered = [k for k in configured if k in keys]
    rest = sorted(k for k in keys if k not in set(ordered))
    return ordered + rest


def boxplot_summaries(table: ScoreTable, group_by: str) -> list[BoxplotSummary]:
    """One summary per (group, candidate, kind) with at least one observation.

    Period groups pool every source.  Output is ordered by group (configured
    order), then candidate, then kind.
    """
    buckets: dict[tuple[int | str, str, str], list[float]] = defaultdict(list)
    for obs in table.observations:
        buckets[(_group_of(obs, group_by), obs.candidate, obs.kind)].append(obs.value)
    candidates = table.candidates
    groups = _group_order(table, group_by, (k[0] for k in buckets))
    out = []
    for g in groups:
        for c in candidates:
            for kind in SCORE_KINDS:
                values = buckets.get((g, c, kind))
                if values:
                    out.append(summarize(values, g, c, kind))
    return out


def group_means(table: ScoreTable, kind: str, group_by: str) -> dict[tuple[int | str, str], float]:
    sums: dict[tuple[int | str, str], list[float]] = defaultdict(list)
    for obs in table.observations:
        if obs.kind == kind:
            sums[(_group_of(obs, group_by), obs.candidate)].append(obs.value)
    groups = _group_order(table, group_by, (k[0] for k in sums))
    result = {}
    for g in groups:
        for c in table.candidates:
            vals = sums.get((g, c))
            if vals:
                result[(g, c)] = math.fsum(vals) / len(vals)
    return result


def boxplots_to_csv(summaries: Sequence[BoxplotSummary]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["group_key", "candidate", "kind", "min", "q1", "median", "q3", "max", "n", "outliers"])
    for s in summaries:
        writer.writerow(
            [s.group_key, s.candidate, s.kind, repr(s.min), repr(s.q1), repr(s.median), repr(s.q3), repr(s.max), s.n,
             ";".join(repr(v) for v in s.outliers)]
        )
    return buf.getvalue()


def means_to_csv(rows: Sequence[tuple[str, str, int | str, str, float]]) -> str:
    """rows: (kind, group_by, group, candidate, mean)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["kind", "group_by", "group_key", "candidate", "mean"])
    for kind, group_by, group, candidate, mean in rows:
        writer.writerow([kind, group_by, group, candidate, repr(mean)])
    return buf.getvalue()
