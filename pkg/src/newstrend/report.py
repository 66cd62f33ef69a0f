"""SVG charts, CSV tables and the on-disk report.

Charts are written with ElementTree so the output is well-formed XML and
byte-stable for a given input: coordinates are rounded to two decimals and
attribute order is fixed by insertion.
"""

from __future__ import annotations

import json
import os
import xml.etree.ElementTree as ET
from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .bayes import TrendFit
from .errors import EmptyInput, MismatchedScope, ReportIoError
from .models import (
    SCORE_KINDS,
    AggregateAnalysis,
    ScoreObservation,
    SourceLabel,
    TimePeriod,
    canonical_json,
    sha256_hex,
)
from .stats import BoxplotSummary, ScoreTable, boxplot_summaries, boxplots_to_csv, group_means, means_to_csv, summarize

SVG_NS = "http://www.w3.org/2000/svg"
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#17becf", "#bcbd22")
KIND_LABELS = {
    "probability_elected": "probability score",
    "positive": "positive sentiment score",
    "negative": "negative sentiment score",
}

PANEL_W, PANEL_H = 360.0, 260.0
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 52.0, 14.0, 30.0, 44.0
PANEL_COLUMNS = 3


def _f(x: float) -> str:
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


def _el(parent: ET.Element, tag: str, attrs: Mapping[str, Any] | None = None, text: str | None = None) -> ET.Element:
    node = ET.SubElement(parent, tag, {k: (v if isinstance(v, str) else _f(v)) for k, v in (attrs or {}).items()})
    if text is not None:
        node.text = text
    return node


def _svg_root(width: float, height: float, title: str) -> ET.Element:
    root = ET.Element(
        "svg",
        {
            "xmlns": SVG_NS,
            "width": _f(width),
            "height": _f(height),
            "viewBox": f"0 0 {_f(width)} {_f(height)}",
            "font-family": "sans-serif",
            "font-size": "11",
        },
    )
    _el(root, "title", text=title)
    _el(root, "rect", {"class": "background", "x": 0.0, "y": 0.0, "width": width, "height": height, "fill": "white"})
    return root


def _to_text(root: ET.Element) -> str:
    ET.indent(root, space=" ")
    return ET.tostring(root, encoding="unicode") + "\n"


@dataclass(frozen=True)
class _Axis:
    """Linear map from data values to pixel coordinates."""

    lo: float
    hi: float
    p0: float
    p1: float

    def __call__(self, v: float) -> float:
        if self.hi == self.lo:
            return (self.p0 + self.p1) / 2.0
        return self.p0 + (v - self.lo) / (self.hi - self.lo) * (self.p1 - self.p0)


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def _tick_label(v: float, lo: float, hi: float) -> str:
    span = abs(hi - lo)
    digits = 2 if span >= 0.5 else 3 if span >= 0.05 else 4
    text = f"{v:.{digits}f}"
    return "0" + text[2:] if text.startswith("-0") and float(text) == 0 else text


def _panel_frame(g: ET.Element, x0: float, y0: float, y_axis: _Axis, title: str, x_label: str, y_label: str) -> None:
    left, right = x0 + MARGIN_L, x0 + PANEL_W - MARGIN_R
    top, bottom = y0 + MARGIN_T, y0 + PANEL_H - MARGIN_B
    _el(g, "text", {"class": "panel-title", "x": x0 + PANEL_W / 2, "y": y0 + 18.0, "text-anchor": "middle"}, title)
    _el(g, "line", {"class": "axis", "x1": left, "y1": top, "x2": left, "y2": bottom, "stroke": "black"})
    _el(g, "line", {"class": "axis", "x1": left, "y1": bottom, "x2": right, "y2": bottom, "stroke": "black"})
    for v in _ticks(y_axis.lo, y_axis.hi):
        y = y_axis(v)
        _el(g, "line", {"class": "tick", "x1": left - 4.0, "y1": y, "x2": left, "y2": y, "stroke": "black"})
        _el(
            g,
            "text",
            {"class": "tick-label", "x": left - 6.0, "y": y + 4.0, "text-anchor": "end"},
            _tick_label(v, y_axis.lo, y_axis.hi),
        )
    _el(g, "text", {"class": "axis-label", "x": (left + right) / 2, "y": bottom + 34.0, "text-anchor": "middle"}, x_label)
    ly = (top + bottom) / 2
    _el(
        g,
        "text",
        {"class": "axis-label", "x": x0 + 12.0, "y": ly, "text-anchor": "middle", "transform": f"rotate(-90 {_f(x0 + 12.0)} {_f(ly)})"},
        y_label,
    )


def _panel_origin(i: int, columns: int) -> tuple[float, float]:
    return (i % columns) * PANEL_W, (i // columns) * PANEL_H


def _value_range(values: Iterable[float]) -> tuple[float, float]:
    vals = list(values)
    lo, hi = min(vals), max(vals)
    pad = (hi - lo) * 0.05 or max(abs(lo) * 0.05, 1e-3)
    return lo - pad, hi + pad


def render_boxplots(
    summaries: Sequence[BoxplotSummary],
    layout: str = "period",
    *,
    value_range: tuple[float, float] | None = (0.0, 1.0),
    show_outliers: bool = True,
    title: str = "",
    group_labels: Mapping[Any, str] | None = None,
) -> str:
    """Box-and-whisker chart with one panel per (candidate, kind).

    Inside a panel boxes sit left to right in the order their group keys
    first appear in ``summaries``.  ``value_range=None`` fits the y axis to
    the data.  Elements carry the classes ``box``, ``median``, ``whisker``,
    ``cap`` and ``outlier``.
    """
    if not summaries:
        raise EmptyInput("no boxplot summaries to render")
    panels: dict[tuple[str, str], list[BoxplotSummary]] = {}
    for s in summaries:
        panels.setdefault((s.candidate, s.kind), []).append(s)

    if value_range is None:
        value_range = _value_range(
            v for s in summaries for v in (s.min, s.max, *(s.outliers if show_outliers else ()))
        )
    lo, hi = value_range
    columns = min(PANEL_COLUMNS, len(panels))
    rows = -(-len(panels) // columns)
    root = _svg_root(columns * PANEL_W, rows * PANEL_H, title or f"Boxplots by {layout}")
    labels = group_labels or {}

    for i, ((candidate, kind), items) in enumerate(panels.items()):
        x0, y0 = _panel_origin(i, columns)
        g = _el(root, "g", {"class": "panel", "data-candidate": candidate, "data-kind": kind})
        y_axis = _Axis(lo, hi, y0 + PANEL_H - MARGIN_B, y0 + MARGIN_T)
        _panel_frame(g, x0, y0, y_axis, f"{candidate}: {KIND_LABELS.get(kind, kind)}", layout, "value")
        slot = (PANEL_W - MARGIN_L - MARGIN_R) / len(items)
        width = min(slot * 0.6, 40.0)
        bottom = y0 + PANEL_H - MARGIN_B
        for j, s in enumerate(items):
            cx = x0 + MARGIN_L + slot * (j + 0.5)
            left, right = cx - width / 2, cx + width / 2
            top_y, bot_y = y_axis(s.q3), y_axis(s.q1)
            box = _el(g, "g", {"class": "group", "data-group": str(s.group_key), "data-n": str(s.n)})
            for end, edge in ((s.min, bot_y), (s.max, top_y)):
                _el(box, "line", {"class": "whisker", "x1": cx, "y1": edge, "x2": cx, "y2": y_axis(end), "stroke": "black"})
                _el(
                    box,
                    "line",
                    {"class": "cap", "x1": cx - width / 4, "y1": y_axis(end), "x2": cx + width / 4, "y2": y_axis(end), "stroke": "black"},
                )
            _el(
                box,
                "rect",
                {
                    "class": "box",
                    "x": left,
                    "y": top_y,
                    "width": width,
                    "height": bot_y - top_y,
                    "fill": "#c6dbef",
                    "stroke": "black",
                },
            )
            _el(box, "line", {"class": "median", "x1": left, "y1": y_axis(s.median), "x2": right, "y2": y_axis(s.median), "stroke": "#d62728", "stroke-width": "2"})
            if show_outliers:
                for v in s.outliers:
                    _el(box, "circle", {"class": "outlier", "cx": cx, "cy": y_axis(v), "r": 2.5, "fill": "none", "stroke": "black"})
            label = labels.get(s.group_key, str(s.group_key))
            _el(box, "text", {"class": "group-label", "x": cx, "y": bottom + 14.0, "text-anchor": "middle"}, label)
    return _to_text(root)


def source_mean_lines(observations: Sequence[ScoreObservation]) -> dict[str, list[tuple[int, float]]]:
    """Per-source (period, mean value) points, sources and periods sorted."""
    cells: dict[tuple[str, int], list[float]] = defaultdict(list)
    for o in observations:
        cells[(o.source, o.period_index)].append(o.value)
    lines: dict[str, list[tuple[int, float]]] = defaultdict(list)
    for (source, period), vals in sorted(cells.items()):
        lines[source].append((period, float(np.mean(vals))))
    return dict(lines)


def render_trend_plot(
    observations: Sequence[ScoreObservation],
    fit: TrendFit,
    mean_lines: Mapping[str, Sequence[tuple[float, float]]] | None = None,
    *,
    value_range: tuple[float, float] | None = (0.0, 1.0),
    title: str = "",
) -> str:
    """Scatter of scores against period with per-source means and the fitted line.

    Draws a ``band`` polygon for the credible band, one ``point`` circle per
    observation, one solid ``mean-line`` polyline per source and the dashed
    ``regression`` path for the posterior-mean line alpha + beta t.
    """
    candidate, kind = fit.data.candidate, fit.data.kind
    for o in observations:
        if (o.candidate, o.kind) != (candidate, kind):
            raise MismatchedScope(
                f"observation for ({o.candidate}, {o.kind}) does not match fit for ({candidate}, {kind})"
            )
    if mean_lines is None:
        mean_lines = source_mean_lines(observations)

    ts = [float(o.period_index) for o in observations] + list(fit.t_grid) + list(fit.data.t)
    t_lo, t_hi = min(ts), max(ts)
    if value_range is None:
        value_range = _value_range(
            [o.value for o in observations] + list(fit.band_lower) + list(fit.band_upper) + [fit.mean_line(t_lo), fit.mean_line(t_hi)]
        )
    lo, hi = value_range
    root = _svg_root(PANEL_W * 1.5, PANEL_H * 1.2, title or f"{candidate}: {KIND_LABELS.get(kind, kind)} trend")
    width, height = PANEL_W * 1.5, PANEL_H * 1.2
    x_axis = _Axis(t_lo - 0.3, t_hi + 0.3, MARGIN_L, width - MARGIN_R)
    y_axis = _Axis(lo, hi, height - MARGIN_B, MARGIN_T)

    g = _el(root, "g", {"class": "panel", "data-candidate": candidate, "data-kind": kind, "data-scope": fit.data.scope})
    frame_top, frame_bottom = MARGIN_T, height - MARGIN_B
    _el(g, "text", {"class": "panel-title", "x": width / 2, "y": 18.0, "text-anchor": "middle"}, f"{candidate}: {KIND_LABELS.get(kind, kind)}")
    _el(g, "line", {"class": "axis", "x1": MARGIN_L, "y1": frame_top, "x2": MARGIN_L, "y2": frame_bottom, "stroke": "black"})
    _el(g, "line", {"class": "axis", "x1": MARGIN_L, "y1": frame_bottom, "x2": width - MARGIN_R, "y2": frame_bottom, "stroke": "black"})
    for v in _ticks(lo, hi):
        y = y_axis(v)
        _el(g, "line", {"class": "tick", "x1": MARGIN_L - 4.0, "y1": y, "x2": MARGIN_L, "y2": y, "stroke": "black"})
        _el(g, "text", {"class": "tick-label", "x": MARGIN_L - 6.0, "y": y + 4.0, "text-anchor": "end"}, _tick_label(v, lo, hi))
    for t in range(int(np.floor(t_lo)), int(np.ceil(t_hi)) + 1):
        _el(g, "text", {"class": "tick-label", "x": x_axis(t), "y": frame_bottom + 14.0, "text-anchor": "middle"}, str(t))
    _el(g, "text", {"class": "axis-label", "x": width / 2, "y": frame_bottom + 34.0, "text-anchor": "middle"}, "time period t")

    if fit.t_grid:
        upper = [f"{_f(x_axis(t))},{_f(y_axis(v))}" for t, v in zip(fit.t_grid, fit.band_upper)]
        lower = [f"{_f(x_axis(t))},{_f(y_axis(v))}" for t, v in zip(reversed(fit.t_grid), reversed(fit.band_lower))]
        _el(g, "polygon", {"class": "band", "points": " ".join(upper + lower), "fill": "#999999", "fill-opacity": "0.25", "stroke": "none"})

    sources = sorted(mean_lines)
    colour = {s: PALETTE[i % len(PALETTE)] for i, s in enumerate(sorted({o.source for o in observations} | set(sources)))}
    for o in observations:
        _el(g, "circle", {"class": "point", "data-source": o.source, "cx": x_axis(o.period_index), "cy": y_axis(o.value), "r": 3.0, "fill": colour[o.source], "fill-opacity": "0.6"})
    for s in sources:
        pts = " ".join(f"{_f(x_axis(t))},{_f(y_axis(v))}" for t, v in mean_lines[s])
        _el(g, "polyline", {"class": "mean-line", "data-source": s, "points": pts, "fill": "none", "stroke": colour[s], "stroke-width": "1.5"})

    x_start, x_end = (fit.t_grid[0], fit.t_grid[-1]) if fit.t_grid else (t_lo, t_hi)
    d = f"M {_f(x_axis(x_start))} {_f(y_axis(fit.mean_line(x_start)))} L {_f(x_axis(x_end))} {_f(y_axis(fit.mean_line(x_end)))}"
    _el(g, "path", {"class": "regression", "d": d, "fill": "none", "stroke": "black", "stroke-width": "2", "stroke-dasharray": "6 4"})

    legend = _el(g, "g", {"class": "legend"})
    for i, s in enumerate(sources):
        y = MARGIN_T + 6.0 + 14.0 * i
        _el(legend, "rect", {"x": width - MARGIN_R - 120.0, "y": y - 8.0, "width": 10.0, "height": 10.0, "fill": colour[s]})
        _el(legend, "text", {"x": width - MARGIN_R - 106.0, "y": y + 1.0}, s)
    return _to_text(root)


def render_means_chart(
    means: Mapping[tuple[Any, str], float],
    group_by: str,
    kind: str,
    *,
    value_range: tuple[float, float] = (0.0, 1.0),
    group_labels: Mapping[Any, str] | None = None,
) -> str:
    """Line chart of group means, one ``mean-line`` polyline per candidate."""
    if not means:
        raise EmptyInput("no group means to render")
    groups = list(dict.fromkeys(g for g, _ in means))
    candidates = list(dict.fromkeys(c for _, c in means))
    width, height = PANEL_W * 1.5, PANEL_H * 1.2
    root = _svg_root(width, height, f"Mean {KIND_LABELS.get(kind, kind)} by {group_by}")
    lo, hi = value_range
    y_axis = _Axis(lo, hi, height - MARGIN_B, MARGIN_T)
    slot = (width - MARGIN_L - MARGIN_R) / len(groups)
    xs = {g: MARGIN_L + slot * (i + 0.5) for i, g in enumerate(groups)}
    g = _el(root, "g", {"class": "panel", "data-kind": kind, "data-group-by": group_by})
    _el(g, "line", {"class": "axis", "x1": MARGIN_L, "y1": MARGIN_T, "x2": MARGIN_L, "y2": height - MARGIN_B, "stroke": "black"})
    _el(g, "line", {"class": "axis", "x1": MARGIN_L, "y1": height - MARGIN_B, "x2": width - MARGIN_R, "y2": height - MARGIN_B, "stroke": "black"})
    for v in _ticks(lo, hi):
        _el(g, "text", {"class": "tick-label", "x": MARGIN_L - 6.0, "y": y_axis(v) + 4.0, "text-anchor": "end"}, _tick_label(v, lo, hi))
    labels = group_labels or {}
    for grp in groups:
        _el(g, "text", {"class": "group-label", "x": xs[grp], "y": height - MARGIN_B + 14.0, "text-anchor": "middle"}, labels.get(grp, str(grp)))
    for i, c in enumerate(candidates):
        pts = [(xs[grp], y_axis(means[(grp, c)])) for grp in groups if (grp, c) in means]
        colour = PALETTE[i % len(PALETTE)]
        _el(g, "polyline", {"class": "mean-line", "data-candidate": c, "points": " ".join(f"{_f(x)},{_f(y)}" for x, y in pts), "fill": "none", "stroke": colour, "stroke-width": "2"})
        for x, y in pts:
            _el(g, "circle", {"class": "mean-point", "cx": x, "cy": y, "r": 3.0, "fill": colour})
        _el(g, "text", {"x": width - MARGIN_R - 120.0, "y": MARGIN_T + 14.0 * i, "fill": colour}, c)
    return _to_text(root)


def posterior_summaries(fits: Sequence[TrendFit], param: str) -> list[BoxplotSummary]:
    """Boxplot summaries of posterior draws of ``param``, grouped by fit scope."""
    return [
        summarize(fit.posterior.flat(param).tolist(), fit.data.scope, fit.data.candidate, f"{fit.data.kind}/{param}")
        for fit in fits
    ]


# ---------------------------------------------------------------------------
# report bundle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Exclusion:
    stage: str
    item: str
    reason: str

    def to_dict(self) -> dict[str, str]:
        return {"stage": self.stage, "item": self.item, "reason": self.reason}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Exclusion:
        return cls(stage=data["stage"], item=data["item"], reason=data["reason"])


@dataclass(frozen=True)
class ReportBundle:
    """Everything the report is built from.

    ``plots`` and ``manifest_path`` are filled in by ``emit_report``.
    """

    config_digest: str
    candidates: tuple[str, ...]
    periods: tuple[TimePeriod, ...]
    sources: tuple[SourceLabel, ...]
    aggregates: tuple[AggregateAnalysis, ...]
    table: ScoreTable
    fits: tuple[TrendFit, ...]
    fixture_mode: bool
    article_count: int = 0
    exclusions: tuple[Exclusion, ...] = ()
    started_at: str = ""
    finished_at: str = ""
    plots: tuple[str, ...] = ()
    manifest_path: str | None = None

    def aggregates_of(self, mode: str) -> list[AggregateAnalysis]:
        return [a for a in self.aggregates if a.mode == mode]

    def fit_for(self, candidate: str, kind: str, scope: str = "pooled") -> TrendFit | None:
        for fit in self.fits:
            if fit.scope == (candidate, kind, scope):
                return fit
        return None


def fit_summaries_to_csv(fits: Sequence[TrendFit]) -> str:
    header = (
        "candidate,kind,scope,n,alpha_mean,alpha_sd,beta_mean,beta_sd,sigma_mean,prob_beta_positive,"
        "acceptance_rate,rhat_alpha,rhat_beta,rhat_sigma,ess_alpha,ess_beta,ess_sigma,converged"
    )
    lines = [header]
    for fit in fits:
        s = fit.summary()
        diag = s["diagnostics"]
        row = [
            s["candidate"],
            s["kind"],
            s["scope"],
            str(s["n"]),
            *(repr(float(s[k])) for k in ("alpha_mean", "alpha_sd", "beta_mean", "beta_sd", "sigma_mean", "prob_beta_positive", "acceptance_rate")),
            *(repr(float(diag[p]["rhat"])) for p in ("alpha", "beta", "sigma")),
            *(repr(float(diag[p]["ess"])) for p in ("alpha", "beta", "sigma")),
            "true" if s["converged"] else "false",
        ]
        lines.append(",".join(_csv_cell(c) for c in row))
    return "\n".join(lines) + "\n"


def _csv_cell(value: str) -> str:
    if any(ch in value for ch in ',"\n'):
        return '"' + value.replace('"', '""') + '"'
    return value


def _fmt_list(items: Sequence[str]) -> str:
    return "; ".join(items) if items else "none"


def _fmt_prob(v: float | None) -> str:
    return "n/a" if v is None else f"{v:.6g}"


def _candidate_lines(agg: AggregateAnalysis, candidates: Sequence[str]) -> list[str]:
    by_name = {c.candidate: c for c in agg.per_candidate}
    lines = []
    if any(by_name.get(c) and by_name[c].probability_elected is not None for c in candidates):
        for c in candidates:
            if c in by_name:
                lines.append(f"- **{c} probability score:** {_fmt_prob(by_name[c].probability_elected)}")
    for label, attr in (
        ("positive sentiments", "positive_sentiments"),
        ("negative sentiments", "negative_sentiments"),
        ("cites", "cites"),
        ("main narratives", "main_narratives"),
    ):
        for c in candidates:
            if c in by_name:
                lines.append(f"- **{c} {label}:** {_fmt_list(getattr(by_name[c], attr))}")
    return lines


def render_summary_markdown(bundle: ReportBundle) -> str:
    """Human-readable report: per-period, per-source and trend sections."""
    cands = bundle.candidates
    period_labels = {p.index: p.label for p in bundle.periods}
    out = ["# Election news analysis", ""]
    out.append(f"Articles analysed: {bundle.article_count}. Excluded items: {len(bundle.exclusions)}.")
    out.append("")

    out += ["## Periods", ""]
    for agg in bundle.aggregates_of("by_period"):
        out.append(f"### Time period {agg.group_key}: {period_labels.get(agg.group_key, '')}".rstrip(": "))
        out.append("")
        out.append(f"**Summary:** {agg.summary}")
        out.append("")
        out += _candidate_lines(agg, cands)
        out.append(f"- **Favorite candidate summary:** {agg.favorite_summary or 'none'}")
        out.append("")

    out += ["## Sources", ""]
    for agg in bundle.aggregates_of("by_source"):
        out.append(f"### Web resource: {agg.group_key}")
        out.append("")
        out.append(f"**Summary:** {agg.summary}")
        out.append("")
        out += _candidate_lines(agg, cands)
        if agg.favorite_summary:
            out.append(f"- **Favorite candidate summary:** {agg.favorite_summary}")
        out.append("")

    trends = bundle.aggregates_of("trend")
    out += ["## Trend summary", ""]
    for agg in trends:
        t = agg.trend
        out.append(f"**Summary:** {t.overall_summary if t else agg.summary}")
        out.append("")
        if t is not None:
            for c in cands:
                if c in t.per_candidate_trend:
                    out.append(f"- **{c} trend summary:** {t.per_candidate_trend[c]}")
            for c in cands:
                if c in t.per_candidate_narratives:
                    out.append(f"- **{c} main narratives:** {t.per_candidate_narratives[c]}")
            out.append(f"- **Favorite candidate summary:** {t.favorite_summary}")
        out.append("")

    out += ["## Quantitative results", ""]
    out.append("### Mean probability score by period")
    out.append("")
    means = group_means(bundle.table, "probability_elected", "period") if len(bundle.table) else {}
    periods = list(dict.fromkeys(g for g, _ in means))
    if periods:
        out.append("| period | " + " | ".join(cands) + " | total |")
        out.append("|---" * (len(cands) + 2) + "|")
        for p in periods:
            vals = [means.get((p, c)) for c in cands]
            total = sum(v for v in vals if v is not None)
            out.append(f"| {p} | " + " | ".join("n/a" if v is None else f"{v:.4f}" for v in vals) + f" | {total:.4f} |")
        out.append("")
    pooled = pooled_means(bundle.table, "probability_elected")
    if pooled:
        out.append("Pooled mean probability score: " + ", ".join(f"{c} {pooled[c]:.4f}" for c in cands if c in pooled) + ".")
        out.append("")

    if bundle.fits:
        out.append("### Bayesian trend fits")
        out.append("")
        out.append("| candidate | score | scope | n | mean alpha | mean beta | P(beta > 0) | converged |")
        out.append("|---|---|---|---|---|---|---|---|")
        for fit in bundle.fits:
            s = fit.summary()
            out.append(
                f"| {s['candidate']} | {KIND_LABELS.get(s['kind'], s['kind'])} | {s['scope']} | {s['n']} | "
                f"{s['alpha_mean']:.4f} | {s['beta_mean']:+.5f} | {s['prob_beta_positive']:.3f} | "
                f"{'yes' if s['converged'] else 'no'} |"
            )
        out.append("")

    if bundle.exclusions:
        out.append("### Excluded items")
        out.append("")
        for e in bundle.exclusions:
            out.append(f"- {e.stage}: {e.item} ({e.reason})")
        out.append("")
    return "\n".join(out).rstrip("\n") + "\n"


def pooled_means(table: ScoreTable, kind: str) -> dict[str, float]:
    sums: dict[str, list[float]] = defaultdict(list)
    for o in table.observations:
        if o.kind == kind:
            sums[o.candidate].append(o.value)
    return {c: float(np.mean(v)) for c, v in sums.items()}


def _slug(text: str) -> str:
    keep = "".join(ch.lower() if ch.isalnum() else "_" for ch in str(text))
    return "_".join(part for part in keep.split("_") if part) or "x"


def _write(path: Path, text: str) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8", newline="\n")
    os.replace(tmp, path)
    return sha256_hex(text)


def _now() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


def build_artifacts(bundle: ReportBundle) -> dict[str, str]:
    """Relative path -> text for every report file except the manifest."""
    files: dict[str, str] = {}
    period_labels = {p.index: p.label for p in bundle.periods}

    for agg in bundle.aggregates:
        files[f"qualitative/{agg.name if agg.mode == 'trend' else agg.mode + '_' + _slug(agg.group_key)}.json"] = (
            canonical_json(agg.to_dict(), indent=2) + "\n"
        )

    table = bundle.table
    files["tables/scores.csv"] = table.to_csv()
    if len(table):
        by_period = boxplot_summaries(table, "period")
        by_source = boxplot_summaries(table, "source")
        files["tables/boxplots_by_period.csv"] = boxplots_to_csv(by_period)
        files["tables/boxplots_by_source.csv"] = boxplots_to_csv(by_source)
        rows = []
        for kind in SCORE_KINDS:
            for axis in ("period", "source"):
                for (group, cand), mean in group_means(table, kind, axis).items():
                    rows.append((kind, axis, group, cand, mean))
        files["tables/group_means.csv"] = means_to_csv(rows)
        for axis, summaries in (("period", by_period), ("source", by_source)):
            for kind in SCORE_KINDS:
                chosen = [s for s in summaries if s.kind == kind]
                if chosen:
                    files[f"plots/boxplot_{kind}_by_{axis}.svg"] = render_boxplots(
                        chosen, axis, group_labels=period_labels if axis == "period" else None
                    )
        for axis in ("period", "source"):
            for kind in SCORE_KINDS:
                means = group_means(table, kind, axis)
                if means:
                    files[f"plots/means_{kind}_by_{axis}.svg"] = render_means_chart(
                        means, axis, kind, group_labels=period_labels if axis == "period" else None
                    )

    if bundle.fits:
        files["tables/fit_summaries.csv"] = fit_summaries_to_csv(bundle.fits)
        for fit in bundle.fits:
            if fit.data.scope != "pooled":
                continue
            obs = table.select(candidate=fit.data.candidate, kind=fit.data.kind)
            files[f"plots/trend_{_slug(fit.data.candidate)}_{fit.data.kind}.svg"] = render_trend_plot(obs, fit)
        for param in ("alpha", "beta"):
            summaries = posterior_summaries(bundle.fits, param)
            files[f"plots/posterior_{param}.svg"] = render_boxplots(
                summaries, "scope", value_range=None, show_outliers=False, title=f"Posterior {param} by scope"
            )
    files["summary.md"] = render_summary_markdown(bundle)
    return files


def emit_report(bundle: ReportBundle, out_dir: str | Path) -> Path:
    """Write the report under ``out_dir/report`` and return the manifest path.

    The manifest records a SHA-256 digest per artifact.  Only its
    ``generated_at``, ``started_at`` and ``finished_at`` fields vary between
    identical runs.
    """
    root = Path(out_dir) / "report"
    files = build_artifacts(bundle)
    try:
        artifacts = [{"path": rel, "sha256": _write(root / rel, text)} for rel, text in sorted(files.items())]
        manifest = {
            "config_digest": bundle.config_digest,
            "fixture_mode": bundle.fixture_mode,
            "candidates": list(bundle.candidates),
            "periods": [p.to_dict() for p in bundle.periods],
            "sources": [s.to_dict() for s in bundle.sources],
            "article_count": bundle.article_count,
            "exclusions": [e.to_dict() for e in bundle.exclusions],
            "artifacts": artifacts,
            "started_at": bundle.started_at,
            "finished_at": bundle.finished_at,
            "generated_at": _now(),
        }
        path = root / "manifest.json"
        _write(path, canonical_json(manifest, indent=2) + "\n")
    except OSError as exc:
        raise ReportIoError(f"cannot write report to {root}: {exc}") from exc
    return path


def load_manifest(path: str | Path) -> dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


TIMESTAMP_FIELDS = ("generated_at", "started_at", "finished_at")


def manifest_without_timestamps(manifest: Mapping[str, Any]) -> dict[str, Any]:
    return {k: v for k, v in manifest.items() if k not in TIMESTAMP_FIELDS}
