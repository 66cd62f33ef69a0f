"""Stage orchestration with a resumable run directory.

Every stage reads the previous stage's files from the run directory and
writes its own, then drops a marker in ``.done/<stage>.json`` holding the digest of its
inputs and of each output file.  With ``resume=True`` a stage whose marker
still matches is loaded from disk instead of being recomputed.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from datetime import datetime, time as dtime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .bayes import PosteriorSamples, TrendData, TrendFit, diagnostics, fit_trend
from .config import CampaignConfig
from .errors import (
    ContextBudgetExceeded,
    DegenerateData,
    EmptyGroup,
    EmptyInput,
    EndpointUnavailable,
    MalformedAfterRetries,
    MissingFixture,
    NewsTrendError,
    StageFailed,
)
from .extract import (
    ArticleCache,
    BrowserLoader,
    FetchRecord,
    FixtureLoader,
    HostThrottle,
    HttpLoader,
    PageLoader,
    RecordingLoader,
    fetch_group,
)
from .llm import (
    ChatClient,
    ChatCompletionsClient,
    FixtureChatClient,
    FixtureStore,
    RecordingChatClient,
    analyze_articles,
    analyze_group,
    load_templates,
)
from .models import SCORE_KINDS, AggregateAnalysis, Article, ArticleAnalysis, canonical_json, sha256_hex
from .report import Exclusion, ReportBundle, emit_report
from .search import (
    FixtureSearchBackend,
    ProgrammableSearchBackend,
    RecordingSearchBackend,
    SearchBackend,
    SearchHit,
    SearchRequest,
    UrlGroup,
    build_requests,
    group_urls,
    run_searches,
)
from .stats import ScoreTable, boxplot_summaries, collect_scores

log = logging.getLogger(__name__)

STAGES = ("search", "fetch", "analyze", "aggregate", "stats", "fit", "report")
MARKER_DIR = ".done"


# ---------------------------------------------------------------------------
# services
# ---------------------------------------------------------------------------


class Services:
    """External collaborators, built lazily so unused ones never need credentials.

    Anything passed explicitly wins over the mode-derived default.  In live
    mode every response is also recorded under ``<run dir>/fixtures`` so the
    run can later be replayed in fixtures mode.
    """

    def __init__(
        self,
        config: CampaignConfig,
        run_dir: Path,
        *,
        search_backend: SearchBackend | None = None,
        loader: PageLoader | None = None,
        client: ChatClient | None = None,
    ):
        self.config = config
        self.run_dir = run_dir
        self._backend = search_backend
        self._loader = loader
        self._client = client

    @property
    def fixtures(self) -> bool:
        return self.config.mode == "fixtures"

    def _fixture_dir(self, part: str) -> Path:
        return self.config.fixtures_path / part

    def _record_dir(self, part: str) -> Path:
        return self.run_dir / "fixtures" / part

    @property
    def search_backend(self) -> SearchBackend:
        if self._backend is None:
            if self.fixtures:
                self._backend = FixtureSearchBackend(self._fixture_dir("search"))
            else:
                live = ProgrammableSearchBackend.from_env(
                    endpoint=self.config.search.endpoint, timeout=self.config.search.timeout
                )
                self._backend = RecordingSearchBackend(live, self._record_dir("search"))
        return self._backend

    @property
    def loader(self) -> PageLoader:
        if self._loader is None:
            if self.fixtures:
                directory = self._fixture_dir("pages")
                self._loader = FixtureLoader.from_dir(directory) if (directory / "index.json").exists() else FixtureLoader({})
            else:
                live = BrowserLoader() if self.config.fetch.browser else HttpLoader()
                self._loader = RecordingLoader(live, self._record_dir("pages"))
        return self._loader

    @property
    def client(self) -> ChatClient:
        if self._client is None:
            if self.fixtures:
                self._client = FixtureChatClient(FixtureStore(self._fixture_dir("llm")))
            else:
                s = self.config.llm
                live = ChatCompletionsClient.from_env(
                    s.base_url,
                    model=s.model,
                    temperature=s.temperature,
                    json_mode=s.json_mode,
                    min_interval=s.min_interval,
                )
                self._client = RecordingChatClient(live, FixtureStore(self._record_dir("llm")))
        return self._client


# ---------------------------------------------------------------------------
# run-directory helpers
# ---------------------------------------------------------------------------


def _dump(path: Path, obj: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(canonical_json(obj, indent=2) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def _load(path: Path) -> Any:
    return json.loads(path.read_text(encoding="utf-8"))


def _file_digest(path: Path) -> str:
    return sha256_hex(path.read_bytes())


def _now() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


@dataclass
class StageRecord:
    """What one stage did in this invocation."""

    name: str
    skipped: bool
    input_digest: str


@dataclass
class RunResult:
    bundle: ReportBundle | None
    run_dir: Path
    stages: list[StageRecord] = field(default_factory=list)

    @property
    def executed(self) -> list[str]:
        return [s.name for s in self.stages if not s.skipped]

    @property
    def skipped(self) -> list[str]:
        return [s.name for s in self.stages if s.skipped]


class Pipeline:
    """Linear stage runner bound to one config and run directory."""

    def __init__(
        self,
        config: CampaignConfig,
        run_dir: str | Path | None = None,
        *,
        resume: bool = False,
        services: Services | None = None,
        search_backend: SearchBackend | None = None,
        loader: PageLoader | None = None,
        client: ChatClient | None = None,
    ):
        self.config = config
        self.run_dir = Path(run_dir) if run_dir is not None else config.runs_path / config.digest
        self.resume = resume
        self.services = services or Services(
            config, self.run_dir, search_backend=search_backend, loader=loader, client=client
        )
        self._templates = None
        self._bundle: ReportBundle | None = None

    # -- markers -------------------------------------------------------------

    def stage_dir(self, stage: str) -> Path:
        return self.run_dir / stage

    def marker_path(self, stage: str) -> Path:
        return self.run_dir / MARKER_DIR / f"{stage}.json"

    def _input_digest(self, stage: str) -> str:
        i = STAGES.index(stage)
        upstream = None
        if i > 0:
            marker = self.marker_path(STAGES[i - 1])
            upstream = _load(marker)["output_digest"] if marker.exists() else None
        return sha256_hex(canonical_json({"stage": stage, "config": self.config.digest, "upstream": upstream}))

    def is_complete(self, stage: str) -> bool:
        """True when the marker matches the current inputs and every output is intact."""
        marker = self.marker_path(stage)
        if not marker.exists():
            return False
        try:
            data = _load(marker)
        except (OSError, ValueError):
            return False
        if data.get("input_digest") != self._input_digest(stage):
            return False
        for rel, digest in data.get("outputs", {}).items():
            path = self.run_dir / rel
            if not path.exists() or _file_digest(path) != digest:
                return False
        return True

    def _mark_done(self, stage: str, outputs: Iterable[Path]) -> None:
        files = {str(p.relative_to(self.run_dir).as_posix()): _file_digest(p) for p in sorted(outputs)}
        _dump(
            self.marker_path(stage),
            {
                "stage": stage,
                "input_digest": self._input_digest(stage),
                "outputs": files,
                "output_digest": sha256_hex(canonical_json(files)),
            },
        )

    def _require(self, stage: str) -> None:
        before = STAGES[STAGES.index(stage) - 1]
        if not self.marker_path(before).exists():
            raise StageFailed(stage, f"needs a completed '{before}' stage in {self.run_dir}; run it first")

    # -- orchestration -------------------------------------------------------

    def run(self, stage_filter: Sequence[str] | None = None) -> RunResult:
        """Execute the selected stages in order (all by default).

        A stage outside ``stage_filter`` must already be complete on disk.
        MissingFixture propagates unchanged; any other failure is wrapped in
        StageFailed naming the stage, leaving earlier outputs in place.
        """
        selected = list(STAGES) if not stage_filter else [s for s in STAGES if s in set(stage_filter)]
        unknown = set(stage_filter or ()) - set(STAGES)
        if unknown:
            raise ValueError(f"unknown stage(s): {', '.join(sorted(unknown))}")
        self.run_dir.mkdir(parents=True, exist_ok=True)
        started = _now()
        result = RunResult(bundle=None, run_dir=self.run_dir)
        for stage in selected:
            if self.resume and self.is_complete(stage):
                log.info("stage %s: up to date, skipping", stage)
                result.stages.append(StageRecord(stage, True, self._input_digest(stage)))
                continue
            if STAGES.index(stage) > 0:
                self._require(stage)
            log.info("stage %s: running", stage)
            try:
                outputs = getattr(self, f"_stage_{stage}")(started)
            except (MissingFixture, StageFailed):
                raise
            except NewsTrendError as exc:
                raise StageFailed(stage, str(exc)) from exc
            except (OSError, ValueError, KeyError) as exc:
                raise StageFailed(stage, f"{type(exc).__name__}: {exc}") from exc
            self._mark_done(stage, outputs)
            result.stages.append(StageRecord(stage, False, self._input_digest(stage)))
        if "report" in selected:
            result.bundle = self._bundle or self.load_bundle(started)
        return result

    # -- stages ----------------------------------------------------------------

    def _stage_search(self, started: str) -> list[Path]:
        cfg = self.config
        reqs = build_requests(cfg.query, cfg.periods, cfg.sources, cfg.search.max_results)
        outcome = run_searches(reqs, self.services.search_backend, parallelism=cfg.search.parallelism)
        groups = group_urls(outcome.hits)
        d = self.stage_dir("search")
        paths = [d / "requests.json", d / "hits.json", d / "groups.json", d / "exclusions.json"]
        _dump(paths[0], [r.to_dict() for r in reqs])
        _dump(
            paths[1],
            [{"request": r.to_dict(), "hits": [h.to_dict() for h in outcome.hits[r]]} for r in reqs if r in outcome.hits],
        )
        _dump(paths[2], [g.to_dict() for g in groups])
        excl = [
            Exclusion("search", f"period {r.period.index} / {r.source.name}", reason)
            for r, reason in sorted(outcome.failed.items(), key=lambda kv: kv[0].cell)
        ]
        _dump(paths[3], [e.to_dict() for e in excl])
        return paths

    def load_groups(self) -> list[UrlGroup]:
        return [UrlGroup.from_dict(g) for g in _load(self.stage_dir("search") / "groups.json")]

    def load_hits(self) -> dict[SearchRequest, list[SearchHit]]:
        return {
            SearchRequest.from_dict(e["request"]): [SearchHit.from_dict(h) for h in e["hits"]]
            for e in _load(self.stage_dir("search") / "hits.json")
        }

    def _clock_for(self, period_index: int) -> Callable[[], datetime]:
        if self.config.mode != "fixtures":
            return lambda: datetime.now(timezone.utc).replace(microsecond=0)
        # Replays must not depend on the wall clock.
        end = self.config.periods[period_index].end_date
        stamp = datetime.combine(end, dtime(0, 0), tzinfo=timezone.utc)
        return lambda: stamp

    def _stage_fetch(self, started: str) -> list[Path]:
        cfg = self.config
        limits = cfg.fetch.limits()
        cache = ArticleCache(self.run_dir / "cache" / "articles")
        delay = 0.0 if cfg.mode == "fixtures" else limits.politeness_delay
        throttle = HostThrottle(delay)
        records: list[dict[str, Any]] = []
        excl: list[Exclusion] = []
        for group in self.load_groups():
            for rec in fetch_group(group, cache, self.services.loader, limits, throttle=throttle, clock=self._clock_for(group.period)):
                records.append({"period": group.period, "source": group.source, "record": rec.to_dict()})
                if not rec.ok:
                    excl.append(Exclusion("fetch", rec.url, rec.failure_reason or "failed"))
        d = self.stage_dir("fetch")
        paths = [d / "records.json", d / "exclusions.json"]
        _dump(paths[0], records)
        _dump(paths[1], [e.to_dict() for e in excl])
        return paths

    def load_articles(self) -> list[Article]:
        out = []
        for entry in _load(self.stage_dir("fetch") / "records.json"):
            rec = FetchRecord.from_dict(entry["record"])
            if rec.ok:
                out.append(rec.article)
        return out

    @property
    def templates(self):
        if self._templates is None:
            self._templates = load_templates(self.config.resolve(self.config.llm.templates_dir))
        return self._templates

    def _stage_analyze(self, started: str) -> list[Path]:
        cfg = self.config
        articles = self.load_articles()
        unique: dict[str, Article] = {}
        for a in articles:
            unique.setdefault(a.content_hash, a)
        outcomes = analyze_articles(
            list(unique.values()),
            self.services.client,
            self.templates["level1"],
            cfg.candidates,
            retries=cfg.llm.retries,
            concurrency=cfg.llm.concurrency,
        )
        by_hash = {o.article.content_hash: o for o in outcomes}
        rows, excl = [], []
        for a in articles:
            o = by_hash[a.content_hash]
            if o.analysis is None:
                excl.append(Exclusion("analyze", a.url, o.error or "analysis failed"))
                continue
            rows.append({"article": a.to_dict(), "analysis": o.analysis.to_dict()})
        d = self.stage_dir("analyze")
        paths = [d / "analyses.json", d / "exclusions.json"]
        _dump(paths[0], rows)
        _dump(paths[1], [e.to_dict() for e in _dedupe(excl)])
        return paths

    def load_analyses(self) -> list[tuple[ArticleAnalysis, Article]]:
        return [
            (ArticleAnalysis.from_dict(r["analysis"]), Article.from_dict(r["article"]))
            for r in _load(self.stage_dir("analyze") / "analyses.json")
        ]

    def _stage_aggregate(self, started: str) -> list[Path]:
        cfg = self.config
        pairs = self.load_analyses()
        client, t = self.services.client, self.templates
        aggs: list[AggregateAnalysis] = []
        excl: list[Exclusion] = []

        def attempt(label: str, fn: Callable[[], AggregateAnalysis]) -> AggregateAnalysis | None:
            try:
                return fn()
            except EmptyGroup:
                excl.append(Exclusion("aggregate", label, "no analyses in group"))
            except (MalformedAfterRetries, ContextBudgetExceeded, EndpointUnavailable) as exc:
                excl.append(Exclusion("aggregate", label, str(exc)))
            return None

        def docs(pred) -> list[ArticleAnalysis]:
            seen: dict[str, ArticleAnalysis] = {}
            for analysis, article in pairs:
                if pred(article):
                    seen.setdefault(analysis.article_ref, analysis)
            return list(seen.values())

        common = dict(candidates=cfg.candidates, retries=cfg.llm.retries, budget=cfg.llm.context_budget)
        periods = []
        for p in cfg.periods:
            group = docs(lambda a, i=p.index: a.period == i)
            agg = attempt(
                f"by_period {p.index}",
                lambda: analyze_group(group, p.index, client, t["by_period"], "by_period", group_label=p.label, **common),
            )
            if agg is not None:
                periods.append(agg)
        aggs += periods
        for s in cfg.sources:
            group = docs(lambda a, n=s.name: a.source == n)
            agg = attempt(
                f"by_source {s.name}",
                lambda: analyze_group(group, s.name, client, t["by_source"], "by_source", group_label=s.name, **common),
            )
            if agg is not None:
                aggs.append(agg)
        trend = attempt(
            "trend",
            lambda: analyze_group(periods, None, client, t["trend"], "trend", group_label="all periods", **common),
        )
        if trend is not None:
            aggs.append(trend)
        d = self.stage_dir("aggregate")
        paths = [d / "aggregates.json", d / "exclusions.json"]
        _dump(paths[0], [a.to_dict() for a in aggs])
        _dump(paths[1], [e.to_dict() for e in excl])
        return paths

    def load_aggregates(self) -> list[AggregateAnalysis]:
        return [AggregateAnalysis.from_dict(a) for a in _load(self.stage_dir("aggregate") / "aggregates.json")]

    def _stage_stats(self, started: str) -> list[Path]:
        cfg = self.config
        table = collect_scores(
            self.load_analyses(), [p.index for p in cfg.periods], [s.name for s in cfg.sources]
        )
        d = self.stage_dir("stats")
        paths = [d / "scores.csv", d / "boxplots.json"]
        d.mkdir(parents=True, exist_ok=True)
        paths[0].write_text(table.to_csv(), encoding="utf-8", newline="\n")
        boxes = {}
        if len(table):
            boxes = {axis: [b.to_dict() for b in boxplot_summaries(table, axis)] for axis in ("period", "source")}
        _dump(paths[1], boxes)
        return paths

    def load_table(self) -> ScoreTable:
        cfg = self.config
        return ScoreTable.from_csv(
            (self.stage_dir("stats") / "scores.csv").read_text(encoding="utf-8"),
            [p.index for p in cfg.periods],
            [s.name for s in cfg.sources],
        )

    def trend_datasets(self, table: ScoreTable) -> list[TrendData]:
        """Pooled series per (candidate, kind), plus per-source series when configured."""
        cfg = self.config
        out = []
        for cand in cfg.candidates:
            for kind in SCORE_KINDS:
                scopes: list[tuple[str, str | None]] = [("pooled", None)]
                if cfg.fit.per_source:
                    scopes += [(s.name, s.name) for s in cfg.sources]
                for scope, source in scopes:
                    obs = table.select(candidate=cand, kind=kind, source=source)
                    out.append(
                        TrendData(tuple((float(o.period_index), o.value) for o in obs), cand, kind, scope)
                    )
        return out

    def _stage_fit(self, started: str) -> list[Path]:
        cfg = self.config
        d = self.stage_dir("fit")
        d.mkdir(parents=True, exist_ok=True)
        for old in d.glob("draws_*.npy"):
            old.unlink()
        t_grid = [float(p.index) for p in cfg.periods]
        entries, excl, paths = [], [], []
        for data in self.trend_datasets(self.load_table()):
            label = f"{data.candidate} / {data.kind} / {data.scope}"
            try:
                fit = fit_trend(data, cfg.fit.priors, cfg.fit.sampler, t_grid=t_grid)
            except (DegenerateData, EmptyInput) as exc:
                excl.append(Exclusion("fit", label, str(exc)))
                continue
            draws_path = d / f"draws_{len(entries):03d}.npy"
            np.save(draws_path, np.ascontiguousarray(fit.posterior.draws), allow_pickle=False)
            paths.append(draws_path)
            entries.append(
                {
                    "candidate": data.candidate,
                    "kind": data.kind,
                    "scope": data.scope,
                    "points": [list(p) for p in data.points],
                    "draws": draws_path.name,
                    "acceptance_rate": fit.posterior.acceptance_rate,
                    "step_sizes": fit.posterior.step_sizes.tolist(),
                    "alpha_mean": fit.alpha_mean,
                    "beta_mean": fit.beta_mean,
                    "prob_beta_positive": fit.prob_beta_positive,
                    "t_grid": list(fit.t_grid),
                    "band_lower": list(fit.band_lower),
                    "band_upper": list(fit.band_upper),
                }
            )
        paths += [d / "fits.json", d / "exclusions.json"]
        _dump(d / "fits.json", entries)
        _dump(d / "exclusions.json", [e.to_dict() for e in excl])
        return paths

    def load_fits(self) -> list[TrendFit]:
        d = self.stage_dir("fit")
        fits = []
        for e in _load(d / "fits.json"):
            draws = np.load(d / e["draws"], allow_pickle=False)
            draws.setflags(write=False)
            posterior = PosteriorSamples(
                draws=draws,
                diagnostics=diagnostics(draws),
                acceptance_rate=e["acceptance_rate"],
                step_sizes=np.asarray(e["step_sizes"], dtype=float),
            )
            fits.append(
                TrendFit(
                    data=TrendData(tuple(tuple(p) for p in e["points"]), e["candidate"], e["kind"], e["scope"]),
                    posterior=posterior,
                    alpha_mean=e["alpha_mean"],
                    beta_mean=e["beta_mean"],
                    t_grid=tuple(e["t_grid"]),
                    band_lower=tuple(e["band_lower"]),
                    band_upper=tuple(e["band_upper"]),
                    prob_beta_positive=e["prob_beta_positive"],
                )
            )
        return fits

    def exclusions(self) -> list[Exclusion]:
        out = []
        for stage in STAGES:
            path = self.stage_dir(stage) / "exclusions.json"
            if path.exists():
                out += [Exclusion.from_dict(e) for e in _load(path)]
        return out

    def load_bundle(self, started: str = "") -> ReportBundle:
        cfg = self.config
        fit_done = self.marker_path("fit").exists()
        return ReportBundle(
            config_digest=cfg.digest,
            candidates=cfg.candidates,
            periods=cfg.periods,
            sources=cfg.sources,
            aggregates=tuple(self.load_aggregates()),
            table=self.load_table(),
            fits=tuple(self.load_fits()) if fit_done else (),
            fixture_mode=cfg.mode == "fixtures",
            article_count=len({a.content_hash for _, a in self.load_analyses()}),
            exclusions=tuple(self.exclusions()),
            started_at=started,
            finished_at=_now(),
        )

    def _stage_report(self, started: str) -> list[Path]:
        bundle = self.load_bundle(started)
        manifest = emit_report(bundle, self.run_dir)
        self._bundle = bundle
        report_dir = manifest.parent
        # The manifest carries timestamps, so only the other artifacts are tracked.
        return sorted(p for p in report_dir.rglob("*") if p.is_file() and p != manifest)


def _dedupe(items: Sequence[Exclusion]) -> list[Exclusion]:
    return list(dict.fromkeys(items))


def run_pipeline(
    config: CampaignConfig,
    stage_filter: Sequence[str] | None = None,
    *,
    run_dir: str | Path | None = None,
    resume: bool = False,
    search_backend: SearchBackend | None = None,
    loader: PageLoader | None = None,
    client: ChatClient | None = None,
) -> RunResult:
    pipeline = Pipeline(
        config, run_dir, resume=resume, search_backend=search_backend, loader=loader, client=client
    )
    return pipeline.run(stage_filter)
