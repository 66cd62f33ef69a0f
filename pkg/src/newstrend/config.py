"""Campaign configuration: YAML loading, validation, defaults and digest."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any, Mapping

import yaml

from .bayes import PriorConfig, SamplerConfig
from .errors import ConfigParseError, ConfigValidationError
from .extract import ExtractionLimits
from .llm import DEFAULT_CONTEXT_BUDGET, DEFAULT_MODEL
from .models import SourceLabel, TimePeriod, canonical_json, check_periods, sha256_hex
from .search import DEFAULT_ENDPOINT, MAX_RESULTS_CEILING

MODES = ("live", "fixtures")

# Allowed keys per mapping; a nested dict describes a sub-mapping, None a leaf.
_PRIOR_SCHEMA = {"alpha": {"mean": None, "sd": None}, "beta": {"mean": None, "sd": None}, "sigma": {"sd": None}}
_SCHEMA: dict[str, Any] = {
    "query": None,
    "candidates": None,
    "mode": None,
    "periods": [{"start": None, "end": None}],
    "sources": [{"name": None, "site": None}],
    "search": {"max_results": None, "parallelism": None, "endpoint": None, "timeout": None},
    "fetch": {
        "min_chars": None,
        "max_chars": None,
        "timeout": None,
        "parallelism": None,
        "politeness_delay": None,
        "attempts": None,
        "browser": None,
    },
    "llm": {
        "base_url": None,
        "model": None,
        "temperature": None,
        "json_mode": None,
        "concurrency": None,
        "retries": None,
        "context_budget": None,
        "min_interval": None,
        "templates_dir": None,
    },
    "fit": {
        "per_source": None,
        "priors": _PRIOR_SCHEMA,
        "sampler": {name: None for name in SamplerConfig().to_dict()},
    },
    "fixtures_dir": None,
    "runs_dir": None,
}


@dataclass(frozen=True)
class SearchSettings:
    max_results: int = 10
    parallelism: int = 4
    endpoint: str = DEFAULT_ENDPOINT
    timeout: float = 30.0


@dataclass(frozen=True)
class FetchSettings:
    min_chars: int = 200
    max_chars: int = 24_000
    timeout: float = 30.0
    parallelism: int = 4
    politeness_delay: float = 1.0
    attempts: int = 2
    browser: bool = False

    def limits(self) -> ExtractionLimits:
        return ExtractionLimits(
            min_chars=self.min_chars,
            max_chars=self.max_chars,
            timeout=self.timeout,
            parallelism=self.parallelism,
            politeness_delay=self.politeness_delay,
            attempts=self.attempts,
        )


@dataclass(frozen=True)
class LlmSettings:
    base_url: str = "https://api.openai.com/v1"
    model: str = DEFAULT_MODEL
    temperature: float = 0.0
    json_mode: bool = True
    concurrency: int = 2
    retries: int = 2
    context_budget: int = DEFAULT_CONTEXT_BUDGET
    min_interval: float = 0.0
    templates_dir: str | None = None


@dataclass(frozen=True)
class FitSettings:
    per_source: bool = True
    priors: PriorConfig = PriorConfig()
    sampler: SamplerConfig = SamplerConfig()


@dataclass(frozen=True)
class CampaignConfig:
    query: str
    candidates: tuple[str, ...]
    periods: tuple[TimePeriod, ...]
    sources: tuple[SourceLabel, ...]
    mode: str = "live"
    search: SearchSettings = SearchSettings()
    fetch: FetchSettings = FetchSettings()
    llm: LlmSettings = LlmSettings()
    fit: FitSettings = FitSettings()
    fixtures_dir: str | None = None
    runs_dir: str = "runs"
    base_dir: Path = field(default=Path("."), compare=False)

    def to_dict(self) -> dict[str, Any]:
        """Normalized settings; ``base_dir`` is excluded so the digest is location-independent."""
        return {
            "query": self.query,
            "candidates": list(self.candidates),
            "mode": self.mode,
            "periods": [{"start": p.start_date.isoformat(), "end": p.end_date.isoformat()} for p in self.periods],
            "sources": [{"name": s.name, "site": s.site_filter} for s in self.sources],
            "search": dataclasses.asdict(self.search),
            "fetch": dataclasses.asdict(self.fetch),
            "llm": dataclasses.asdict(self.llm),
            "fit": {
                "per_source": self.fit.per_source,
                "priors": self.fit.priors.to_dict(),
                "sampler": self.fit.sampler.to_dict(),
            },
            "fixtures_dir": self.fixtures_dir,
            "runs_dir": self.runs_dir,
        }

    @property
    def digest(self) -> str:
        return sha256_hex(canonical_json(self.to_dict()))

    def resolve(self, path: str | None) -> Path | None:
        if path is None:
            return None
        p = Path(path)
        return (p if p.is_absolute() else self.base_dir / p).resolve()

    @property
    def fixtures_path(self) -> Path | None:
        return self.resolve(self.fixtures_dir)

    @property
    def runs_path(self) -> Path:
        return self.resolve(self.runs_dir)

    def with_overrides(self, *, mode: str | None = None, seed: int | None = None) -> CampaignConfig:
        cfg = self
        if mode is not None:
            if mode not in MODES:
                raise ConfigValidationError("mode", f"must be one of {', '.join(MODES)}, got {mode!r}")
            cfg = dataclasses.replace(cfg, mode=mode)
        if seed is not None:
            sampler = dataclasses.replace(cfg.fit.sampler, seed=seed)
            cfg = dataclasses.replace(cfg, fit=dataclasses.replace(cfg.fit, sampler=sampler))
        cfg._check_mode()
        return cfg

    def _check_mode(self) -> None:
        if self.mode == "fixtures" and not self.fixtures_dir:
            raise ConfigValidationError("fixtures_dir", "required when mode is 'fixtures'")


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------


def _check_keys(node: yaml.Node, schema: Any, path: str) -> None:
    """Reject keys absent from ``schema``, reporting the offending line."""
    if isinstance(schema, dict):
        if not isinstance(node, yaml.MappingNode):
            raise ConfigParseError(f"{path or 'config'} must be a mapping", node.start_mark.line + 1)
        for key_node, value_node in node.value:
            key = key_node.value
            where = f"{path}.{key}" if path else str(key)
            if key not in schema:
                raise ConfigParseError(f"unknown key {key!r} at {where}", key_node.start_mark.line + 1)
            if schema[key] is not None:
                _check_keys(value_node, schema[key], where)
    elif isinstance(schema, list):
        if not isinstance(node, yaml.SequenceNode):
            raise ConfigParseError(f"{path} must be a list", node.start_mark.line + 1)
        for i, item in enumerate(node.value):
            _check_keys(item, schema[0], f"{path}[{i}]")


def _typed(value: Any, kind: type | tuple[type, ...], name: str) -> Any:
    kinds = kind if isinstance(kind, tuple) else (kind,)
    # bool is an int subclass; only accept it where asked for
    if not isinstance(value, kinds) or (isinstance(value, bool) and bool not in kinds):
        expected = " or ".join(k.__name__ for k in kinds)
        raise ConfigValidationError(name, f"expected {expected}, got {type(value).__name__}")
    return value


def _section(raw: Mapping[str, Any], name: str, cls: type, types: Mapping[str, Any]) -> Any:
    data = raw.get(name) or {}
    values = {}
    for key, value in data.items():
        values[key] = _typed(value, types[key], f"{name}.{key}")
    try:
        obj = cls(**values)
    except ValueError as exc:
        raise ConfigValidationError(name, str(exc)) from exc
    return obj


def _positive(obj: Any, section: str, names: tuple[str, ...], allow_zero: tuple[str, ...] = ()) -> None:
    for n in names:
        v = getattr(obj, n)
        if v < 0 or (v == 0 and n not in allow_zero):
            raise ConfigValidationError(f"{section}.{n}", f"must be {'>= 0' if n in allow_zero else '> 0'}, got {v}")


_NUM = (int, float)


def _date(value: Any, name: str) -> date:
    if isinstance(value, date):
        return value
    if isinstance(value, str):
        try:
            return date.fromisoformat(value)
        except ValueError:
            pass
    raise ConfigValidationError(name, f"expected an ISO date (YYYY-MM-DD), got {value!r}")


def parse_config(text: str, base_dir: str | Path = ".") -> CampaignConfig:
    try:
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigParseError(f"invalid YAML: {getattr(exc, 'problem', exc)}", mark.line + 1 if mark else None) from exc
    if node is None:
        raise ConfigParseError("config is empty", 1)
    _check_keys(node, _SCHEMA, "")
    raw = yaml.safe_load(text)

    for key in ("query", "candidates", "periods", "sources"):
        if key not in raw or raw[key] in (None, "", []):
            raise ConfigValidationError(key, "is required")
    query = _typed(raw["query"], str, "query").strip()
    if not query:
        raise ConfigValidationError("query", "must be non-empty")

    candidates = tuple(_typed(c, str, "candidates").strip() for c in _typed(raw["candidates"], list, "candidates"))
    if any(not c for c in candidates):
        raise ConfigValidationError("candidates", "names must be non-empty")
    if len({c.casefold() for c in candidates}) != len(candidates):
        raise ConfigValidationError("candidates", "names must be unique")

    periods = []
    for i, item in enumerate(raw["periods"]):
        for part in ("start", "end"):
            if part not in item:
                raise ConfigValidationError(f"periods[{i}].{part}", "is required")
        start, end = _date(item["start"], f"periods[{i}].start"), _date(item["end"], f"periods[{i}].end")
        if end < start:
            raise ConfigValidationError(f"periods[{i}].end", f"end date {end} is before start date {start}")
        periods.append(TimePeriod(i, start, end))
    try:
        check_periods(periods)
    except ValueError as exc:
        raise ConfigValidationError("periods", str(exc)) from exc

    sources = []
    for i, item in enumerate(raw["sources"]):
        if "name" not in item:
            raise ConfigValidationError(f"sources[{i}].name", "is required")
        name = _typed(item["name"], str, f"sources[{i}].name")
        site = _typed(item.get("site") or "", str, f"sources[{i}].site").strip()
        try:
            sources.append(SourceLabel(name.strip(), site))
        except ValueError as exc:
            raise ConfigValidationError(f"sources[{i}].name", str(exc)) from exc
    if len({s.name for s in sources}) != len(sources):
        raise ConfigValidationError("sources", "names must be unique")

    mode = raw.get("mode", "live")
    if mode not in MODES:
        raise ConfigValidationError("mode", f"must be one of {', '.join(MODES)}, got {mode!r}")

    search = _section(raw, "search", SearchSettings, {"max_results": int, "parallelism": int, "endpoint": str, "timeout": _NUM})
    if not (1 <= search.max_results <= MAX_RESULTS_CEILING):
        raise ConfigValidationError("search.max_results", f"must be in [1, {MAX_RESULTS_CEILING}], got {search.max_results}")
    _positive(search, "search", ("parallelism", "timeout"))

    fetch = _section(
        raw,
        "fetch",
        FetchSettings,
        {
            "min_chars": int,
            "max_chars": int,
            "timeout": _NUM,
            "parallelism": int,
            "politeness_delay": _NUM,
            "attempts": int,
            "browser": bool,
        },
    )
    _positive(fetch, "fetch", ("min_chars", "max_chars", "timeout", "parallelism", "politeness_delay", "attempts"), ("politeness_delay",))
    if fetch.max_chars < fetch.min_chars:
        raise ConfigValidationError("fetch.max_chars", "must be >= fetch.min_chars")

    llm = _section(
        raw,
        "llm",
        LlmSettings,
        {
            "base_url": str,
            "model": str,
            "temperature": _NUM,
            "json_mode": bool,
            "concurrency": int,
            "retries": int,
            "context_budget": int,
            "min_interval": _NUM,
            "templates_dir": (str, type(None)),
        },
    )
    _positive(llm, "llm", ("temperature", "concurrency", "retries", "context_budget", "min_interval"), ("temperature", "retries", "min_interval"))

    fit_raw = raw.get("fit") or {}
    per_source = _typed(fit_raw.get("per_source", True), bool, "fit.per_source")
    try:
        priors = PriorConfig.from_dict(fit_raw.get("priors") or {})
    except (ValueError, TypeError) as exc:
        raise ConfigValidationError("fit.priors", str(exc)) from exc
    sampler_raw = fit_raw.get("sampler") or {}
    int_fields = {"chains", "iterations", "warmup", "seed"}
    for k, v in sampler_raw.items():
        _typed(v, int if k in int_fields else _NUM, f"fit.sampler.{k}")
    try:
        sampler = SamplerConfig(**sampler_raw)
    except ValueError as exc:
        raise ConfigValidationError("fit.sampler", str(exc)) from exc

    fixtures_dir = raw.get("fixtures_dir")
    if fixtures_dir is not None:
        _typed(fixtures_dir, str, "fixtures_dir")
    runs_dir = _typed(raw.get("runs_dir", "runs"), str, "runs_dir")

    cfg = CampaignConfig(
        query=query,
        candidates=candidates,
        periods=tuple(periods),
        sources=tuple(sources),
        mode=mode,
        search=search,
        fetch=fetch,
        llm=llm,
        fit=FitSettings(per_source=per_source, priors=priors, sampler=sampler),
        fixtures_dir=fixtures_dir,
        runs_dir=runs_dir,
        base_dir=Path(base_dir),
    )
    cfg._check_mode()
    return cfg


def load_config(path: str | Path) -> CampaignConfig:
    """Read, validate and default a YAML campaign file.

    Relative paths inside the file resolve against the file's directory.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigParseError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base_dir=path.resolve().parent)
