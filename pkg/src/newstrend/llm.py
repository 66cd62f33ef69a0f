"""Prompt rendering, chat-completion clients and structured-response parsing.

Level 1 scores one article.  Level 2 is retrieval-augmented: its context is
the validated level-1 JSON documents (or, for the trend prompt, the
period-level aggregates), never the article text itself.
"""

from __future__ import annotations

import json
import logging
import os
import re
import string
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence

import requests

from .errors import (
    AnalysisValidationError,
    ContextBudgetExceeded,
    EmptyGroup,
    EndpointUnavailable,
    MalformedAfterRetries,
    MissingFixture,
    MissingPlaceholder,
    ResponseParseError,
)
from .models import (
    AggregateAnalysis,
    Article,
    ArticleAnalysis,
    canonical_json,
    sha256_hex,
    validate_aggregate_analysis,
    validate_article_analysis,
)

log = logging.getLogger(__name__)

TEMPLATE_NAMES = ("level1", "by_period", "by_source", "trend")
LEVEL2_MODES = ("by_period", "by_source", "trend")
DEFAULT_CONTEXT_BUDGET = 100_000
DEFAULT_MODEL = "gpt-4o"

_REQUIRED_PLACEHOLDERS = {"level1": ("article_text",), "level2": ("context",)}


@dataclass(frozen=True)
class PromptTemplate:
    system_text: str
    instruction_text: str
    output_schema_text: str

    def placeholders(self) -> set[str]:
        names = set()
        for _, name, _, _ in string.Formatter().parse(self.instruction_text):
            if name is not None:
                names.add(name)
        return names

    def render(self, values: Mapping[str, str], required: Sequence[str] = ()) -> str:
        names = self.placeholders()
        for name in required:
            if name not in names:
                raise MissingPlaceholder(name)
        supplied = dict(values)
        supplied.setdefault("output_schema", self.output_schema_text.strip())
        for name in names:
            if name not in supplied:
                raise MissingPlaceholder(name)
        return self.instruction_text.format_map(supplied)


def load_template(name: str, directory: str | Path | None = None) -> PromptTemplate:
    """Read ``<name>.system.txt``, ``<name>.instruction.txt`` and ``<name>.schema.txt``.

    Without a directory the packaged defaults are used.  Literal braces in
    instruction text must be doubled.
    """
    def read(part: str) -> str:
        filename = f"{name}.{part}.txt"
        if directory is None:
            return resources.files("newstrend").joinpath("templates", filename).read_text(encoding="utf-8")
        return (Path(directory) / filename).read_text(encoding="utf-8")

    return PromptTemplate(
        system_text=read("system").strip(),
        instruction_text=read("instruction"),
        output_schema_text=read("schema"),
    )


def load_templates(directory: str | Path | None = None) -> dict[str, PromptTemplate]:
    return {name: load_template(name, directory) for name in TEMPLATE_NAMES}


@dataclass(frozen=True)
class RenderedPrompt:
    messages: tuple[tuple[str, str], ...]

    @property
    def text(self) -> str:
        return "\n\n".join(content for _, content in self.messages)

    @property
    def digest(self) -> str:
        return sha256_hex(canonical_json([list(m) for m in self.messages]))

    def as_chat(self) -> list[dict[str, str]]:
        return [{"role": role, "content": content} for role, content in self.messages]

    def with_correction(self, previous_reply: str, problem: str) -> RenderedPrompt:
        note = (
            "Your previous reply could not be accepted: "
            f"{problem}. Reply again with the corrected JSON object only, following the required structure."
        )
        return RenderedPrompt(self.messages + (("assistant", previous_reply), ("user", note)))


def _candidate_list(candidates: Sequence[str]) -> str:
    return ", ".join(candidates)


def render_level1_prompt(article: Article, template: PromptTemplate, candidates: Sequence[str]) -> RenderedPrompt:
    if not article.text.strip():
        raise ValueError("article text is empty")
    body = template.render(
        {"article_text": article.text, "candidates": _candidate_list(candidates)},
        required=_REQUIRED_PLACEHOLDERS["level1"],
    )
    return RenderedPrompt((("system", template.system_text), ("user", body)))


def level2_context(analyses: Sequence[ArticleAnalysis | AggregateAnalysis], mode: str) -> str:
    docs = list(analyses)
    if mode == "trend":
        docs.sort(key=lambda a: a.group_key if isinstance(a, AggregateAnalysis) and a.group_key is not None else -1)
    return "\n".join(canonical_json(doc.to_dict()) for doc in docs)


def render_level2_prompt(
    analyses: Sequence[ArticleAnalysis | AggregateAnalysis],
    group_key: int | str | None,
    template: PromptTemplate,
    mode: str,
    candidates: Sequence[str],
    *,
    group_label: str | None = None,
    budget: int = DEFAULT_CONTEXT_BUDGET,
) -> RenderedPrompt:
    """Render a level-2 prompt over level-1 analyses (or period aggregates in trend mode)."""
    if mode not in LEVEL2_MODES:
        raise ValueError(f"unknown level-2 mode {mode!r}")
    if not analyses:
        raise EmptyGroup(f"no analyses for {mode} group {group_key!r}")
    if mode == "trend":
        bad = [a for a in analyses if not (isinstance(a, AggregateAnalysis) and a.mode == "by_period")]
        if bad:
            raise ValueError("trend prompts take period aggregates only")
    context = level2_context(analyses, mode)
    if len(context) > budget:
        raise ContextBudgetExceeded(len(context), budget)
    body = template.render(
        {
            "context": context,
            "candidates": _candidate_list(candidates),
            "group_label": group_label if group_label is not None else str(group_key),
        },
        required=_REQUIRED_PLACEHOLDERS["level2"],
    )
    return RenderedPrompt((("system", template.system_text), ("user", body)))


# ---------------------------------------------------------------------------
# clients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LlmExchange:
    request_digest: str
    model_name: str
    response_text: str
    input_tokens: int = 0
    output_tokens: int = 0
    latency: float = 0.0
    messages: tuple[tuple[str, str], ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "request_digest": self.request_digest,
            "model_name": self.model_name,
            "response_text": self.response_text,
            "token_counts": {"input": self.input_tokens, "output": self.output_tokens},
            "latency": self.latency,
            "messages": [{"role": r, "content": c} for r, c in self.messages],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> LlmExchange:
        tokens = data.get("token_counts", {})
        return cls(
            request_digest=data["request_digest"],
            model_name=data["model_name"],
            response_text=data["response_text"],
            input_tokens=int(tokens.get("input", 0)),
            output_tokens=int(tokens.get("output", 0)),
            latency=float(data.get("latency", 0.0)),
            messages=tuple((m["role"], m["content"]) for m in data.get("messages", ())),
        )


class ChatClient(Protocol):
    def complete(self, prompt: RenderedPrompt) -> LlmExchange: ...


class ChatCompletionsClient:
    """Live client for the chat-completions wire format (``POST {base_url}/chat/completions``)."""

    def __init__(
        self,
        base_url: str,
        api_key: str,
        model: str = DEFAULT_MODEL,
        *,
        temperature: float = 0.0,
        timeout: float = 120.0,
        json_mode: bool = True,
        min_interval: float = 0.0,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.model = model
        self.temperature = temperature
        self.timeout = timeout
        self.json_mode = json_mode
        self.min_interval = min_interval
        self.session = session or requests.Session()
        self._rate_lock = threading.Lock()
        self._last_call = 0.0

    @classmethod
    def from_env(cls, base_url: str, key_var: str = "LLM_API_KEY", **kwargs: Any) -> ChatCompletionsClient:
        api_key = os.environ.get(key_var)
        if not api_key:
            raise EndpointUnavailable(f"set {key_var} to use the live chat endpoint")
        return cls(base_url, api_key, **kwargs)

    def payload(self, prompt: RenderedPrompt) -> dict[str, Any]:
        body: dict[str, Any] = {
            "model": self.model,
            "messages": prompt.as_chat(),
            "temperature": self.temperature,
        }
        if self.json_mode:
            body["response_format"] = {"type": "json_object"}
        return body

    def _throttle(self) -> None:
        if self.min_interval <= 0:
            return
        with self._rate_lock:
            wait = self._last_call + self.min_interval - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            self._last_call = time.monotonic()

    def complete(self, prompt: RenderedPrompt) -> LlmExchange:
        self._throttle()
        started = time.monotonic()
        try:
            resp = self.session.post(
                f"{self.base_url}/chat/completions",
                headers={"Authorization": f"Bearer {self.api_key}", "Content-Type": "application/json"},
                json=self.payload(prompt),
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise EndpointUnavailable(f"chat endpoint unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise EndpointUnavailable(f"chat endpoint returned HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            data = resp.json()
            content = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise EndpointUnavailable("chat endpoint returned an unexpected payload") from exc
        usage = data.get("usage") or {}
        return LlmExchange(
            request_digest=prompt.digest,
            model_name=data.get("model", self.model),
            response_text=content or "",
            input_tokens=int(usage.get("prompt_tokens", 0)),
            output_tokens=int(usage.get("completion_tokens", 0)),
            latency=round(time.monotonic() - started, 3),
            messages=prompt.messages,
        )


class FixtureStore:
    """Directory of ``<request digest>.json`` exchange files."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self._lock = threading.Lock()

    def path_for(self, digest: str) -> Path:
        return self.directory / f"{digest}.json"

    def get(self, digest: str) -> LlmExchange:
        path = self.path_for(digest)
        if not path.exists():
            raise MissingFixture("llm", digest)
        return LlmExchange.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def put(self, exchange: LlmExchange) -> None:
        with self._lock:
            self.directory.mkdir(parents=True, exist_ok=True)
            path = self.path_for(exchange.request_digest)
            tmp = path.with_suffix(".tmp")
            tmp.write_text(canonical_json(exchange.to_dict(), indent=2) + "\n", encoding="utf-8")
            os.replace(tmp, path)


class FixtureChatClient:
    """Replays recorded exchanges by prompt digest."""

    def __init__(self, store: FixtureStore):
        self.store = store
        self.calls = 0

    def complete(self, prompt: RenderedPrompt) -> LlmExchange:
        self.calls += 1
        return self.store.get(prompt.digest)


class RecordingChatClient:
    """Forwards to another client and records every exchange in a fixture store."""

    def __init__(self, inner: ChatClient, store: FixtureStore):
        self.inner = inner
        self.store = store

    def complete(self, prompt: RenderedPrompt) -> LlmExchange:
        exchange = self.inner.complete(prompt)
        self.store.put(exchange)
        return exchange


# ---------------------------------------------------------------------------
# response parsing and the retry-with-correction loop
# ---------------------------------------------------------------------------

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*\s*(.*?)\s*```", re.DOTALL)


def parse_json_response(text: str) -> dict[str, Any]:
    """Decode the JSON object in a model reply, tolerating a fenced code block."""
    candidate = text.strip()
    fenced = _FENCE_RE.search(candidate)
    if fenced:
        candidate = fenced.group(1).strip()
    try:
        data = json.loads(candidate)
    except json.JSONDecodeError:
        start, end = candidate.find("{"), candidate.rfind("}")
        if start == -1 or end <= start:
            raise ResponseParseError("reply contains no JSON object") from None
        try:
            data = json.loads(candidate[start : end + 1])
        except json.JSONDecodeError as exc:
            raise ResponseParseError(f"reply is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ResponseParseError("reply JSON is not an object")
    return data


def _ask_until_valid(prompt: RenderedPrompt, client: ChatClient, retries: int, validate: Callable[[dict], Any]):
    if retries < 0:
        raise ValueError("retries must be >= 0")
    replies: list[str] = []
    last_error = ""
    for attempt in range(retries + 1):
        exchange = client.complete(prompt)
        replies.append(exchange.response_text)
        try:
            return validate(parse_json_response(exchange.response_text))
        except (ResponseParseError, AnalysisValidationError) as exc:
            last_error = str(exc)
            log.info("attempt %d rejected: %s", attempt + 1, last_error)
            prompt = prompt.with_correction(exchange.response_text, last_error)
    raise MalformedAfterRetries(replies, last_error)


def analyze_article(
    article: Article,
    client: ChatClient,
    template: PromptTemplate,
    candidates: Sequence[str],
    retries: int = 2,
) -> ArticleAnalysis:
    prompt = render_level1_prompt(article, template, candidates)
    return _ask_until_valid(
        prompt,
        client,
        retries,
        lambda doc: validate_article_analysis(doc, candidates, article_ref=article.content_hash),
    )


def analyze_group(
    analyses: Sequence[ArticleAnalysis | AggregateAnalysis],
    group_key: int | str | None,
    client: ChatClient,
    template: PromptTemplate,
    mode: str,
    candidates: Sequence[str],
    retries: int = 2,
    *,
    group_label: str | None = None,
    budget: int = DEFAULT_CONTEXT_BUDGET,
) -> AggregateAnalysis:
    prompt = render_level2_prompt(
        analyses, group_key, template, mode, candidates, group_label=group_label, budget=budget
    )
    return _ask_until_valid(
        prompt,
        client,
        retries,
        lambda doc: validate_aggregate_analysis(doc, candidates, mode, group_key),
    )


@dataclass(frozen=True)
class ArticleOutcome:
    article: Article
    analysis: ArticleAnalysis | None
    error: str | None = None


def analyze_articles(
    articles: Sequence[Article],
    client: ChatClient,
    template: PromptTemplate,
    candidates: Sequence[str],
    *,
    retries: int = 2,
    concurrency: int = 2,
) -> list[ArticleOutcome]:
    """Analyze articles concurrently; per-article failures become outcomes with an error.

    MissingFixture is not a per-article failure and propagates.
    """
    def one(article: Article) -> ArticleOutcome:
        try:
            return ArticleOutcome(article, analyze_article(article, client, template, candidates, retries))
        except (MalformedAfterRetries, EndpointUnavailable) as exc:
            log.warning("analysis of %s failed: %s", article.url, exc)
            return ArticleOutcome(article, None, str(exc))

    with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
        return list(pool.map(one, articles))
