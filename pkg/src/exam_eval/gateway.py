"""Prompt rendering, token budgeting, and completion execution.

The completion backend is pluggable: an OpenAI-compatible HTTP endpoint for
real inference, or a deterministic mock for tests and fixture pipelines.
"""
from __future__ import annotations

import json
import logging
import os
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

import requests

from .model import ContractViolation, Facet, Query

log = logging.getLogger(__name__)

AUTH_TOKEN_ENV = "EXAM_EVAL_API_KEY"


QUESTION_GEN_DL = (
    "Break the query '{query_title}' into concise questions that must be "
    "answered. Generate 10 concise insightful questions that reveal whether "
    "information relevant for '{query_title}' was provided, showcasing a "
    "deep understanding of the subject matter. Avoid basic or "
    "introductory-level inquiries. Keep the questions short and in a Python "
    "list format."
)

QUESTION_GEN_CAR = (
    "Explore the connection between '{query_title}' with a specific focus "
    "on the subtopic '{query_subtopic}'. Generate insightful questions that "
    "delve into advanced aspects of '{query_subtopic}', showcasing a deep "
    "understanding of the subject matter. Avoid basic or introductory-level "
    "inquiries. Give the question set in a Python list format."
)

QA_PROMPT = (
    "provide a complete and concise answer to the question based on the "
    "context.\n"
    "Question: {question}\n"
    "Context: {context}"
)

SELF_RATING_PROMPT = (
    "Can the question be answered based on the available context? "
    "choose one:\n"
    "- 5: The answer is highly relevant, complete, and accurate.\n"
    "- 4: The answer is mostly relevant and complete but may have minor "
    "gaps or inaccuracies.\n"
    "- 3: The answer is partially relevant and complete, with noticeable "
    "gaps or inaccuracies.\n"
    "- 2: The answer has limited relevance and completeness, with "
    "significant gaps or inaccuracies.\n"
    "- 1: The answer is minimally relevant or complete, with substantial "
    "shortcomings.\n"
    "- 0: The answer is not relevant or complete at all.\n"
    "Question: {question}\n"
    "Context: {context}"
)

PROMPT_TEMPLATES = {
    "question_gen_dl": QUESTION_GEN_DL,
    "question_gen_car": QUESTION_GEN_CAR,
    "qa": QA_PROMPT,
    "self_rating": SELF_RATING_PROMPT,
}


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str

    def __post_init__(self):
        if self.name not in PROMPT_TEMPLATES:
            raise ContractViolation(f"unknown prompt template {self.name!r}")

    @classmethod
    def named(cls, name: str) -> "PromptTemplate":
        return cls(name=name, body=PROMPT_TEMPLATES[name])

    def render(self, **bindings: str) -> str:
        rendered = self.body.format(**bindings)
        if re.search(r"\{[a-z_]+\}", rendered):
            raise ContractViolation(
                f"template {self.name!r} left unbound placeholders")
        return rendered


def render_question_gen_prompt(query: Query, facet: Facet | None = None) -> str:
    """Render the question-generation prompt for a query (and facet).

    The facet-focused template requires a facet; the plain query template
    must be called without one.
    """
    if not query.title:
        raise ContractViolation("query title must be non-empty")
    if facet is None:
        return PromptTemplate.named("question_gen_dl").render(
            query_title=query.title)
    if not facet.title:
        raise ContractViolation("facet title must be non-empty")
    return PromptTemplate.named("question_gen_car").render(
        query_title=query.title, query_subtopic=facet.title)


def render_qa_prompt(question: str, context: str) -> str:
    if not question:
        raise ContractViolation("question must be non-empty")
    return PromptTemplate.named("qa").render(question=question, context=context)


def render_self_rating_prompt(question: str, context: str) -> str:
    if not question:
        raise ContractViolation("question must be non-empty")
    return PromptTemplate.named("self_rating").render(
        question=question, context=context)


# ---------------------------------------------------------------------------
# Token budgeting

Tokenizer = Callable[[str], list[str]]


def whitespace_tokenize(text: str) -> list[str]:
    return text.split()


def token_count(text: str, tokenizer: Tokenizer = whitespace_tokenize) -> int:
    return len(tokenizer(text))


class BudgetExceeded(ValueError):
    """Template plus question alone exceed the token budget."""


def truncate_context(question: str, context: str, budget: int,
                     template_name: str = "qa",
                     tokenizer: Tokenizer = whitespace_tokenize) -> str:
    """Shorten the context so the rendered prompt fits the token budget.

    The returned context is a character prefix of the input; the question
    and template text are never touched. Raises BudgetExceeded when the
    prompt cannot fit even with an empty context.
    """
    template = PromptTemplate.named(template_name)
    empty = template.render(question=question, context="")
    if token_count(empty, tokenizer) > budget:
        raise BudgetExceeded(
            f"question and template alone need "
            f"{token_count(empty, tokenizer)} tokens, budget is {budget}")
    if token_count(template.render(question=question, context=context),
                   tokenizer) <= budget:
        return context
    # Binary-search the longest whitespace-token prefix that fits.
    spans = [m.end() for m in re.finditer(r"\S+", context)]
    lo, hi = 0, len(spans)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        candidate = context[:spans[mid - 1]]
        prompt = template.render(question=question, context=candidate)
        if token_count(prompt, tokenizer) <= budget:
            lo = mid
        else:
            hi = mid - 1
    return context[:spans[lo - 1]] if lo else ""


# ---------------------------------------------------------------------------
# Completion backends


@dataclass(frozen=True)
class BackendConfig:
    endpoint_url: str = ""
    model_name: str = ""
    max_input_tokens: int = 512
    timeout: float = 60.0
    max_retries: int = 3
    parallelism: int = 1
    # Decoding defaults recorded for reproducibility: greedy, short answers.
    temperature: float = 0.0
    max_new_tokens: int = 128
    mock_fixture: str | None = None

    def __post_init__(self):
        if self.parallelism < 1:
            raise ContractViolation("parallelism must be >= 1")
        if self.max_input_tokens < 64:
            raise ContractViolation("max_input_tokens must be >= 64")


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    metadata: tuple[tuple[str, str], ...] = ()

    @classmethod
    def of(cls, prompt: str, **metadata: str) -> "CompletionRequest":
        return cls(prompt=prompt, metadata=tuple(sorted(metadata.items())))

    def meta(self, key: str) -> str | None:
        return dict(self.metadata).get(key)


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    latency: float
    backend_id: str


class BackendError(RuntimeError):
    """A completion could not be obtained after all retries."""


class Backend(Protocol):
    def complete(self, request: CompletionRequest) -> CompletionResponse: ...


class HttpBackend:
    """OpenAI-compatible completions client with retry and backoff.

    Auth token, if needed, comes from the EXAM_EVAL_API_KEY environment
    variable. One prompt per request; batching is intentionally unsupported.
    """

    def __init__(self, config: BackendConfig,
                 session: requests.Session | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        if not config.endpoint_url:
            raise ContractViolation("endpoint_url is required")
        self.config = config
        self.session = session or requests.Session()
        self._sleep = sleep

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(AUTH_TOKEN_ENV)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        payload = {
            "model": self.config.model_name,
            "prompt": request.prompt,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_new_tokens,
        }
        attempts = self.config.max_retries + 1
        last_error: Exception | None = None
        start = time.monotonic()
        for attempt in range(attempts):
            if attempt:
                self._sleep(min(2.0 ** (attempt - 1), 30.0))
            try:
                resp = self.session.post(
                    self.config.endpoint_url, json=payload, headers=headers,
                    timeout=self.config.timeout)
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code == 200:
                body = resp.json()
                text = body["choices"][0]["text"]
                return CompletionResponse(
                    text=text,
                    latency=time.monotonic() - start,
                    backend_id=self.config.model_name or "http")
            if resp.status_code in (429, 500, 502, 503, 504):
                last_error = BackendError(
                    f"HTTP {resp.status_code} from {self.config.endpoint_url}")
                continue
            raise BackendError(
                f"HTTP {resp.status_code} from {self.config.endpoint_url}: "
                f"{resp.text[:200]}")
        raise BackendError(
            f"completion failed after {attempts} attempts "
            f"(prompt starts {request.prompt[:60]!r}): {last_error}")


class MockBackend:
    """Deterministic scripted backend for model-free pipelines.

    Responses are looked up by request metadata, most specific key first:
    "question_id/passage_id", "question_id", "query_id/facet_id",
    "query_id", then the fixture's "default" entry. Missing everything
    yields an empty completion.
    """

    def __init__(self, responses: dict[str, str]):
        self.responses = dict(responses)
        self.request_log: list[CompletionRequest] = []

    @classmethod
    def from_fixture(cls, path: str | Path) -> "MockBackend":
        doc = json.loads(Path(path).read_text())
        if not isinstance(doc, dict):
            raise ContractViolation(
                f"mock fixture {path} must be a JSON object")
        return cls({str(k): str(v) for k, v in doc.items()})

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        self.request_log.append(request)
        qid = request.meta("question_id")
        pid = request.meta("passage_id")
        query_id = request.meta("query_id")
        facet_id = request.meta("facet_id")
        candidates = []
        if qid and pid:
            candidates.append(f"{qid}/{pid}")
        if qid:
            candidates.append(qid)
        if query_id and facet_id:
            candidates.append(f"{query_id}/{facet_id}")
        if query_id:
            candidates.append(query_id)
        candidates.append("default")
        for key in candidates:
            if key in self.responses:
                return CompletionResponse(
                    text=self.responses[key], latency=0.0, backend_id="mock")
        return CompletionResponse(text="", latency=0.0, backend_id="mock")


def make_backend(config: BackendConfig) -> Backend:
    if config.mock_fixture:
        return MockBackend.from_fixture(config.mock_fixture)
    return HttpBackend(config)


def complete(request: CompletionRequest, config: BackendConfig,
             backend: Backend | None = None) -> CompletionResponse:
    backend = backend or make_backend(config)
    return backend.complete(request)
