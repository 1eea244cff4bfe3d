"""Response grading: segmentation, answer checking, and self-rating.

Takes a question bank and a pool of passages, asks every exam question
against every pooled passage through the gateway, and records the outcome
as Grade records.
"""
from __future__ import annotations

import hashlib
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import gateway
from .formats import GradeStore
from .model import (
    ContractViolation,
    ExamQuestion,
    Grade,
    Judgment,
    Passage,
    QA_VERIFIED,
    QuestionBank,
    Run,
    SELF_RATED,
)
from .porter import stem
from .stopwords import STOPWORDS

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Segmentation


@dataclass(frozen=True)
class SegmentationConfig:
    target_tokens: int = 400
    tokenizer: gateway.Tokenizer = gateway.whitespace_tokenize

    def __post_init__(self):
        if self.target_tokens < 32:
            raise ContractViolation("target_tokens must be >= 32")


_SENTENCE_END = re.compile(r"(?<=[.!?])\s+")


def segment_response(text: str,
                     config: SegmentationConfig = SegmentationConfig()
                     ) -> list[Passage]:
    """Split a long response into paragraph-sized passages.

    Passages stay under target_tokens and prefer sentence boundaries; a
    single sentence over the budget is hard-split on token boundaries.
    Joining the passage texts recovers the input modulo boundary whitespace.
    Passage ids are `<sha1(text)>/<ordinal>`.
    """
    if not text.strip():
        raise ContractViolation("response text must be non-empty")
    budget = config.target_tokens
    count = lambda s: len(config.tokenizer(s))

    pieces: list[str] = []
    for sentence in _SENTENCE_END.split(text.strip()):
        if not sentence:
            continue
        if count(sentence) <= budget:
            pieces.append(sentence)
        else:
            tokens = config.tokenizer(sentence)
            for i in range(0, len(tokens), budget):
                pieces.append(" ".join(tokens[i:i + budget]))

    chunks: list[str] = []
    current: list[str] = []
    current_tokens = 0
    for piece in pieces:
        n = count(piece)
        if current and current_tokens + n > budget:
            chunks.append(" ".join(current))
            current, current_tokens = [], 0
        current.append(piece)
        current_tokens += n
    if current:
        chunks.append(" ".join(current))

    digest = hashlib.sha1(text.encode("utf-8")).hexdigest()
    return [Passage(passage_id=f"{digest}/{i}", text=chunk)
            for i, chunk in enumerate(chunks)]


# ---------------------------------------------------------------------------
# Answer verification


def normalize_answer(text: str) -> str:
    """Lowercase, drop stopwords, Porter-stem, rejoin with single spaces."""
    tokens = re.findall(r"[a-z0-9']+", text.lower())
    return " ".join(stem(t) for t in tokens if t not in STOPWORDS)


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + (ca != cb)))
        previous = current
    return previous[-1]


def verify_answer(predicted: str, gold: str) -> bool:
    """Fuzzy-match a predicted answer against the gold answer.

    Both sides are normalized; the match holds when the character-level edit
    distance is under 20% of the longer string's length. A gold answer that
    normalizes to nothing (all stopwords) falls back to the raw strings.
    """
    if not gold:
        raise ContractViolation("gold answer must be non-empty")
    a, b = normalize_answer(predicted), normalize_answer(gold)
    if not b:
        a, b = predicted, gold
    longer = max(len(a), len(b))
    if longer == 0:
        return True
    return levenshtein(a, b) < 0.2 * longer


# ---------------------------------------------------------------------------
# Self-rating parsing


UNANSWERABLE_PHRASES = (
    "unanswerable",
    "no answe",
    "not enough information",
    "unknown",
    "it is not possible to tell",
    "it does not say",
    "no relevant information",
)

_STANDALONE_DIGIT = re.compile(r"(?<!\d)([0-5])(?!\d)")


def parse_self_rating(completion: str) -> int:
    """Map a self-rating completion to an integer rating in [0, 5].

    The first standalone digit 0-5 wins. Otherwise 0 for expressions of
    unanswerability, 1 by default. "no" only counts as a whole token so
    words like "normal" don't read as refusals.
    """
    match = _STANDALONE_DIGIT.search(completion)
    if match:
        return int(match.group(1))
    lowered = completion.lower()
    if any(p in lowered for p in UNANSWERABLE_PHRASES):
        return 0
    if re.search(r"\bno\b", lowered):
        return 0
    return 1


# ---------------------------------------------------------------------------
# Grading


@dataclass(frozen=True)
class SkipEntry:
    query_id: str
    passage_id: str
    question_id: str
    reason: str


@dataclass
class GradingSummary:
    graded: int = 0
    skipped_existing: int = 0
    failures: list[SkipEntry] = field(default_factory=list)
    duration: float = 0.0


def grade_pair(question: ExamQuestion, passage: Passage, mode: str,
               config: gateway.BackendConfig,
               backend: gateway.Backend) -> Grade:
    """Grade one (question, passage) pair with a single completion request."""
    if mode == QA_VERIFIED:
        if question.gold_answer is None:
            raise ContractViolation(
                f"question {question.question_id!r} has no gold answer; "
                "cannot grade in qa_verified mode")
        template_name = "qa"
        render = gateway.render_qa_prompt
    elif mode == SELF_RATED:
        template_name = "self_rating"
        render = gateway.render_self_rating_prompt
    else:
        raise ContractViolation(f"unknown grading mode {mode!r}")

    context = gateway.truncate_context(
        question.text, passage.text, config.max_input_tokens,
        template_name=template_name)
    prompt = render(question.text, context)
    request = gateway.CompletionRequest.of(
        prompt,
        query_id=question.query_id,
        question_id=question.question_id,
        passage_id=passage.passage_id)
    response = backend.complete(request)

    if mode == QA_VERIFIED:
        return Grade(
            query_id=question.query_id,
            passage_id=passage.passage_id,
            question_id=question.question_id,
            mode=QA_VERIFIED,
            answer_text=response.text,
            verified=verify_answer(response.text, question.gold_answer))
    return Grade(
        query_id=question.query_id,
        passage_id=passage.passage_id,
        question_id=question.question_id,
        mode=SELF_RATED,
        answer_text=response.text,
        rating=parse_self_rating(response.text))


def build_passage_pool(runs: list[Run], depth: int,
                       judgments: list[Judgment] | None = None
                       ) -> dict[str, list[str]]:
    """Union of every run's top-`depth` passages plus judged passages.

    Returns query_id -> deduplicated passage ids in first-seen order.
    """
    pool: dict[str, list[str]] = {}
    seen: set[tuple[str, str]] = set()

    def add(query_id: str, passage_id: str) -> None:
        if (query_id, passage_id) not in seen:
            seen.add((query_id, passage_id))
            pool.setdefault(query_id, []).append(passage_id)

    for run in runs:
        for query_id in run.query_ids:
            for entry in run.top_k(query_id, depth):
                add(query_id, entry.passage_id)
    for j in judgments or []:
        add(j.query_id, j.passage_id)
    return pool


def grade_corpus(bank: QuestionBank,
                 passages_by_query: dict[str, list[Passage]],
                 mode: str,
                 config: gateway.BackendConfig,
                 store: GradeStore,
                 backend: gateway.Backend | None = None) -> GradingSummary:
    """Grade every (question, passage) pair and append results to the store.

    Resumable: pairs already present in the store are not re-requested.
    Backend failures land in the summary's skip list instead of aborting
    the whole corpus.
    """
    import time as _time

    backend = backend or gateway.make_backend(config)
    existing = store.keys()
    summary = GradingSummary()
    start = _time.monotonic()

    work: list[tuple[ExamQuestion, Passage]] = []
    for query_id, passages in passages_by_query.items():
        questions = bank.questions_for(query_id)
        unique: dict[str, Passage] = {}
        for p in passages:
            unique.setdefault(p.passage_id, p)
        for question in questions:
            for passage in unique.values():
                key = (query_id, passage.passage_id,
                       question.question_id, mode)
                if key in existing:
                    summary.skipped_existing += 1
                else:
                    work.append((question, passage))

    def run_one(item: tuple[ExamQuestion, Passage]):
        question, passage = item
        try:
            return grade_pair(question, passage, mode, config, backend)
        except gateway.BackendError as exc:
            return SkipEntry(question.query_id, passage.passage_id,
                             question.question_id, str(exc))

    results: list[Grade | SkipEntry]
    if config.parallelism > 1 and work:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            results = list(pool.map(run_one, work))
    else:
        results = [run_one(item) for item in work]

    grades = [r for r in results if isinstance(r, Grade)]
    summary.failures = [r for r in results if isinstance(r, SkipEntry)]
    if grades:
        store.append(grades)
    summary.graded = len(grades)
    summary.duration = _time.monotonic() - start
    if summary.failures:
        log.warning("%d grading pairs failed and were skip-logged",
                    len(summary.failures))
    return summary
