"""Core domain types shared across the toolkit.

Everything here is an immutable value type with its invariants enforced at
construction time; no I/O and no inference happens in this module.
"""
from __future__ import annotations

from dataclasses import dataclass


QA_VERIFIED = "qa_verified"
SELF_RATED = "self_rated"
GRADE_MODES = (QA_VERIFIED, SELF_RATED)


class ContractViolation(ValueError):
    """An operation was called with arguments that break its contract."""


@dataclass(frozen=True)
class Facet:
    facet_id: str
    title: str

    def __post_init__(self):
        if not self.facet_id:
            raise ContractViolation("facet_id must be non-empty")


@dataclass(frozen=True)
class Query:
    query_id: str
    title: str
    facets: tuple[Facet, ...] = ()

    def __post_init__(self):
        if not self.query_id:
            raise ContractViolation("query_id must be non-empty")
        facet_ids = [f.facet_id for f in self.facets]
        if len(facet_ids) != len(set(facet_ids)):
            raise ContractViolation(
                f"duplicate facet ids in query {self.query_id!r}")


@dataclass(frozen=True)
class ExamQuestion:
    question_id: str
    query_id: str
    text: str
    facet_id: str | None = None
    gold_answer: str | None = None

    def __post_init__(self):
        if not self.question_id:
            raise ContractViolation("question_id must be non-empty")
        if not self.text:
            raise ContractViolation(
                f"question {self.question_id!r} has empty text")

    @property
    def supports_verification(self) -> bool:
        return self.gold_answer is not None


@dataclass(frozen=True)
class QuestionBank:
    """Per-query ordered question sets.

    Question ids are unique across the whole bank, and every question's
    query_id matches the key it is filed under.
    """
    questions_by_query: dict[str, tuple[ExamQuestion, ...]]

    def __post_init__(self):
        seen: set[str] = set()
        for query_id, questions in self.questions_by_query.items():
            for q in questions:
                if q.query_id != query_id:
                    raise ContractViolation(
                        f"question {q.question_id!r} filed under "
                        f"{query_id!r} but belongs to {q.query_id!r}")
                if q.question_id in seen:
                    raise ContractViolation(
                        f"duplicate question_id {q.question_id!r}")
                seen.add(q.question_id)

    def questions_for(self, query_id: str) -> tuple[ExamQuestion, ...]:
        return self.questions_by_query.get(query_id, ())

    def all_questions(self) -> list[ExamQuestion]:
        return [q for qs in self.questions_by_query.values() for q in qs]

    def by_question_id(self) -> dict[str, ExamQuestion]:
        return {q.question_id: q for q in self.all_questions()}

    @property
    def query_ids(self) -> list[str]:
        return list(self.questions_by_query)


@dataclass(frozen=True)
class Passage:
    passage_id: str
    text: str

    def __post_init__(self):
        if not self.passage_id:
            raise ContractViolation("passage_id must be non-empty")
        if not self.text:
            raise ContractViolation(
                f"passage {self.passage_id!r} has empty text")


@dataclass(frozen=True)
class RunEntry:
    query_id: str
    passage_id: str
    rank: int
    score: float

    def __post_init__(self):
        if self.rank < 1:
            raise ContractViolation(
                f"rank must be >= 1, got {self.rank} "
                f"for ({self.query_id}, {self.passage_id})")


@dataclass(frozen=True)
class Run:
    """A system's ranked passage lists, one per query (TREC run semantics)."""
    run_tag: str
    entries: tuple[RunEntry, ...]

    def __post_init__(self):
        seen: set[tuple[str, str]] = set()
        last_rank: dict[str, int] = {}
        for e in self.entries:
            key = (e.query_id, e.passage_id)
            if key in seen:
                raise ContractViolation(
                    f"duplicate (query, passage) pair {key} in run "
                    f"{self.run_tag!r}")
            seen.add(key)
            prev = last_rank.get(e.query_id)
            if prev is not None and e.rank <= prev:
                raise ContractViolation(
                    f"ranks not strictly increasing for query "
                    f"{e.query_id!r} in run {self.run_tag!r}")
            last_rank[e.query_id] = e.rank

    @property
    def query_ids(self) -> list[str]:
        out: list[str] = []
        for e in self.entries:
            if not out or out[-1] != e.query_id:
                if e.query_id not in out:
                    out.append(e.query_id)
        return out

    def top_k(self, query_id: str, k: int) -> list[RunEntry]:
        entries = [e for e in self.entries if e.query_id == query_id]
        entries.sort(key=lambda e: e.rank)
        return entries[:k]


@dataclass(frozen=True)
class Grade:
    """One grading outcome for a (query, passage, question) triple.

    In qa_verified mode the record carries the verification verdict; in
    self_rated mode it carries the 0-5 answerability rating. The raw model
    completion is kept in answer_text for auditing.
    """
    query_id: str
    passage_id: str
    question_id: str
    mode: str
    answer_text: str | None = None
    verified: bool | None = None
    rating: int | None = None

    def __post_init__(self):
        if self.mode not in GRADE_MODES:
            raise ContractViolation(f"unknown grade mode {self.mode!r}")
        if self.mode == QA_VERIFIED:
            if self.verified is None or self.rating is not None:
                raise ContractViolation(
                    "qa_verified grade needs `verified` and no `rating`")
        else:
            if self.rating is None or self.verified is not None:
                raise ContractViolation(
                    "self_rated grade needs `rating` and no `verified`")
            if not 0 <= self.rating <= 5:
                raise ContractViolation(
                    f"rating must be in [0, 5], got {self.rating}")

    @property
    def key(self) -> tuple[str, str, str, str]:
        return (self.query_id, self.passage_id, self.question_id, self.mode)


@dataclass(frozen=True)
class GradePolicy:
    """What counts as a correctly answered question.

    min_rating applies only in self_rated mode; min_answers is the number of
    correct questions a passage needs for a positive binary label.
    """
    mode: str
    min_rating: int = 4
    min_answers: int = 1

    def __post_init__(self):
        if self.mode not in GRADE_MODES:
            raise ContractViolation(f"unknown policy mode {self.mode!r}")
        if not 1 <= self.min_rating <= 5:
            raise ContractViolation(
                f"min_rating must be in [1, 5], got {self.min_rating}")
        if self.min_answers < 1:
            raise ContractViolation(
                f"min_answers must be >= 1, got {self.min_answers}")


@dataclass(frozen=True)
class Judgment:
    """A passage-level relevance judgment (qrels row)."""
    query_id: str
    passage_id: str
    grade: int

    def __post_init__(self):
        if self.grade < -2:
            raise ContractViolation(
                f"judgment grade must be >= -2, got {self.grade}")

    @property
    def relevance(self) -> int:
        """Grade with negative values clamped to 0."""
        return max(self.grade, 0)


@dataclass(frozen=True)
class CoverConfig:
    depth: int = 20

    def __post_init__(self):
        if self.depth < 1:
            raise ContractViolation(f"depth must be >= 1, got {self.depth}")


def policy_is_correct(grade: Grade, policy: GradePolicy) -> bool:
    """Decide whether a grade counts as a correctly answered question.

    qa_verified grades pass through their verification verdict; self_rated
    grades pass when the rating meets the policy threshold.
    """
    if grade.mode != policy.mode:
        raise ContractViolation(
            f"grade mode {grade.mode!r} does not match "
            f"policy mode {policy.mode!r}")
    if grade.mode == QA_VERIFIED:
        return bool(grade.verified)
    return grade.rating >= policy.min_rating
