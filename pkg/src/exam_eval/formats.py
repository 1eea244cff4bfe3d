"""Parsers and writers for every on-disk artifact.

Covers TREC run files, qrels files, the JSON question-bank document, and the
gzip-compressed JSON-lines grade store.
"""
from __future__ import annotations

import gzip
import json
import logging
import os
from pathlib import Path

from .model import (
    ContractViolation,
    ExamQuestion,
    Grade,
    Judgment,
    QuestionBank,
    Run,
    RunEntry,
)

log = logging.getLogger(__name__)


class ParseError(ValueError):
    """A malformed input line; carries the 1-based line number."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


# ---------------------------------------------------------------------------
# TREC run files


def parse_run_file(text: str) -> Run:
    """Parse a 6-column TREC run file: qid Q0 docid rank score tag.

    Column 2 may be "Q0" or "0"; both appear in the wild. The run tag is
    taken from the first line; differing tags on later lines produce a
    warning, first tag wins. Entries come back sorted by (query_id, rank).
    """
    entries: list[RunEntry] = []
    run_tag: str | None = None
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 6:
            raise ParseError(
                f"expected 6 whitespace-separated fields, got {len(fields)}",
                line_no)
        qid, literal, docid, rank_s, score_s, tag = fields
        if literal not in ("Q0", "0"):
            raise ParseError(
                f"expected 'Q0' or '0' in column 2, got {literal!r}", line_no)
        try:
            rank = int(rank_s)
            score = float(score_s)
        except ValueError as exc:
            raise ParseError(str(exc), line_no) from None
        if run_tag is None:
            run_tag = tag
        elif tag != run_tag:
            log.warning(
                "line %d: run tag %r differs from %r; keeping the first",
                line_no, tag, run_tag)
        try:
            entries.append(RunEntry(qid, docid, rank, score))
        except ContractViolation as exc:
            raise ParseError(str(exc), line_no) from None
    entries.sort(key=lambda e: (e.query_id, e.rank))
    return Run(run_tag=run_tag or "", entries=tuple(entries))


def load_run_file(path: str | Path) -> Run:
    return parse_run_file(Path(path).read_text())


# ---------------------------------------------------------------------------
# Qrels


def parse_qrels(text: str) -> list[Judgment]:
    """Parse a qrels file: qid 0 docid grade, one judgment per line."""
    judgments: list[Judgment] = []
    seen: set[tuple[str, str]] = set()
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 4:
            raise ParseError(
                f"expected 4 whitespace-separated fields, got {len(fields)}",
                line_no)
        qid, _, docid, grade_s = fields
        try:
            grade = int(grade_s)
        except ValueError:
            raise ParseError(
                f"non-integer grade {grade_s!r}", line_no) from None
        key = (qid, docid)
        if key in seen:
            raise ParseError(f"duplicate judgment for {key}", line_no)
        seen.add(key)
        judgments.append(Judgment(qid, docid, grade))
    return judgments


def write_qrels(labels: list[Judgment]) -> str:
    """Serialize judgments byte-deterministically.

    Rows are `<query_id> 0 <passage_id> <grade>` sorted by
    (query_id, passage_id), so identical label sets always diff clean.
    """
    seen: set[tuple[str, str]] = set()
    for j in labels:
        key = (j.query_id, j.passage_id)
        if key in seen:
            raise ContractViolation(f"duplicate judgment for {key}")
        seen.add(key)
    rows = sorted(labels, key=lambda j: (j.query_id, j.passage_id))
    return "".join(
        f"{j.query_id} 0 {j.passage_id} {j.grade}\n" for j in rows)


def load_qrels(path: str | Path) -> list[Judgment]:
    return parse_qrels(Path(path).read_text())


# ---------------------------------------------------------------------------
# Question banks (JSON)
#
# Schema:
# {
#   "queries": [
#     {
#       "query_id": "...",
#       "questions": [
#         {"question_id": "...", "text": "...",
#          "facet_id": "..." | null, "gold_answer": "..." | null},
#         ...
#       ]
#     },
#     ...
#   ]
# }


def load_question_bank(text: str) -> QuestionBank:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or "queries" not in doc:
        raise ParseError("question bank must be an object with a 'queries' key")
    by_query: dict[str, tuple[ExamQuestion, ...]] = {}
    for entry in doc["queries"]:
        query_id = entry.get("query_id")
        if not query_id:
            raise ParseError("query entry missing 'query_id'")
        if query_id in by_query:
            raise ParseError(f"duplicate query_id {query_id!r}")
        questions = []
        for q in entry.get("questions", []):
            text_field = q.get("text")
            if not text_field:
                raise ParseError(
                    f"question in query {query_id!r} missing 'text'")
            questions.append(ExamQuestion(
                question_id=q.get("question_id", ""),
                query_id=query_id,
                text=text_field,
                facet_id=q.get("facet_id"),
                gold_answer=q.get("gold_answer"),
            ))
        by_query[query_id] = tuple(questions)
    return QuestionBank(by_query)


def save_question_bank(bank: QuestionBank) -> str:
    doc = {
        "queries": [
            {
                "query_id": query_id,
                "questions": [
                    {
                        "question_id": q.question_id,
                        "text": q.text,
                        "facet_id": q.facet_id,
                        "gold_answer": q.gold_answer,
                    }
                    for q in questions
                ],
            }
            for query_id, questions in bank.questions_by_query.items()
        ]
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


# ---------------------------------------------------------------------------
# Grade store: append-only gzip JSON-lines


_GRADE_FIELDS = ("query_id", "passage_id", "question_id", "mode",
                 "answer_text", "verified", "rating")


def _grade_to_json(grade: Grade) -> str:
    record = {f: getattr(grade, f) for f in _GRADE_FIELDS}
    return json.dumps(record, ensure_ascii=False, sort_keys=True)


def _grade_from_json(line: str, line_no: int) -> Grade:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", line_no) from None
    unknown = set(record) - set(_GRADE_FIELDS)
    if unknown:
        raise ParseError(f"unknown grade fields {sorted(unknown)}", line_no)
    try:
        return Grade(**record)
    except (ContractViolation, TypeError) as exc:
        raise ParseError(str(exc), line_no) from None


class GradeStore:
    """Path-backed append-only grade log, one JSON object per gzip line.

    A single writer owns the store at a time (advisory `.lock` file);
    readers are always safe. Duplicate (query, passage, question, mode)
    keys resolve last-writer-wins on read.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)

    @property
    def lock_path(self) -> Path:
        return self.path.with_name(self.path.name + ".lock")

    def _acquire_lock(self) -> None:
        try:
            fd = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ContractViolation(
                f"grade store {self.path} is locked by another writer "
                f"(remove {self.lock_path} if stale)") from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)

    def _release_lock(self) -> None:
        try:
            self.lock_path.unlink()
        except FileNotFoundError:
            pass

    def append(self, grades: list[Grade]) -> None:
        self._acquire_lock()
        try:
            # mtime=0 and no embedded filename keep the bytes deterministic
            # for identical grade sequences.
            with open(self.path, "ab") as raw:
                with gzip.GzipFile(filename="", mode="ab", fileobj=raw,
                                   mtime=0) as fh:
                    for grade in grades:
                        fh.write((_grade_to_json(grade) + "\n").encode("utf-8"))
        finally:
            self._release_lock()

    def read(self) -> list[Grade]:
        """All grades, deduplicated last-writer-wins, in first-seen key order."""
        if not self.path.exists():
            return []
        by_key: dict[tuple, Grade] = {}
        try:
            with gzip.open(self.path, "rt", encoding="utf-8") as fh:
                for line_no, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    grade = _grade_from_json(line, line_no)
                    by_key[grade.key] = grade
        except (OSError, EOFError) as exc:
            raise ParseError(f"corrupt grade store {self.path}: {exc}") from None
        return list(by_key.values())

    def keys(self) -> set[tuple[str, str, str, str]]:
        return {g.key for g in self.read()}


def append_grades(store: GradeStore, grades: list[Grade]) -> None:
    store.append(grades)


def read_grades(store: GradeStore) -> list[Grade]:
    return store.read()
