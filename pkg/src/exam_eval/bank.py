"""Question-bank construction and maintenance.

Generates per-query (or per-facet) question sets through the gateway,
parses model output into question lists, and reports the grade-flip impact
of bank edits.
"""
from __future__ import annotations

import ast
import logging
import re
from dataclasses import dataclass, field

from . import gateway
from .model import (
    ExamQuestion,
    Grade,
    GradePolicy,
    Query,
    QuestionBank,
    policy_is_correct,
)

log = logging.getLogger(__name__)


def parse_question_list(completion: str) -> list[str]:
    """Extract a question list from a model completion.

    Tries, in order: a bracketed Python-style list of quoted strings;
    numbered or bulleted lines; bare lines ending in '?'. Results are
    trimmed, deduplicated, and kept in source order. An empty list is a
    legal outcome.
    """
    candidates: list[str] = []

    bracket = re.search(r"\[.*\]", completion, re.DOTALL)
    if bracket:
        try:
            parsed = ast.literal_eval(bracket.group(0))
            if isinstance(parsed, (list, tuple)):
                candidates = [str(item) for item in parsed
                              if isinstance(item, str)]
        except (ValueError, SyntaxError):
            pass

    if not candidates:
        for line in completion.splitlines():
            m = re.match(r"\s*(?:\d+[.)]|[-*•])\s+(.*)", line)
            if m:
                candidates.append(m.group(1))

    if not candidates:
        candidates = [line for line in completion.splitlines()
                      if line.strip().endswith("?")]

    seen: set[str] = set()
    out: list[str] = []
    for c in candidates:
        c = c.strip().strip('"\'').strip()
        if c and c not in seen:
            seen.add(c)
            out.append(c)
    return out


def _question_id(query_id: str, facet_id: str | None, ordinal: int) -> str:
    return f"{query_id}/{facet_id or 'q'}/{ordinal}"


def generate_bank(queries: list[Query], template: gateway.PromptTemplate,
                  config: gateway.BackendConfig,
                  backend: gateway.Backend | None = None) -> QuestionBank:
    """Generate a question bank by prompting the backend once per query,
    or once per query-facet for the facet-focused template.

    Question ids are assigned deterministically as
    `<query_id>/<facet_id or "q">/<ordinal>`. An unparseable completion is
    retried once; a query whose completions never parse ends up with zero
    questions and a warning.
    """
    if template.name not in ("question_gen_dl", "question_gen_car"):
        raise gateway.ContractViolation(
            f"{template.name!r} is not a question-generation template")
    per_facet = template.name == "question_gen_car"
    backend = backend or gateway.make_backend(config)

    by_query: dict[str, tuple[ExamQuestion, ...]] = {}
    for query in queries:
        targets = query.facets if per_facet else (None,)
        if per_facet and not query.facets:
            log.warning("query %s has no facets; skipped under the "
                        "facet-focused template", query.query_id)
        questions: list[ExamQuestion] = []
        for facet in targets:
            prompt = gateway.render_question_gen_prompt(query, facet)
            request = gateway.CompletionRequest.of(
                prompt, query_id=query.query_id,
                **({"facet_id": facet.facet_id} if facet else {}))
            texts: list[str] = []
            for _ in range(2):
                response = backend.complete(request)
                texts = parse_question_list(response.text)
                if texts:
                    break
            if not texts:
                log.warning("no questions parsed for query %s%s",
                            query.query_id,
                            f" facet {facet.facet_id}" if facet else "")
                continue
            facet_id = facet.facet_id if facet else None
            for i, text in enumerate(texts):
                questions.append(ExamQuestion(
                    question_id=_question_id(query.query_id, facet_id, i),
                    query_id=query.query_id,
                    facet_id=facet_id,
                    text=text))
        by_query[query.query_id] = tuple(questions)
    return QuestionBank(by_query)


# ---------------------------------------------------------------------------
# Bank diffing


@dataclass(frozen=True)
class LabelFlip:
    query_id: str
    passage_id: str
    old_label: int
    new_label: int


@dataclass
class BankDiffReport:
    added: list[str] = field(default_factory=list)
    removed: list[str] = field(default_factory=list)
    edited: list[str] = field(default_factory=list)
    needs_grading: list[str] = field(default_factory=list)
    flips: list[LabelFlip] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not (self.added or self.removed or self.edited
                    or self.needs_grading or self.flips)


def _binary_label(question_ids: set[str], pair_grades: list[Grade],
                  policy: GradePolicy) -> int:
    correct = sum(
        1 for g in pair_grades
        if g.question_id in question_ids and g.mode == policy.mode
        and policy_is_correct(g, policy))
    return 1 if correct >= policy.min_answers else 0


def diff_banks(old: QuestionBank, new: QuestionBank, grades: list[Grade],
               policy: GradePolicy) -> BankDiffReport:
    """Report bank edits and the passages whose binary label they flip.

    Questions are matched by id; an id present in both banks with changed
    text counts as edited. Added or edited questions without grades yet are
    flagged needs-grading instead of contributing flips.
    """
    old_by_id = old.by_question_id()
    new_by_id = new.by_question_id()
    report = BankDiffReport()
    report.added = sorted(set(new_by_id) - set(old_by_id))
    report.removed = sorted(set(old_by_id) - set(new_by_id))
    report.edited = sorted(
        qid for qid in set(old_by_id) & set(new_by_id)
        if old_by_id[qid].text != new_by_id[qid].text)

    graded_question_ids = {g.question_id for g in grades
                           if g.mode == policy.mode}
    report.needs_grading = sorted(
        qid for qid in report.added + report.edited
        if qid not in graded_question_ids)

    by_pair: dict[tuple[str, str], list[Grade]] = {}
    for g in grades:
        by_pair.setdefault((g.query_id, g.passage_id), []).append(g)

    affected_queries = {
        (old_by_id.get(qid) or new_by_id[qid]).query_id
        for qid in report.added + report.removed + report.edited}
    for (query_id, passage_id), pair_grades in sorted(by_pair.items()):
        if query_id not in affected_queries:
            continue
        old_ids = {q.question_id for q in old.questions_for(query_id)}
        new_ids = {q.question_id for q in new.questions_for(query_id)
                   if q.question_id in graded_question_ids}
        old_label = _binary_label(old_ids, pair_grades, policy)
        new_label = _binary_label(new_ids, pair_grades, policy)
        if old_label != new_label:
            report.flips.append(
                LabelFlip(query_id, passage_id, old_label, new_label))
    return report
