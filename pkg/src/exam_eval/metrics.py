"""Evaluation metrics: coverage scoring, derived qrels, leaderboards,
rank correlations, and inter-annotator agreement tables.
"""
from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy import stats as _scipy_stats

from .model import (
    ContractViolation,
    CoverConfig,
    Grade,
    GradePolicy,
    Judgment,
    QuestionBank,
    Run,
    SELF_RATED,
    policy_is_correct,
)

log = logging.getLogger(__name__)

OVERALL_SYSTEM = "_overall_"


class UndefinedResult(ValueError):
    """The requested statistic is undefined for this input."""


# ---------------------------------------------------------------------------
# Grade indexing helpers


def _grades_by_pair(grades: list[Grade], mode: str
                    ) -> dict[tuple[str, str], list[Grade]]:
    index: dict[tuple[str, str], list[Grade]] = defaultdict(list)
    for g in grades:
        if g.mode == mode:
            index[(g.query_id, g.passage_id)].append(g)
    return index


# ---------------------------------------------------------------------------
# Coverage score


@dataclass(frozen=True)
class CoverResult:
    per_query: dict[str, float]
    mean: float
    ungraded_passages: tuple[tuple[str, str], ...] = ()


def _cover_for_passages(passage_ids: list[str], query_id: str,
                        bank: QuestionBank,
                        by_pair: dict[tuple[str, str], list[Grade]],
                        policy: GradePolicy,
                        gaps: list[tuple[str, str]]) -> float | None:
    questions = bank.questions_for(query_id)
    if not questions:
        return None
    question_ids = {q.question_id for q in questions}
    answered: set[str] = set()
    for pid in passage_ids:
        pair_grades = by_pair.get((query_id, pid))
        if not pair_grades:
            gaps.append((query_id, pid))
            continue
        for g in pair_grades:
            if g.question_id in question_ids and policy_is_correct(g, policy):
                answered.add(g.question_id)
    return len(answered) / len(question_ids)


def exam_cover(run: Run, bank: QuestionBank, grades: list[Grade],
               policy: GradePolicy,
               cover: CoverConfig = CoverConfig()) -> CoverResult:
    """Fraction of each query's questions answerable by the top-k passages.

    Per query, the score is the size of the union of correctly answered
    questions over the top-`depth` passages, divided by the bank size for
    that query. The system score is the macro-average over queries that
    have at least one question. Pooled passages without any grade count as
    not-correct and are reported as coverage gaps.
    """
    by_pair = _grades_by_pair(grades, policy.mode)
    gaps: list[tuple[str, str]] = []
    per_query: dict[str, float] = {}
    for query_id in bank.query_ids:
        pids = [e.passage_id for e in run.top_k(query_id, cover.depth)]
        score = _cover_for_passages(pids, query_id, bank, by_pair, policy, gaps)
        if score is not None:
            per_query[query_id] = score
    if gaps:
        log.warning("coverage gap: %d pooled passages have no grades",
                    len(gaps))
    mean = sum(per_query.values()) / len(per_query) if per_query else 0.0
    return CoverResult(per_query=per_query, mean=mean,
                       ungraded_passages=tuple(gaps))


# ---------------------------------------------------------------------------
# Relevance labels and derived qrels


def relevance_labels(grades: list[Grade], policy: GradePolicy,
                     graded: bool = False) -> int:
    """Label for one (query, passage) from its grades.

    Binary: 1 iff at least `min_answers` questions are correct under the
    policy. Graded: the highest self-rating obtained on any question.
    """
    pairs = {(g.query_id, g.passage_id) for g in grades}
    if len(pairs) > 1:
        raise ContractViolation(
            f"grades span multiple (query, passage) pairs: {sorted(pairs)}")
    relevant = [g for g in grades if g.mode == policy.mode]
    if graded:
        if policy.mode != SELF_RATED:
            raise ContractViolation(
                "graded labels require a self_rated policy")
        return max((g.rating for g in relevant), default=0)
    correct = sum(1 for g in relevant if policy_is_correct(g, policy))
    return 1 if correct >= policy.min_answers else 0


def build_qrels(grades: list[Grade], bank: QuestionBank, policy: GradePolicy,
                graded: bool = False) -> list[Judgment]:
    """One judgment per graded (query, passage), from relevance_labels.

    Covers every pooled passage that has grades, so systems whose passages
    went through the grading pipeline never hit unjudged holes.
    """
    question_ids = set(bank.by_question_id())
    by_pair: dict[tuple[str, str], list[Grade]] = defaultdict(list)
    for g in grades:
        if g.mode == policy.mode and g.question_id in question_ids:
            by_pair[(g.query_id, g.passage_id)].append(g)
    out = []
    for (query_id, passage_id) in sorted(by_pair):
        label = relevance_labels(by_pair[(query_id, passage_id)],
                                 policy, graded=graded)
        out.append(Judgment(query_id, passage_id, label))
    return out


# ---------------------------------------------------------------------------
# Precision@k


@dataclass(frozen=True)
class PrecisionResult:
    per_query: dict[str, float]
    mean: float


def precision_at_k(run: Run, qrels: list[Judgment], k: int,
                   level_for_rel: int = 1) -> PrecisionResult:
    """Fraction of the top-k passages judged at or above level_for_rel.

    Unjudged passages count as non-relevant; queries with no qrels rows at
    all are skipped. Negative judgment grades never count as relevant.
    """
    if k < 1:
        raise ContractViolation(f"k must be >= 1, got {k}")
    rel: dict[tuple[str, str], int] = {}
    judged_queries: set[str] = set()
    for j in qrels:
        rel[(j.query_id, j.passage_id)] = j.relevance
        judged_queries.add(j.query_id)
    per_query: dict[str, float] = {}
    for query_id in run.query_ids:
        if query_id not in judged_queries:
            continue
        hits = sum(
            1 for e in run.top_k(query_id, k)
            if rel.get((query_id, e.passage_id), 0) >= level_for_rel)
        per_query[query_id] = hits / k
    mean = sum(per_query.values()) / len(per_query) if per_query else 0.0
    return PrecisionResult(per_query=per_query, mean=mean)


# ---------------------------------------------------------------------------
# Rank correlation


def _common_vectors(scores_a: dict[str, float], scores_b: dict[str, float]
                    ) -> tuple[list[float], list[float]]:
    common = sorted(set(scores_a) & set(scores_b))
    if len(common) < 3:
        raise UndefinedResult(
            f"need >= 3 common systems, got {len(common)}")
    return ([scores_a[s] for s in common], [scores_b[s] for s in common])


def spearman(scores_a: dict[str, float], scores_b: dict[str, float]) -> float:
    """Spearman rank correlation with average ranks for ties."""
    a, b = _common_vectors(scores_a, scores_b)
    return float(_scipy_stats.spearmanr(a, b).statistic)


def kendall_tau(scores_a: dict[str, float], scores_b: dict[str, float]
                ) -> float:
    """Kendall's tau-b (tie-corrected) rank correlation."""
    a, b = _common_vectors(scores_a, scores_b)
    return float(_scipy_stats.kendalltau(a, b).statistic)


@dataclass(frozen=True)
class CorrelationStats:
    spearman: float
    kendall: float
    n: int


def correlation_stats(scores_a: dict[str, float],
                      scores_b: dict[str, float]) -> CorrelationStats:
    n = len(set(scores_a) & set(scores_b))
    return CorrelationStats(
        spearman=spearman(scores_a, scores_b),
        kendall=kendall_tau(scores_a, scores_b),
        n=n)


# ---------------------------------------------------------------------------
# Leaderboards


@dataclass(frozen=True)
class LeaderboardRow:
    system: str
    score: float
    std_error: float
    official_rank: int | None = None


@dataclass(frozen=True)
class LeaderboardResult:
    rows: tuple[LeaderboardRow, ...]
    correlation: CorrelationStats | None


def _std_error(per_query: dict[str, float]) -> float:
    n = len(per_query)
    if n < 2:
        return 0.0
    values = list(per_query.values())
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return math.sqrt(var) / math.sqrt(n)


def _pooled_cover(runs: list[Run], bank: QuestionBank,
                  by_pair: dict[tuple[str, str], list[Grade]],
                  policy: GradePolicy, depth: int) -> dict[str, float]:
    pool: dict[str, list[str]] = defaultdict(list)
    seen: set[tuple[str, str]] = set()
    for run in runs:
        for query_id in run.query_ids:
            for e in run.top_k(query_id, depth):
                if (query_id, e.passage_id) not in seen:
                    seen.add((query_id, e.passage_id))
                    pool[query_id].append(e.passage_id)
    gaps: list[tuple[str, str]] = []
    per_query: dict[str, float] = {}
    for query_id in bank.query_ids:
        score = _cover_for_passages(pool.get(query_id, []), query_id,
                                    bank, by_pair, policy, gaps)
        if score is not None:
            per_query[query_id] = score
    return per_query


def _pooled_precision(runs: list[Run], qrels: list[Judgment], k: int,
                      level_for_rel: int, depth: int) -> dict[str, float]:
    # Best achievable P@k over the pooled passages: rank relevant ones first.
    rel: dict[tuple[str, str], int] = {
        (j.query_id, j.passage_id): j.relevance for j in qrels}
    pool: dict[str, set[str]] = defaultdict(set)
    for run in runs:
        for query_id in run.query_ids:
            for e in run.top_k(query_id, depth):
                pool[query_id].add(e.passage_id)
    judged_queries = {j.query_id for j in qrels}
    per_query: dict[str, float] = {}
    for query_id, pids in pool.items():
        if query_id not in judged_queries:
            continue
        relevant = sum(
            1 for pid in pids
            if rel.get((query_id, pid), 0) >= level_for_rel)
        per_query[query_id] = min(relevant, k) / k
    return per_query


def leaderboard(runs: list[Run], bank: QuestionBank, grades: list[Grade],
                policy: GradePolicy, metric: str = "cover",
                cover: CoverConfig = CoverConfig(), k: int = 20,
                official_ranks: dict[str, int] | None = None
                ) -> LeaderboardResult:
    """Score every run, add the pooled `_overall_` row, and correlate
    against the official ranking when one is supplied.

    `_overall_` scores the union of all systems' top-depth passages: the
    pooled coverage for the cover metric, the best achievable P@k for the
    qrels metric. It is excluded from the correlation, as are systems
    without an official rank.
    """
    if metric not in ("cover", "p_at_k"):
        raise ContractViolation(f"unknown leaderboard metric {metric!r}")
    by_pair = _grades_by_pair(grades, policy.mode)
    qrels = build_qrels(grades, bank, policy) if metric == "p_at_k" else []

    per_system: dict[str, dict[str, float]] = {}
    for run in runs:
        if metric == "cover":
            result = exam_cover(run, bank, grades, policy, cover)
            per_system[run.run_tag] = result.per_query
        else:
            per_system[run.run_tag] = precision_at_k(
                run, qrels, k, level_for_rel=1).per_query

    if metric == "cover":
        per_system[OVERALL_SYSTEM] = _pooled_cover(
            runs, bank, by_pair, policy, cover.depth)
    else:
        per_system[OVERALL_SYSTEM] = _pooled_precision(
            runs, qrels, k, 1, cover.depth)

    rows = []
    for system, per_query in per_system.items():
        score = (sum(per_query.values()) / len(per_query)
                 if per_query else 0.0)
        rows.append(LeaderboardRow(
            system=system,
            score=score,
            std_error=_std_error(per_query),
            official_rank=(official_ranks or {}).get(system)))
    rows.sort(key=lambda r: (-r.score, r.system))

    correlation = None
    if official_ranks:
        ours = {r.system: r.score for r in rows
                if r.system != OVERALL_SYSTEM and r.official_rank is not None}
        # Lower official rank is better, so negate for correlation.
        theirs = {s: -float(official_ranks[s]) for s in ours}
        try:
            correlation = correlation_stats(ours, theirs)
        except UndefinedResult:
            correlation = None
    return LeaderboardResult(rows=tuple(rows), correlation=correlation)


def se_overlap_test(row_a: LeaderboardRow, row_b: LeaderboardRow) -> str:
    """Distinct iff the two score +/- std_error intervals do not touch."""
    lo_a, hi_a = row_a.score - row_a.std_error, row_a.score + row_a.std_error
    lo_b, hi_b = row_b.score - row_b.std_error, row_b.score + row_b.std_error
    return "distinct" if (hi_a < lo_b or hi_b < lo_a) else "overlapping"


# ---------------------------------------------------------------------------
# Cohen's kappa and agreement tables


@dataclass(frozen=True)
class KappaResult:
    overall: float
    per_row: tuple[float, ...]


def cohens_kappa(counts) -> KappaResult:
    """Cohen's kappa of a square confusion matrix, plus the per-category
    (one-vs-rest) kappa for each row label.
    """
    data = np.asarray(counts, dtype=np.int64)
    if data.ndim != 2 or data.shape[0] != data.shape[1]:
        raise ContractViolation(
            f"confusion matrix must be square, got shape {data.shape}")
    if (data < 0).any():
        raise ContractViolation("counts must be non-negative")
    total = int(data.sum())
    if total <= 0:
        raise ContractViolation("confusion matrix must have positive total")

    def _kappa(matrix: np.ndarray) -> float:
        n = matrix.sum()
        p_observed = matrix.trace() / n
        p_expected = float(
            np.dot(matrix.sum(axis=1), matrix.sum(axis=0))) / (n * n)
        if p_expected == 1.0:
            raise UndefinedResult("degenerate marginals: expected agreement 1")
        return float((p_observed - p_expected) / (1.0 - p_expected))

    per_row = []
    for i in range(data.shape[0]):
        tp = data[i, i]
        row = data[i].sum() - tp
        col = data[:, i].sum() - tp
        rest = total - tp - row - col
        per_row.append(_kappa(np.array([[tp, row], [col, rest]])))
    return KappaResult(overall=_kappa(data), per_row=tuple(per_row))


@dataclass(frozen=True)
class CollapseSpec:
    """How to group label values (rows) and judgment values (columns)."""
    name: str
    label_groups: tuple[tuple[int, ...], ...]
    judgment_groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        for groups in (self.label_groups, self.judgment_groups):
            flat = [v for g in groups for v in g]
            if len(flat) != len(set(flat)):
                raise ContractViolation(
                    f"collapse {self.name!r} has overlapping groups")


def _group_name(group: tuple[int, ...]) -> str:
    return "+".join(str(v) for v in sorted(group, reverse=True))


def lenient_spec(judgment_rel: tuple[int, ...] = (1, 2, 3),
                 judgment_nonrel: tuple[int, ...] = (0,)) -> CollapseSpec:
    return CollapseSpec("lenient",
                        label_groups=((1, 2, 3, 4, 5), (0,)),
                        judgment_groups=(judgment_rel, judgment_nonrel))


def strict_spec(judgment_rel: tuple[int, ...] = (1, 2, 3),
                judgment_nonrel: tuple[int, ...] = (0,)) -> CollapseSpec:
    return CollapseSpec("strict",
                        label_groups=((4, 5), (0, 1, 2, 3)),
                        judgment_groups=(judgment_rel, judgment_nonrel))


def binary_spec(judgment_rel: tuple[int, ...] = (1, 2, 3),
                judgment_nonrel: tuple[int, ...] = (0,)) -> CollapseSpec:
    return CollapseSpec("binary",
                        label_groups=((1,), (0,)),
                        judgment_groups=(judgment_rel, judgment_nonrel))


def graded_spec(max_judgment: int = 3) -> CollapseSpec:
    return CollapseSpec(
        "graded",
        label_groups=tuple((v,) for v in range(5, -1, -1)),
        judgment_groups=tuple((v,) for v in range(max_judgment, -1, -1)))


def _split_at(values: set[int], threshold: int
              ) -> tuple[tuple[int, ...], tuple[int, ...]]:
    hi = tuple(sorted((v for v in values if v >= threshold), reverse=True))
    lo = tuple(sorted((v for v in values if v < threshold), reverse=True))
    return hi, lo


def collapse_for(name: str, observed_labels: set[int],
                 observed_judgments: set[int],
                 judgment_rel_min: int = 1) -> CollapseSpec:
    """Build a collapse over the value sets actually present in the data.

    graded keeps every value distinct; lenient groups labels >= 1 as
    relevant, strict labels >= 4, binary expects 0/1 labels. Judgment
    columns split at judgment_rel_min except for graded.
    """
    labels = tuple(sorted(observed_labels, reverse=True))
    judgments = tuple(sorted(observed_judgments, reverse=True))
    if name == "graded":
        return CollapseSpec(name,
                            label_groups=tuple((v,) for v in labels),
                            judgment_groups=tuple((v,) for v in judgments))
    label_min = {"lenient": 1, "binary": 1, "strict": 4}.get(name)
    if label_min is None:
        raise ContractViolation(f"unknown collapse name {name!r}")
    label_groups = tuple(
        g for g in _split_at(observed_labels, label_min) if g)
    judgment_groups = tuple(
        g for g in _split_at(observed_judgments, judgment_rel_min) if g)
    return CollapseSpec(name, label_groups=label_groups,
                        judgment_groups=judgment_groups)


@dataclass(frozen=True)
class ConfusionTable:
    name: str
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]
    kappa_overall: float | None
    kappa_per_row: tuple[float, ...] | None
    dropped_pairs: int = 0

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)


def confusion_table(labels: list[Judgment], judgments: list[Judgment],
                    spec: CollapseSpec) -> ConfusionTable:
    """Cross-tabulate predicted labels against official judgments.

    Pairs present on only one side are dropped and counted. Negative
    judgment grades collapse to 0 before grouping. Kappa values are filled
    in only when the collapsed table is square.
    """
    label_map = {(j.query_id, j.passage_id): j.relevance for j in labels}
    judgment_map = {(j.query_id, j.passage_id): j.relevance for j in judgments}
    common = set(label_map) & set(judgment_map)
    if not common:
        raise ContractViolation("no (query, passage) pairs in common")
    dropped = (len(label_map) - len(common)) + (len(judgment_map) - len(common))

    row_of = {v: i for i, g in enumerate(spec.label_groups) for v in g}
    col_of = {v: i for i, g in enumerate(spec.judgment_groups) for v in g}
    counts = np.zeros((len(spec.label_groups), len(spec.judgment_groups)),
                      dtype=np.int64)
    for key in common:
        label, judgment = label_map[key], judgment_map[key]
        if label not in row_of:
            raise ContractViolation(
                f"label value {label} not covered by collapse {spec.name!r}")
        if judgment not in col_of:
            raise ContractViolation(
                f"judgment value {judgment} not covered by collapse "
                f"{spec.name!r}")
        counts[row_of[label], col_of[judgment]] += 1

    kappa_overall = kappa_per_row = None
    if counts.shape[0] == counts.shape[1]:
        try:
            result = cohens_kappa(counts)
            kappa_overall, kappa_per_row = result.overall, result.per_row
        except UndefinedResult:
            pass
    return ConfusionTable(
        name=spec.name,
        row_labels=tuple(_group_name(g) for g in spec.label_groups),
        col_labels=tuple(_group_name(g) for g in spec.judgment_groups),
        counts=tuple(tuple(int(v) for v in row) for row in counts),
        kappa_overall=kappa_overall,
        kappa_per_row=kappa_per_row,
        dropped_pairs=dropped)


def agreement_tables(exam_labels: list[Judgment],
                     official: list[Judgment],
                     collapses: list[CollapseSpec]) -> list[ConfusionTable]:
    return [confusion_table(exam_labels, official, spec)
            for spec in collapses]


def min_answers_sweep(grades: list[Grade], bank: QuestionBank,
                      policy: GradePolicy, official: list[Judgment],
                      values: tuple[int, ...] = (1, 2, 5),
                      judgment_rel_min: int = 1
                      ) -> list[tuple[int, ConfusionTable]]:
    """Binary agreement tables for a sweep of min_answers thresholds."""
    observed_judgments = {j.relevance for j in official}
    out = []
    for n in values:
        swept = GradePolicy(mode=policy.mode, min_rating=policy.min_rating,
                            min_answers=n)
        labels = build_qrels(grades, bank, swept, graded=False)
        spec = collapse_for("binary", {j.relevance for j in labels} | {0, 1},
                            observed_judgments, judgment_rel_min)
        table = confusion_table(labels, official, spec)
        out.append((n, ConfusionTable(
            name=f"binary-min-answers-{n}",
            row_labels=table.row_labels,
            col_labels=table.col_labels,
            counts=table.counts,
            kappa_overall=table.kappa_overall,
            kappa_per_row=table.kappa_per_row,
            dropped_pairs=table.dropped_pairs)))
    return out
