"""Command-line interface: one subcommand per pipeline stage.

Orchestration only; every computation lives in the library modules. All
file outputs are written atomically (temp file + rename) so reruns with
unchanged inputs are byte-identical and never leave partial artifacts.
"""
from __future__ import annotations

import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import click

from . import bank as bank_mod
from . import formats, gateway, grading, metrics
from .model import (
    ContractViolation,
    CoverConfig,
    Facet,
    GradePolicy,
    Passage,
    QA_VERIFIED,
    Query,
    SELF_RATED,
)

log = logging.getLogger("exam_eval")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_BACKEND_IO = 2


def parse_policy(text: str) -> GradePolicy:
    """Policy grammar: `qa` | `rate:<min_rating>`, optional `+min-answers=<n>`."""
    min_answers = 1
    if "+" in text:
        text, _, extra = text.partition("+")
        key, _, value = extra.partition("=")
        if key != "min-answers":
            raise ContractViolation(f"unknown policy modifier {key!r}")
        min_answers = int(value)
    if text == "qa":
        return GradePolicy(mode=QA_VERIFIED, min_answers=min_answers)
    if text.startswith("rate:"):
        return GradePolicy(mode=SELF_RATED, min_rating=int(text[5:]),
                           min_answers=min_answers)
    raise ContractViolation(
        f"bad policy {text!r}; expected 'qa' or 'rate:<min_rating>'")


def atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."),
                               prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def read_config_file(path: str) -> dict[str, str]:
    """Simple `key = value` config format; '#' starts a comment line."""
    values: dict[str, str] = {}
    for line_no, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ContractViolation(
                f"{path}:{line_no}: expected 'key = value'")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def load_queries(path: str) -> list[Query]:
    doc = json.loads(Path(path).read_text())
    queries = []
    for entry in doc:
        queries.append(Query(
            query_id=entry["query_id"],
            title=entry["title"],
            facets=tuple(Facet(f["facet_id"], f["title"])
                         for f in entry.get("facets", []))))
    return queries


def load_passages(path: str) -> dict[str, str]:
    """Passage texts as a JSON object {passage_id: text}."""
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise ContractViolation(
            f"{path}: expected a JSON object mapping passage_id to text")
    return {str(k): str(v) for k, v in doc.items()}


def _backend_config(endpoint: str, model: str, max_input_tokens: int,
                    parallelism: int, mock: str | None) -> gateway.BackendConfig:
    return gateway.BackendConfig(
        endpoint_url=endpoint, model_name=model,
        max_input_tokens=max_input_tokens, parallelism=parallelism,
        mock_fixture=mock)


def backend_options(fn):
    fn = click.option("--endpoint", default="", help="Inference endpoint URL.")(fn)
    fn = click.option("--model", default="", help="Model name for the backend.")(fn)
    fn = click.option("--max-input-tokens", default=512, show_default=True,
                      help="Prompt token budget.")(fn)
    fn = click.option("--parallelism", default=1, show_default=True,
                      help="Concurrent completion workers.")(fn)
    fn = click.option("--mock", default=None, type=click.Path(exists=True),
                      help="Scripted-response fixture; skips the HTTP backend.")(fn)
    return fn


# Config keys use the flag spelling; click's default_map wants the
# underlying parameter names.
_CONFIG_ALIASES = {
    "bank": "bank_path", "run": "run_path", "runs": "run_paths",
    "grades": "grades_path", "policy": "policy_text",
    "queries": "queries_path", "passages": "passages_path",
    "qrels": "qrels_path", "official": "official_path",
    "labels": "labels_path", "judgments": "judgments_path",
    "old": "old_path", "new": "new_path", "a": "path_a", "b": "path_b",
    "store": "store_path",
}


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="Key-value file supplying flag defaults.")
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
@click.pass_context
def cli(ctx, config_path, verbose):
    """Exam-style evaluation of retrieval system responses."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    if config_path:
        defaults = {_CONFIG_ALIASES.get(k, k): v
                    for k, v in read_config_file(config_path).items()}
        if "run_paths" in defaults:
            defaults["run_paths"] = tuple(defaults["run_paths"].split())
        ctx.default_map = {cmd: dict(defaults) for cmd in
                           ("generate", "grade", "cover", "qrels",
                            "leaderboard", "correlate", "agreement", "diff")}
    log.debug("resolved defaults: %s", ctx.default_map)


@cli.command()
@click.option("--queries", "queries_path", required=True,
              type=click.Path(exists=True), help="JSON query list.")
@click.option("--template", type=click.Choice(["dl", "car"]), required=True,
              help="dl: per query; car: per query-facet.")
@click.option("--out", required=True, type=click.Path(),
              help="Output bank JSON.")
@backend_options
def generate(queries_path, template, out, endpoint, model, max_input_tokens,
             parallelism, mock):
    """Generate a question bank from queries."""
    queries = load_queries(queries_path)
    config = _backend_config(endpoint, model, max_input_tokens,
                             parallelism, mock)
    tpl = gateway.PromptTemplate.named(
        "question_gen_dl" if template == "dl" else "question_gen_car")
    log.info("generating bank for %d queries (%s template)",
             len(queries), template)
    result = bank_mod.generate_bank(queries, tpl, config)
    atomic_write(out, formats.save_question_bank(result))
    click.echo(f"wrote {len(result.all_questions())} questions to {out}")


def _load_runs(run_paths: tuple[str, ...]) -> list:
    runs = []
    for path in run_paths:
        p = Path(path)
        files = sorted(p.iterdir()) if p.is_dir() else [p]
        for f in files:
            if f.is_file():
                runs.append(formats.load_run_file(f))
    return runs


@cli.command()
@click.option("--bank", "bank_path", required=True, type=click.Path(exists=True))
@click.option("--runs", "run_paths", multiple=True, required=True,
              type=click.Path(exists=True),
              help="Run file or directory of run files; repeatable.")
@click.option("--passages", "passages_path", required=True,
              type=click.Path(exists=True),
              help="JSON object mapping passage_id to text.")
@click.option("--qrels", "qrels_path", default=None, type=click.Path(exists=True),
              help="Official judgments whose passages join the pool.")
@click.option("--mode", type=click.Choice(["qa", "rate"]), required=True)
@click.option("--store", "store_path", required=True, type=click.Path())
@click.option("--depth", default=20, show_default=True)
@backend_options
def grade(bank_path, run_paths, passages_path, qrels_path, mode, store_path,
          depth, endpoint, model, max_input_tokens, parallelism, mock):
    """Grade pooled passages against the question bank."""
    bank = formats.load_question_bank(Path(bank_path).read_text())
    runs = _load_runs(run_paths)
    texts = load_passages(passages_path)
    judgments = formats.load_qrels(qrels_path) if qrels_path else None
    pool = grading.build_passage_pool(runs, depth, judgments)
    passages_by_query: dict[str, list[Passage]] = {}
    missing = 0
    for query_id, pids in pool.items():
        passages = []
        for pid in pids:
            if pid in texts:
                passages.append(Passage(pid, texts[pid]))
            else:
                missing += 1
        passages_by_query[query_id] = passages
    if missing:
        log.warning("%d pooled passages have no text and were dropped",
                    missing)
    config = _backend_config(endpoint, model, max_input_tokens,
                             parallelism, mock)
    grade_mode = QA_VERIFIED if mode == "qa" else SELF_RATED
    store = formats.GradeStore(store_path)
    summary = grading.grade_corpus(bank, passages_by_query, grade_mode,
                                   config, store)
    if summary.failures:
        skip_log = Path(store_path).with_suffix(".skipped.jsonl")
        atomic_write(skip_log, "".join(
            json.dumps(entry.__dict__, sort_keys=True) + "\n"
            for entry in summary.failures))
        log.warning("skip-log written to %s", skip_log)
    click.echo(f"graded {summary.graded} pairs "
               f"({summary.skipped_existing} already in store, "
               f"{len(summary.failures)} failed) in {summary.duration:.1f}s")


@cli.command()
@click.option("--bank", "bank_path", required=True, type=click.Path(exists=True))
@click.option("--run", "run_path", required=True, type=click.Path(exists=True))
@click.option("--grades", "grades_path", required=True,
              type=click.Path(exists=True))
@click.option("--policy", "policy_text", required=True)
@click.option("--depth", default=20, show_default=True)
@click.option("--out", default=None, type=click.Path(),
              help="Output TSV; stdout when omitted.")
def cover(bank_path, run_path, grades_path, policy_text, depth, out):
    """Per-query coverage scores and their mean for one run."""
    bank = formats.load_question_bank(Path(bank_path).read_text())
    run = formats.load_run_file(run_path)
    grades = formats.GradeStore(grades_path).read()
    policy = parse_policy(policy_text)
    result = metrics.exam_cover(run, bank, grades, policy, CoverConfig(depth))
    lines = ["query\tcover\n"]
    for query_id in sorted(result.per_query):
        lines.append(f"{query_id}\t{result.per_query[query_id]:.4f}\n")
    lines.append(f"mean\t{result.mean:.4f}\n")
    _emit("".join(lines), out)


@cli.command()
@click.option("--bank", "bank_path", required=True, type=click.Path(exists=True))
@click.option("--grades", "grades_path", required=True,
              type=click.Path(exists=True))
@click.option("--policy", "policy_text", required=True)
@click.option("--graded", is_flag=True,
              help="Emit 0-5 max self-ratings instead of binary labels.")
@click.option("--out", default=None, type=click.Path())
def qrels(bank_path, grades_path, policy_text, graded, out):
    """Derive a qrels file from stored grades."""
    bank = formats.load_question_bank(Path(bank_path).read_text())
    grades = formats.GradeStore(grades_path).read()
    policy = parse_policy(policy_text)
    labels = metrics.build_qrels(grades, bank, policy, graded=graded)
    _emit(formats.write_qrels(labels), out)


@cli.command()
@click.option("--bank", "bank_path", required=True, type=click.Path(exists=True))
@click.option("--runs", "run_paths", multiple=True, required=True,
              type=click.Path(exists=True))
@click.option("--grades", "grades_path", required=True,
              type=click.Path(exists=True))
@click.option("--policy", "policy_text", required=True)
@click.option("--metric", type=click.Choice(["cover", "p20"]),
              default="cover", show_default=True)
@click.option("--depth", default=20, show_default=True)
@click.option("--official", "official_path", default=None,
              type=click.Path(exists=True),
              help="JSON object mapping system name to official rank.")
@click.option("--out", default=None, type=click.Path())
def leaderboard(bank_path, run_paths, grades_path, policy_text, metric,
                depth, official_path, out):
    """Score all runs, including the pooled _overall_ row."""
    bank = formats.load_question_bank(Path(bank_path).read_text())
    runs = _load_runs(run_paths)
    grades = formats.GradeStore(grades_path).read()
    policy = parse_policy(policy_text)
    official = (json.loads(Path(official_path).read_text())
                if official_path else None)
    result = metrics.leaderboard(
        runs, bank, grades, policy,
        metric="cover" if metric == "cover" else "p_at_k",
        cover=CoverConfig(depth), k=depth,
        official_ranks=official)
    lines = ["system\tscore\tstd_error\tofficial_rank\n"]
    for row in result.rows:
        rank = "" if row.official_rank is None else str(row.official_rank)
        lines.append(f"{row.system}\t{row.score:.4f}\t"
                     f"{row.std_error:.4f}\t{rank}\n")
    _emit("".join(lines), out)
    if result.correlation:
        click.echo(f"spearman={result.correlation.spearman:.4f} "
                   f"kendall={result.correlation.kendall:.4f} "
                   f"n={result.correlation.n}", err=True)


def _read_leaderboard_scores(path: str) -> dict[str, float]:
    scores: dict[str, float] = {}
    for line in Path(path).read_text().splitlines():
        fields = line.split("\t")
        if len(fields) < 2 or fields[0] in ("system", metrics.OVERALL_SYSTEM):
            continue
        try:
            scores[fields[0]] = float(fields[1])
        except ValueError:
            raise ContractViolation(
                f"{path}: bad score {fields[1]!r} for {fields[0]!r}")
    return scores


@cli.command()
@click.option("--a", "path_a", required=True, type=click.Path(exists=True))
@click.option("--b", "path_b", required=True, type=click.Path(exists=True))
def correlate(path_a, path_b):
    """Rank correlation between two leaderboard TSVs."""
    scores_a = _read_leaderboard_scores(path_a)
    scores_b = _read_leaderboard_scores(path_b)
    stats = metrics.correlation_stats(scores_a, scores_b)
    click.echo(f"spearman\t{stats.spearman:.4f}")
    click.echo(f"kendall\t{stats.kendall:.4f}")
    click.echo(f"n\t{stats.n}")


def _format_table_tsv(table: metrics.ConfusionTable) -> str:
    lines = [f"# {table.name}"]
    lines.append("label\t" + "\t".join(table.col_labels)
                 + "\ttotal\tkappa")
    for i, row_label in enumerate(table.row_labels):
        row = table.counts[i]
        kappa = (f"{table.kappa_per_row[i]:.3f}"
                 if table.kappa_per_row else "")
        lines.append(f"{row_label}\t" + "\t".join(str(v) for v in row)
                     + f"\t{sum(row)}\t{kappa}")
    return "\n".join(lines) + "\n"


def _format_table_text(table: metrics.ConfusionTable) -> str:
    """Plain-text layout with judgment columns and per-row totals."""
    header = ["Label"] + list(table.col_labels) + ["Total", "kappa"]
    rows = [header]
    for i, row_label in enumerate(table.row_labels):
        row = table.counts[i]
        kappa = (f"{table.kappa_per_row[i]:.3f}"
                 if table.kappa_per_row else "")
        rows.append([row_label] + [str(v) for v in row]
                    + [str(sum(row)), kappa])
    widths = [max(len(r[c]) for r in rows) for c in range(len(header))]
    lines = [table.name.upper()]
    for r in rows:
        lines.append("  ".join(cell.rjust(w) for cell, w in zip(r, widths)))
    return "\n".join(lines) + "\n"


@cli.command()
@click.option("--labels", "labels_path", default=None,
              type=click.Path(exists=True),
              help="Exam-derived qrels (labels side of the join).")
@click.option("--judgments", "judgments_path", required=True,
              type=click.Path(exists=True), help="Official qrels.")
@click.option("--collapse", "collapse_names", default="graded,lenient,strict",
              show_default=True, help="Comma-separated collapse names.")
@click.option("--judgment-rel-min", default=1, show_default=True,
              help="Lowest judgment grade counted as relevant.")
@click.option("--min-answers", "min_answers", default=None,
              help="Comma-separated sweep values; needs --grades/--bank/--policy.")
@click.option("--grades", "grades_path", default=None,
              type=click.Path(exists=True))
@click.option("--bank", "bank_path", default=None, type=click.Path(exists=True))
@click.option("--policy", "policy_text", default=None)
@click.option("--format", "fmt", type=click.Choice(["tsv", "table"]),
              default="tsv", show_default=True)
@click.option("--out", default=None, type=click.Path())
def agreement(labels_path, judgments_path, collapse_names, judgment_rel_min,
              min_answers, grades_path, bank_path, policy_text, fmt, out):
    """Inter-annotator agreement tables between labels and judgments."""
    official = formats.load_qrels(judgments_path)
    render = _format_table_tsv if fmt == "tsv" else _format_table_text
    chunks: list[str] = []

    if labels_path:
        labels = formats.load_qrels(labels_path)
        observed_labels = {j.relevance for j in labels}
        observed_judgments = {j.relevance for j in official}
        for name in [n.strip() for n in collapse_names.split(",") if n.strip()]:
            spec = metrics.collapse_for(name, observed_labels,
                                        observed_judgments, judgment_rel_min)
            chunks.append(render(metrics.confusion_table(
                labels, official, spec)))

    if min_answers:
        if not (grades_path and bank_path and policy_text):
            raise ContractViolation(
                "--min-answers requires --grades, --bank, and --policy")
        values = tuple(int(v) for v in min_answers.split(","))
        grades = formats.GradeStore(grades_path).read()
        bank = formats.load_question_bank(Path(bank_path).read_text())
        policy = parse_policy(policy_text)
        for _, table in metrics.min_answers_sweep(
                grades, bank, policy, official, values, judgment_rel_min):
            chunks.append(render(table))

    if not chunks:
        raise ContractViolation(
            "nothing to do: supply --labels and/or --min-answers")
    _emit("\n".join(chunks), out)


@cli.command()
@click.option("--old", "old_path", required=True, type=click.Path(exists=True))
@click.option("--new", "new_path", required=True, type=click.Path(exists=True))
@click.option("--grades", "grades_path", required=True,
              type=click.Path(exists=True))
@click.option("--policy", "policy_text", required=True)
@click.option("--out", default=None, type=click.Path())
def diff(old_path, new_path, grades_path, policy_text, out):
    """Show bank edits and the passages whose labels they flip."""
    old = formats.load_question_bank(Path(old_path).read_text())
    new = formats.load_question_bank(Path(new_path).read_text())
    grades = formats.GradeStore(grades_path).read()
    policy = parse_policy(policy_text)
    report = bank_mod.diff_banks(old, new, grades, policy)
    lines = []
    for title, items in (("added", report.added), ("removed", report.removed),
                         ("edited", report.edited),
                         ("needs_grading", report.needs_grading)):
        for qid in items:
            lines.append(f"{title}\t{qid}\n")
    for flip in report.flips:
        lines.append(f"flip\t{flip.query_id}\t{flip.passage_id}\t"
                     f"{flip.old_label}->{flip.new_label}\n")
    _emit("".join(lines) if lines else "no differences\n", out)


def _emit(text: str, out: str | None) -> None:
    if out:
        atomic_write(out, text)
    else:
        click.echo(text, nl=False)


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return EXIT_OK
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return EXIT_VALIDATION
    except click.Abort:
        return EXIT_VALIDATION
    except (ContractViolation, formats.ParseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (gateway.BackendError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BACKEND_IO


if __name__ == "__main__":
    sys.exit(main())
