import pytest
from hypothesis import given, strategies as st

from exam_eval.formats import GradeStore
from exam_eval.gateway import BackendConfig, BackendError, MockBackend
from exam_eval.grading import (
    SegmentationConfig,
    build_passage_pool,
    grade_corpus,
    grade_pair,
    levenshtein,
    normalize_answer,
    parse_self_rating,
    segment_response,
    verify_answer,
)
from exam_eval.model import (
    ContractViolation,
    ExamQuestion,
    Judgment,
    Passage,
    QA_VERIFIED,
    QuestionBank,
    SELF_RATED,
)
from conftest import make_run


class TestSegmentation:
    def test_short_text_single_passage(self):
        text = " ".join(f"w{i}" for i in range(100))
        [passage] = segment_response(text)
        assert passage.text == text

    def test_sentence_boundary_splits(self):
        sentences = [
            " ".join(f"s{i}w{j}" for j in range(9)) + "."
            for i in range(90)
        ]
        text = " ".join(sentences)  # 90 sentences x 10 tokens
        passages = segment_response(text)
        assert len(passages) == 3
        for p in passages:
            assert len(p.text.split()) <= 400
            assert p.text.endswith(".")

    def test_oversized_sentence_hard_split(self):
        text = " ".join(f"w{i}" for i in range(600))  # no sentence ends
        passages = segment_response(text)
        assert len(passages) == 2
        assert len(passages[0].text.split()) == 400
        assert len(passages[1].text.split()) == 200

    def test_reconstruction_modulo_whitespace(self):
        text = ("First sentence here. Second one follows!  Third asks? "
                "Fourth ends.") * 50
        passages = segment_response(text)
        joined = " ".join(p.text for p in passages)
        assert joined.split() == text.split()

    def test_ids_are_hash_slash_ordinal(self):
        text = " ".join(f"w{i}" for i in range(900))
        passages = segment_response(text)
        prefixes = {p.passage_id.split("/")[0] for p in passages}
        assert len(prefixes) == 1
        assert [p.passage_id.split("/")[1] for p in passages] \
            == [str(i) for i in range(len(passages))]

    def test_config_bounds(self):
        with pytest.raises(ContractViolation):
            SegmentationConfig(target_tokens=16)


class TestNormalizeAnswer:
    def test_worked_example(self):
        # lowercase, drop "the", Porter-stem epidermis -> epidermi
        assert normalize_answer("The Epidermis") == "epidermi"

    def test_empty(self):
        assert normalize_answer("") == ""

    def test_all_stopwords(self):
        assert normalize_answer("a the of") == ""


class TestVerifyAnswer:
    def test_exact_match(self):
        assert verify_answer("epidermis", "epidermis")

    def test_stopword_difference_matches(self):
        assert verify_answer("the epidermis", "epidermis")

    def test_different_layer_rejected(self):
        # "dermi" vs "epidermi": distance 3 >= 0.2 * 8
        assert not verify_answer("dermis", "epidermis")

    def test_empty_gold_rejected(self):
        with pytest.raises(ContractViolation):
            verify_answer("x", "")

    def test_stopword_only_gold_falls_back_to_raw(self):
        assert verify_answer("the", "the")
        assert not verify_answer("zebra", "the")

    @given(st.text(alphabet="abcdefgh ", min_size=1, max_size=30))
    def test_reflexive(self, text):
        assert verify_answer(text, text)

    @given(st.text(alphabet="abc", max_size=8), st.text(alphabet="abc", max_size=8))
    def test_levenshtein_matches_symmetric(self, a, b):
        assert levenshtein(a, b) == levenshtein(b, a)
        assert levenshtein(a, b) <= max(len(a), len(b))


class TestParseSelfRating:
    @pytest.mark.parametrize("completion,expected", [
        ("4: The answer is mostly relevant and complete", 4),
        ("unanswerable", 0),
        ("the context seems related", 1),
        ("0", 0),
        ("5", 5),
        ("rating of 3 seems right", 3),
        ("no", 0),
        ("normal response without digits", 1),
        ("there is no answer here", 0),
        ("it is not possible to tell", 0),
        ("not enough information", 0),
        ("I'd say 10 out of 10", 1),  # no standalone 0-5 digit
        ("", 1),
    ])
    def test_fallback_rules(self, completion, expected):
        assert parse_self_rating(completion) == expected

    @given(st.text(max_size=50))
    def test_total_function(self, completion):
        assert parse_self_rating(completion) in range(6)


def config():
    return BackendConfig()


class TestGradePair:
    def test_verified_worked_example(self, tqa_question, skin_passage):
        backend = MockBackend({"default": "epidermis"})
        grade = grade_pair(tqa_question, skin_passage, QA_VERIFIED,
                           config(), backend)
        assert grade.verified is True
        assert grade.answer_text == "epidermis"
        assert grade.mode == QA_VERIFIED

    def test_self_rating_worked_example(self, generated_question, skin_passage):
        backend = MockBackend({"default": (
            "4: The answer is mostly relevant and complete but may have "
            "minor gaps or inaccuracies.")})
        grade = grade_pair(generated_question, skin_passage, SELF_RATED,
                           config(), backend)
        assert grade.rating == 4

    def test_qa_requires_gold_answer(self, generated_question, skin_passage):
        with pytest.raises(ContractViolation):
            grade_pair(generated_question, skin_passage, QA_VERIFIED,
                       config(), MockBackend({}))


class FailingBackend:
    def complete(self, request):
        raise BackendError("backend down")


class TestGradeCorpus:
    def bank_and_passages(self):
        bank = QuestionBank({
            "q1": tuple(ExamQuestion(f"q1/q/{i}", "q1", f"A{i}?")
                        for i in range(3)),
            "q2": tuple(ExamQuestion(f"q2/q/{i}", "q2", f"B{i}?")
                        for i in range(3)),
        })
        passages = {
            "q1": [Passage(f"p{i}", f"text {i}") for i in range(4)],
            "q2": [Passage(f"r{i}", f"text {i}") for i in range(4)],
        }
        return bank, passages

    def test_cardinality(self, tmp_path):
        bank, passages = self.bank_and_passages()
        store = GradeStore(tmp_path / "g.jsonl.gz")
        backend = MockBackend({"default": "3"})
        summary = grade_corpus(bank, passages, SELF_RATED, config(),
                               store, backend)
        assert summary.graded == 24
        assert len(store.read()) == 24
        assert len(backend.request_log) == 24

    def test_resume_skips_complete_store(self, tmp_path):
        bank, passages = self.bank_and_passages()
        store = GradeStore(tmp_path / "g.jsonl.gz")
        grade_corpus(bank, passages, SELF_RATED, config(), store,
                     MockBackend({"default": "3"}))
        backend = MockBackend({"default": "3"})
        summary = grade_corpus(bank, passages, SELF_RATED, config(),
                               store, backend)
        assert summary.graded == 0
        assert summary.skipped_existing == 24
        assert backend.request_log == []

    def test_duplicate_passages_graded_once(self, tmp_path):
        bank, passages = self.bank_and_passages()
        passages["q1"] = passages["q1"] + [Passage("p0", "text 0")]
        store = GradeStore(tmp_path / "g.jsonl.gz")
        backend = MockBackend({"default": "3"})
        grade_corpus(bank, passages, SELF_RATED, config(), store, backend)
        assert len(backend.request_log) == 24

    def test_failures_go_to_skip_log(self, tmp_path):
        bank, passages = self.bank_and_passages()
        store = GradeStore(tmp_path / "g.jsonl.gz")
        summary = grade_corpus(bank, passages, SELF_RATED, config(),
                               store, FailingBackend())
        assert summary.graded == 0
        assert len(summary.failures) == 24
        # Request accounting: grades + skip-log covers every pair.
        assert summary.graded + len(summary.failures) == 24

    def test_parallel_matches_serial(self, tmp_path):
        bank, passages = self.bank_and_passages()
        serial_store = GradeStore(tmp_path / "serial.jsonl.gz")
        grade_corpus(bank, passages, SELF_RATED, config(), serial_store,
                     MockBackend({"default": "2"}))
        parallel_store = GradeStore(tmp_path / "parallel.jsonl.gz")
        grade_corpus(bank, passages, SELF_RATED,
                     BackendConfig(parallelism=4), parallel_store,
                     MockBackend({"default": "2"}))
        key = lambda g: g.key
        assert sorted(serial_store.read(), key=key) \
            == sorted(parallel_store.read(), key=key)


class TestPassagePool:
    def test_union_of_runs_and_judgments(self):
        run_a = make_run("a", [("q1", "p1"), ("q1", "p2")])
        run_b = make_run("b", [("q1", "p2"), ("q1", "p3")])
        judgments = [Judgment("q1", "p9", 2), Judgment("q2", "p1", 0)]
        pool = build_passage_pool([run_a, run_b], depth=20,
                                  judgments=judgments)
        assert pool["q1"] == ["p1", "p2", "p3", "p9"]
        assert pool["q2"] == ["p1"]

    def test_depth_cut(self):
        run = make_run("a", [("q1", f"p{i}") for i in range(30)])
        pool = build_passage_pool([run], depth=20)
        assert len(pool["q1"]) == 20
