import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoforge.answers import compute_visibility, parse_citations
from geoforge.corpus import Dataset
from geoforge.errors import ContractError, JudgeUnconfiguredError, NoExtractablePairsError, ValidationError
from geoforge.evaluation import (
    KeywordSet,
    RewriteMethod,
    citation_recall,
    jaccard_overlap,
    judged_metric,
    run_evaluation,
)
from geoforge.gateway import Gateway, ReplayBackend, Transcript
from geoforge.keyword_fixtures import EXPECTED_OVERLAPS, KEYWORD_SETS
from geoforge.rewards import AttackMode, inject_adversarial

from conftest import make_gateway, make_record, stage_responder


class TestCitationRecall:
    def test_all_cited(self):
        answer = parse_citations("A one [1]. B two [2]. C three [1]. D four [3].", 5)
        assert citation_recall(answer) == pytest.approx(1.0)

    def test_half_cited(self):
        answer = parse_citations("A one [1]. B two. C three [2]. D four.", 5)
        assert citation_recall(answer) == pytest.approx(0.5)

    def test_empty_answer_vacuous_zero(self):
        assert citation_recall(parse_citations("", 3)) == 0.0

    def test_fuzz_recount_oracle(self):
        rng = random.Random(8080)
        for _ in range(500):
            sentences = []
            for _ in range(rng.randint(1, 12)):
                cite = f" [{rng.randint(1, 4)}]" if rng.random() < 0.6 else ""
                sentences.append(f"word another{cite}.")
            answer = parse_citations(" ".join(sentences), 4)
            expected = sum(1 for s in answer.sentences if s.citations) / len(answer.sentences)
            assert citation_recall(answer) == pytest.approx(expected)


class StubJudge:
    def __init__(self, scores):
        self.scores = scores

    def score(self, name, inputs):
        return self.scores[name]


class TestJudgedMetric:
    def test_stub_clarity(self):
        assert judged_metric("clarity", {}, StubJudge({"clarity": 0.5})) == 0.5

    def test_kpc_out_of_range(self):
        with pytest.raises(ValidationError, match="kpc"):
            judged_metric("kpc", {}, StubJudge({"kpc": 1.2}))

    def test_judge_unconfigured(self):
        with pytest.raises(JudgeUnconfiguredError):
            judged_metric("kpr", {}, None)

    def test_unknown_metric(self):
        with pytest.raises(ValidationError):
            judged_metric("vibes", {}, StubJudge({"vibes": 1}))

    def test_percent_scale_metrics(self):
        judge = StubJudge({"precision": 93.4, "insight": 50.0})
        assert judged_metric("precision", {}, judge) == 93.4
        assert judged_metric("insight", {}, judge) == 50.0


class TestJaccardOverlap:
    def test_fixture_pairs_reproduce_published_percentages(self):
        for (left, right), expected in EXPECTED_OVERLAPS.items():
            value = jaccard_overlap(KeywordSet.fixture(left), KeywordSet.fixture(right))
            assert round(100 * value, 2) == expected, (left, right)

    def test_identical_sets(self):
        a = KeywordSet(label="a", keywords=frozenset({"x", "y"}))
        b = KeywordSet(label="b", keywords=frozenset({"x", "y"}))
        assert jaccard_overlap(a, b) == 1.0

    def test_disjoint_sets(self):
        a = KeywordSet(label="a", keywords=frozenset({"x"}))
        b = KeywordSet(label="b", keywords=frozenset({"y"}))
        assert jaccard_overlap(a, b) == 0.0

    def test_normalization(self):
        a = KeywordSet(label="a", keywords=frozenset({" Source Citation "}))
        b = KeywordSet(label="b", keywords=frozenset({"source citation"}))
        assert jaccard_overlap(a, b) == 1.0

    def test_empty_set_contract(self):
        with pytest.raises(ValidationError):
            KeywordSet(label="empty", keywords=frozenset())

    @settings(max_examples=100, deadline=None)
    @given(
        st.frozensets(st.sampled_from("abcdefgh"), min_size=1),
        st.frozensets(st.sampled_from("abcdefgh"), min_size=1),
    )
    def test_symmetry_and_bounds(self, left, right):
        a = KeywordSet(label="a", keywords=left)
        b = KeywordSet(label="b", keywords=right)
        value = jaccard_overlap(a, b)
        assert value == jaccard_overlap(b, a)
        assert 0 <= value <= 1
        assert (value == 1) == (a.keywords == b.keywords)

    def test_unknown_fixture(self):
        with pytest.raises(ValidationError):
            KeywordSet.fixture("nope")


def _answer_for(query: str, target_marker: str) -> str:
    # Deterministic per-query answer; cites the target more when marked.
    if target_marker in query:
        return "Big claim [1][2]. Target detail [1]. More target [1]."
    return "Spread one [1]. Spread two [2]. Spread three [3]."


def _engine_responder(req):
    marker = "engines"
    return _answer_for(req.user, marker)


def _make_dataset(n=4):
    topics = ["engines", "batteries", "antennas", "rotors", "gears"][:n]
    records = tuple(
        make_record(
            f"q{i}",
            f"how do {topic} work",
            [f"{topic} candidate number {j} body" for j in range(5)],
            target_index=0,
        )
        for i, topic in enumerate(topics)
    )
    return Dataset(records=records)


class TestRunEvaluation:
    def test_identity_method_aggregation_oracle(self):
        dataset = _make_dataset()
        gateway = make_gateway(stage_responder(engine=_engine_responder))
        report = run_evaluation(dataset, [], gateway)
        rows = [r for r in report.rows if r.method == "vanilla"]
        # Recompute the means directly from the rows.
        assert report.means["vanilla"]["word"] == pytest.approx(
            math.fsum(r.word for r in rows) / len(rows), abs=1e-12
        )
        assert report.means["vanilla"]["overall"] == pytest.approx(
            math.fsum(r.overall for r in rows) / len(rows), abs=1e-12
        )
        # And against a per-query recomputation from the raw answers.
        expected_words = []
        for record in dataset.records:
            answer = parse_citations(_answer_for(f"how do {record.query.split()[2]} work", "engines"), 5)
            expected_words.append(compute_visibility(answer, 5)[0].word)
        assert report.means["vanilla"]["word"] == pytest.approx(
            math.fsum(expected_words) / len(expected_words), abs=1e-9
        )

    def test_vanilla_rows_identical_across_method_lists(self):
        dataset = _make_dataset()
        hijack = RewriteMethod(name="hijack", apply=lambda d: inject_adversarial(d, AttackMode.HIJACK).rewritten)

        def run(methods):
            gateway = make_gateway(stage_responder(engine=_engine_responder))
            return run_evaluation(dataset, methods, gateway)

        lone = run([])
        with_attack = run([hijack])
        vanilla_a = [r for r in lone.rows if r.method == "vanilla"]
        vanilla_b = [r for r in with_attack.rows if r.method == "vanilla"]
        assert vanilla_a == vanilla_b
        assert lone.means["vanilla"] == with_attack.means["vanilla"]

    def test_zero_citation_answers_are_skipped_and_counted(self):
        dataset = _make_dataset(3)

        def engine(req):
            if "batteries" in req.user:
                return "No citations at all in this one."
            return "Cited [1]. Also cited [2]."

        gateway = make_gateway(stage_responder(engine=engine))
        report = run_evaluation(dataset, [], gateway)
        assert report.skipped["vanilla"] == 1
        assert len([r for r in report.rows if r.method == "vanilla"]) == 2

    def test_all_skipped_errors(self):
        dataset = _make_dataset(2)
        gateway = make_gateway(stage_responder(engine=lambda req: "Nothing cited."))
        with pytest.raises(NoExtractablePairsError):
            run_evaluation(dataset, [], gateway)

    def test_permutation_invariant_means(self):
        dataset = _make_dataset(4)
        reversed_dataset = Dataset(records=tuple(reversed(dataset.records)))
        gateway = make_gateway(stage_responder(engine=_engine_responder))
        forward = run_evaluation(dataset, [], gateway)
        backward = run_evaluation(reversed_dataset, [], make_gateway(stage_responder(engine=_engine_responder)))
        assert forward.means["vanilla"] == backward.means["vanilla"]

    def test_judged_metrics_flow_into_report(self):
        dataset = _make_dataset(2)
        gateway = make_gateway(stage_responder(engine=_engine_responder))
        report = run_evaluation(
            dataset, [], gateway, judge=StubJudge({"clarity": 60.0}), judged_metrics=["clarity"]
        )
        assert report.means["vanilla"]["clarity"] == pytest.approx(60.0)

    def test_judged_metrics_without_judge(self):
        dataset = _make_dataset(2)
        gateway = make_gateway(stage_responder(engine=_engine_responder))
        with pytest.raises(JudgeUnconfiguredError):
            run_evaluation(dataset, [], gateway, judged_metrics=["clarity"])

    def test_empty_dataset_contract(self):
        gateway = make_gateway(lambda req: "x")
        with pytest.raises(ContractError):
            run_evaluation(Dataset(records=()), [], gateway)

    def test_report_replay_determinism(self, tmp_path):
        dataset = _make_dataset(3)
        transcript = Transcript()
        recording = make_gateway(stage_responder(engine=_engine_responder), transcript=transcript)
        hijack = RewriteMethod(name="hijack", apply=lambda d: inject_adversarial(d, AttackMode.HIJACK).rewritten)
        run_evaluation(dataset, [hijack], recording, metadata={"seed": 0, "transcript": "t.jsonl"})
        path = tmp_path / "t.jsonl"
        transcript.save(path)

        def replay():
            gateway = Gateway(ReplayBackend(Transcript.load(path)))
            report = run_evaluation(dataset, [hijack], gateway, metadata={"seed": 0, "transcript": "t.jsonl"})
            return report.to_json()

        assert replay() == replay()

    def test_removing_a_query_touches_only_its_row(self):
        full = _make_dataset(4)
        reduced = Dataset(records=full.records[:-1])
        full_report = run_evaluation(full, [], make_gateway(stage_responder(engine=_engine_responder)))
        reduced_report = run_evaluation(reduced, [], make_gateway(stage_responder(engine=_engine_responder)))
        kept = {r.id for r in reduced.records}
        assert [r for r in full_report.rows if r.query_id in kept] == reduced_report.rows

    def test_table_renders_expected_columns(self):
        dataset = _make_dataset(2)
        gateway = make_gateway(stage_responder(engine=_engine_responder))
        table = run_evaluation(dataset, [], gateway).to_table()
        header = table.splitlines()[0]
        assert header.split()[:5] == ["Method", "Word", "Pos", "Overall", "Recall"]
        assert "vanilla" in table


class TestKeywordFixtures:
    def test_set_cardinalities_match_transcription(self):
        assert len(KEYWORD_SETS["researchy_gemini"]) == 17
        assert len(KEYWORD_SETS["researchy_gpt"]) == 17
        assert len(KEYWORD_SETS["researchy_claude"]) == 18
        assert len(KEYWORD_SETS["geo_bench_gemini"]) == 15
        assert len(KEYWORD_SETS["e_commerce_gemini"]) == 14

    def test_pending_pair_not_listed(self):
        assert ("geo_bench_gemini", "e_commerce_gemini") not in EXPECTED_OVERLAPS
