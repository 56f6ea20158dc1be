import json
import math
import random
import string

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoforge.corpus import (
    Dataset,
    Document,
    curate_commercial_queries,
    load_dataset,
    serialize_record,
    write_dataset,
)
from geoforge.errors import DatasetParseError, EmptyCurationError, ValidationError

from conftest import make_record


def _write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def _record_obj(record_id="r1", n=5, target=0):
    return {
        "id": record_id,
        "query": "what is the best widget",
        "candidates": [{"id": f"{record_id}-d{i}", "text": f"candidate text {i}"} for i in range(n)],
        "target_index": target,
    }


class TestLoadDataset:
    def test_identity_load_preserves_order(self, tmp_path):
        path = tmp_path / "data.jsonl"
        _write_lines(path, [json.dumps(_record_obj("a")), json.dumps(_record_obj("b"))])
        ds = load_dataset(path)
        assert [r.id for r in ds.records] == ["a", "b"]
        assert [c.text for c in ds.records[0].candidates] == [f"candidate text {i}" for i in range(5)]

    def test_wrong_candidate_count_names_record_id(self, tmp_path):
        path = tmp_path / "data.jsonl"
        _write_lines(path, [json.dumps(_record_obj("bad-one", n=4))])
        with pytest.raises(ValidationError, match="bad-one"):
            load_dataset(path)

    def test_malformed_line_names_line_number(self, tmp_path):
        path = tmp_path / "data.jsonl"
        _write_lines(path, [json.dumps(_record_obj("a")), "{not json"])
        with pytest.raises(DatasetParseError, match="line 2"):
            load_dataset(path)

    def test_partial_loads_impossible(self, tmp_path):
        path = tmp_path / "data.jsonl"
        _write_lines(path, [json.dumps(_record_obj("a")), json.dumps(_record_obj("b", target=9))])
        with pytest.raises(ValidationError):
            load_dataset(path)

    def test_duplicate_ids_rejected(self, tmp_path):
        path = tmp_path / "data.jsonl"
        _write_lines(path, [json.dumps(_record_obj("a")), json.dumps(_record_obj("a"))])
        with pytest.raises(ValidationError, match="duplicate"):
            load_dataset(path)

    def test_round_trip_is_byte_stable(self, tmp_path):
        # Oracle: serialize -> load -> serialize must be a fixed point, and the
        # loaded dataset must equal the original.
        rng = random.Random(20240613)
        records = []
        for i in range(1000):
            texts = [
                "".join(rng.choices(string.ascii_letters + " ", k=rng.randint(5, 60))).strip() or "x"
                for _ in range(5)
            ]
            records.append(make_record(f"rec-{i}", f"query number {i} ünïcode", texts, rng.randrange(5)))
        original = Dataset(records=tuple(records))
        first = tmp_path / "first.jsonl"
        second = tmp_path / "second.jsonl"
        write_dataset(original, first)
        loaded = load_dataset(first)
        write_dataset(loaded, second)
        assert first.read_bytes() == second.read_bytes()
        assert loaded == original


class TestInvariants:
    def test_empty_query_rejected(self):
        with pytest.raises(ValidationError, match="query"):
            make_record("r", "   ", ["a", "b", "c", "d", "e"])

    def test_empty_document_text_rejected(self):
        with pytest.raises(ValidationError, match="empty"):
            Document(id="d", text="  \n ")

    def test_target_index_bound(self):
        with pytest.raises(ValidationError, match="target_index"):
            make_record("r", "q", ["a", "b", "c", "d", "e"], target_index=5)

    def test_serialize_record_keeps_source_tag(self):
        record = make_record("r", "q", ["a", "b", "c", "d", "e"])
        line = serialize_record(record)
        assert "source_tag" not in line  # absent tag stays absent


class TestCurate:
    def test_dedup_and_length_rule(self):
        train, test = curate_commercial_queries(["buy shoes", "buy shoes", "x" * 401], seed=1)
        assert set(train) | set(test) == {"buy shoes"}

    def test_four_to_one_ratio(self):
        queries = [f"query {i}" for i in range(5)]
        train, test = curate_commercial_queries(queries, seed=7)
        assert len(train) == 4 and len(test) == 1
        assert sorted(train + test) == sorted(queries)

    def test_determinism(self):
        queries = [f"q {i}" for i in range(23)]
        assert curate_commercial_queries(queries, seed=3) == curate_commercial_queries(queries, seed=3)

    def test_boundary_length_400_kept(self):
        train, test = curate_commercial_queries(["y" * 400], seed=0)
        assert train == ["y" * 400] and test == []

    def test_idempotent_on_own_output(self):
        queries = [f"thing {i}" for i in range(17)] + ["thing 3", "  thing 5  "]
        train, test = curate_commercial_queries(queries, seed=11)
        again = curate_commercial_queries(train + test, seed=11)
        assert again == (train, test)

    def test_empty_curation_error(self):
        with pytest.raises(EmptyCurationError):
            curate_commercial_queries(["z" * 500, "   "], seed=0)

    def test_predicate_hook(self):
        train, test = curate_commercial_queries(
            ["keep one", "drop two", "keep three"], seed=0, relevance_predicate=lambda q: q.startswith("keep")
        )
        assert set(train) | set(test) == {"keep one", "keep three"}

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=1, max_value=200), st.integers())
    def test_split_sizes(self, n, seed):
        queries = [f"item {i}" for i in range(n)]
        train, test = curate_commercial_queries(queries, seed=seed)
        assert len(train) == math.ceil(4 * n / 5)
        assert len(test) == n - len(train)
