"""Tests for the patient-record data model and cohort file IO."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from medrec.ehr import (CodeVocabulary, Cohort, PatientRecord, Visit,
                        encode_multi_hot, filter_min_visits, load_cohort,
                        save_cohort, split_cohort)
from medrec.errors import (CohortFormatError, EncodingError, SchemaError,
                           SplitError)


def toy_cohort(visit_counts):
    vocab_d = CodeVocabulary.from_codes("diagnosis", ["D0", "D1", "D2"])
    vocab_p = CodeVocabulary.from_codes("procedure", ["P0"])
    vocab_m = CodeVocabulary.from_codes("medication", ["M0", "M1"])
    records = tuple(
        PatientRecord(f"p{i}", tuple(Visit.of({0}, {0}, {0}) for _ in range(c)))
        for i, c in enumerate(visit_counts))
    return Cohort(records, vocab_d, vocab_p, vocab_m)


class TestMultiHot:
    def test_basic(self):
        assert encode_multi_hot({0, 2}, 4).dense().tolist() == [1, 0, 1, 0]

    def test_empty(self):
        assert encode_multi_hot(set(), 3).dense().tolist() == [0, 0, 0]

    def test_full(self):
        assert encode_multi_hot({0, 1, 2}, 3).dense().tolist() == [1, 1, 1]

    def test_out_of_range_names_index(self):
        with pytest.raises(EncodingError, match="7"):
            encode_multi_hot({0, 7}, 4)

    @given(st.sets(st.integers(0, 19)), st.integers(20, 30))
    @settings(max_examples=50, deadline=None)
    def test_dense_has_exactly_active_ones(self, codes, dims):
        mh = encode_multi_hot(codes, dims)
        dense = mh.dense()
        assert dense.sum() == len(codes)
        assert set(np.flatnonzero(dense)) == codes


class TestVocabulary:
    def test_bijection(self):
        vocab = CodeVocabulary.from_codes("diagnosis", ["b", "a", "c"])
        assert vocab.codes == ("a", "b", "c")
        for i, code in enumerate(vocab.codes):
            assert vocab.index(code) == i
            assert vocab.code(i) == code

    def test_duplicates_rejected(self):
        with pytest.raises(SchemaError):
            CodeVocabulary("diagnosis", ("a", "a"))

    def test_unknown_code(self):
        vocab = CodeVocabulary.from_codes("medication", ["a"])
        with pytest.raises(EncodingError, match="medication"):
            vocab.index("zzz")


class TestFilter:
    def test_min_two(self):
        out = filter_min_visits(toy_cohort([1, 2, 3]), 2)
        assert [len(r.visits) for r in out.records] == [2, 3]

    def test_min_one_is_identity(self):
        cohort = toy_cohort([1, 2, 3])
        assert filter_min_visits(cohort, 1).records == cohort.records

    def test_empty_result_allowed(self):
        assert len(filter_min_visits(toy_cohort([1, 2, 3]), 4)) == 0


class TestSplit:
    def test_exact_division(self):
        parts = split_cohort(toy_cohort([2] * 600), (4, 1, 1), seed=7)
        assert tuple(len(p) for p in parts) == (400, 100, 100)

    def test_uneven_division_within_one(self):
        # oracle: exhaustively count the emitted patient ids
        cohort = toy_cohort([2] * 601)
        parts = split_cohort(cohort, (4, 1, 1), seed=3)
        sizes = [len(p) for p in parts]
        assert sum(sizes) == 601
        for size, ratio in zip(sizes, (4, 1, 1)):
            assert abs(size - 601 * ratio / 6) <= 1
        emitted = [r.patient_id for p in parts for r in p.records]
        assert sorted(emitted) == sorted(r.patient_id for r in cohort.records)
        assert len(set(emitted)) == len(emitted)

    def test_deterministic(self):
        cohort = toy_cohort([2] * 50)
        a = split_cohort(cohort, (4, 1, 1), seed=11)
        b = split_cohort(cohort, (4, 1, 1), seed=11)
        for pa, pb in zip(a, b):
            assert [r.patient_id for r in pa.records] == [r.patient_id for r in pb.records]

    def test_too_few_patients(self):
        with pytest.raises(SplitError):
            split_cohort(toy_cohort([2, 2]), (4, 1, 1), seed=0)

    def test_nonpositive_ratio(self):
        with pytest.raises(SplitError):
            split_cohort(toy_cohort([2] * 6), (4, 0, 1), seed=0)

    @given(st.integers(3, 80), st.integers(0, 2**31))
    @settings(max_examples=50, deadline=None)
    def test_partition_property(self, n, seed):
        cohort = toy_cohort([1] * n)
        parts = split_cohort(cohort, (4, 1, 1), seed=seed)
        ids = [frozenset(r.patient_id for r in p.records) for p in parts]
        assert ids[0] | ids[1] | ids[2] == {r.patient_id for r in cohort.records}
        assert not (ids[0] & ids[1] or ids[0] & ids[2] or ids[1] & ids[2])


class TestCohortIO:
    def write_lines(self, tmp_path, lines):
        path = tmp_path / "cohort.jsonl"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def test_load_single_patient(self, tmp_path):
        path = self.write_lines(tmp_path, [json.dumps({
            "patient_id": "a",
            "visits": [{"d": ["icd_1"], "p": [], "m": ["atc_1"]},
                       {"d": ["icd_2"], "p": ["proc_9"], "m": []}],
        })])
        cohort = load_cohort(path)
        assert len(cohort) == 1
        assert len(cohort.records[0].visits) == 2
        assert cohort.vocab_d.codes == ("icd_1", "icd_2")
        assert cohort.vocab_p.codes == ("proc_9",)

    def test_round_trip_byte_identical(self, tmp_path):
        path = self.write_lines(tmp_path, [
            json.dumps({"patient_id": "a",
                        "visits": [{"d": ["x", "b"], "p": [], "m": ["m2", "m1"]}]}),
            json.dumps({"patient_id": "b",
                        "visits": [{"d": ["b"], "p": ["p1"], "m": []},
                                   {"d": ["x"], "p": [], "m": ["m1"]}]}),
        ])
        first, second = tmp_path / "c1.jsonl", tmp_path / "c2.jsonl"
        save_cohort(load_cohort(path), first)
        save_cohort(load_cohort(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_missing_p_defaults_empty(self, tmp_path):
        path = self.write_lines(tmp_path, [
            json.dumps({"patient_id": "a", "visits": [{"d": ["x"]}]})])
        cohort = load_cohort(path)
        assert cohort.records[0].visits[0].procedures == frozenset()

    def test_malformed_line_reports_number(self, tmp_path):
        path = self.write_lines(tmp_path, [
            json.dumps({"patient_id": "a", "visits": [{"d": ["x"]}]}),
            "{not json",
        ])
        with pytest.raises(CohortFormatError, match="line 2"):
            load_cohort(path)

    def test_unknown_field_is_schema_error(self, tmp_path):
        path = self.write_lines(tmp_path, [
            json.dumps({"patient_id": "a", "surprise": 1,
                        "visits": [{"d": ["x"]}]})])
        with pytest.raises(SchemaError, match="surprise"):
            load_cohort(path)

    def test_unknown_visit_field(self, tmp_path):
        path = self.write_lines(tmp_path, [
            json.dumps({"patient_id": "a", "visits": [{"d": ["x"], "labs": []}]})])
        with pytest.raises(SchemaError, match="labs"):
            load_cohort(path)


def test_cohort_validates_indices():
    vocab = CodeVocabulary.from_codes("diagnosis", ["a"])
    vocab_p = CodeVocabulary.from_codes("procedure", [])
    vocab_m = CodeVocabulary.from_codes("medication", ["m"])
    with pytest.raises(EncodingError, match="diagnosis index 5"):
        Cohort((PatientRecord("x", (Visit.of({5}),)),), vocab, vocab_p, vocab_m)
