"""Tests for co-occurrence and interaction graph construction."""

import numpy as np
import pytest

from medrec.ehr import CodeVocabulary, Cohort, PatientRecord, Visit
from medrec.errors import DataError, GraphError
from medrec.graphs import (DrugGraph, build_cooccurrence, build_interaction,
                           neighbors, read_graph, write_graph)


def med_cohort(visit_med_sets, n_meds=5):
    vocab_d = CodeVocabulary.from_codes("diagnosis", ["d"])
    vocab_p = CodeVocabulary.from_codes("procedure", [])
    vocab_m = CodeVocabulary.from_codes("medication", [f"m{i}" for i in range(n_meds)])
    records = (PatientRecord("p", tuple(Visit.of({0}, (), meds) for meds in visit_med_sets)),)
    return Cohort(records, vocab_d, vocab_p, vocab_m)


def brute_force_pairs(visit_med_sets, n_meds):
    counts = np.zeros((n_meds, n_meds))
    for meds in visit_med_sets:
        for a in meds:
            for b in meds:
                if a != b:
                    counts[a, b] += 1
    return counts


class TestCooccurrence:
    def test_two_visits(self):
        graph = build_cooccurrence(med_cohort([{0, 1}, {0, 1, 2}]))
        assert graph.weights[0, 1] == 2
        assert graph.weights[0, 2] == 1
        assert graph.weights[1, 2] == 1
        assert np.all(np.diag(graph.weights) == 0)

    def test_singletons_give_zero_matrix(self):
        graph = build_cooccurrence(med_cohort([{0}, {3}, {1}]))
        assert not graph.weights.any()

    def test_matches_brute_force_on_random_cohorts(self):
        rng = np.random.default_rng(17)
        for _ in range(25):
            n_visits = rng.integers(1, 50)
            visit_sets = [set(rng.choice(5, size=rng.integers(0, 5), replace=False))
                          for _ in range(n_visits)]
            graph = build_cooccurrence(med_cohort(visit_sets))
            expected = brute_force_pairs(visit_sets, 5)
            assert np.array_equal(graph.weights, expected)
            assert np.array_equal(graph.weights, graph.weights.T)


def write_pairs(tmp_path, triples, name="pairs.tsv"):
    path = tmp_path / name
    path.write_text("".join(f"{a}\t{b}\t{c}\n" for a, b, c in triples), encoding="utf-8")
    return path


class TestInteraction:
    def vocab(self, n):
        return CodeVocabulary.from_codes("medication", [f"m{i:03d}" for i in range(n)])

    def test_cap_before_symmetrization(self, tmp_path):
        # X has 45 partners with distinct counts; only the 40 largest survive
        vocab = self.vocab(46)
        triples = [("m000", f"m{i:03d}", i) for i in range(1, 46)]
        path = write_pairs(tmp_path, triples)
        graph = build_interaction(path, vocab, cap=40)
        # partners each keep X (their only partner), so row 0 regains all 45
        assert graph.weights[0].sum() == 45
        # the five lowest-count partner edges exist only through symmetrization:
        # X's own retained set is the 40 largest
        from medrec.graphs import _top_partners
        kept = _top_partners({f"m{i:03d}": i for i in range(1, 46)}, 40)
        assert sorted(kept) == [f"m{i:03d}" for i in range(6, 46)]

    def test_single_listing_symmetric(self, tmp_path):
        vocab = self.vocab(3)
        graph = build_interaction(write_pairs(tmp_path, [("m000", "m001", 7)]), vocab)
        assert graph.weights[0, 1] == 1
        assert graph.weights[1, 0] == 1
        assert graph.weights.sum() == 2

    def test_equal_counts_keep_code_order(self, tmp_path):
        vocab = self.vocab(10)
        triples = [("m000", f"m{i:03d}", 5) for i in range(1, 10)]
        graph = build_interaction(write_pairs(tmp_path, triples), vocab, cap=4)
        from medrec.graphs import _top_partners
        kept = _top_partners({f"m{i:03d}": 5 for i in range(1, 10)}, 4)
        assert kept == ["m001", "m002", "m003", "m004"]
        assert graph.weights[0].sum() >= 4

    def test_unknown_codes_skipped_with_warning(self, tmp_path, caplog):
        vocab = self.vocab(2)
        path = write_pairs(tmp_path, [("m000", "m001", 3), ("zzz", "m000", 9)])
        with caplog.at_level("WARNING"):
            graph = build_interaction(path, vocab)
        assert "skipped 1" in caplog.text
        assert graph.weights[0, 1] == 1

    def test_negative_count_rejected(self, tmp_path):
        path = write_pairs(tmp_path, [("m000", "m001", -2)])
        with pytest.raises(DataError, match="negative"):
            build_interaction(path, self.vocab(2))

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(DataError, match="cannot read"):
            build_interaction(tmp_path / "missing.tsv", self.vocab(2))

    def test_binary_symmetric_zero_diagonal(self, tmp_path):
        vocab = self.vocab(6)
        rng = np.random.default_rng(3)
        triples = [(f"m{a:03d}", f"m{b:03d}", int(rng.integers(1, 50)))
                   for a in range(6) for b in range(6) if a != b and rng.random() < 0.5]
        graph = build_interaction(write_pairs(tmp_path, triples), vocab, cap=3)
        w = graph.weights
        assert set(np.unique(w)) <= {0.0, 1.0}
        assert np.array_equal(w, w.T)
        assert np.all(np.diag(w) == 0)


class TestNeighbors:
    def graph(self, weights):
        w = np.array(weights, dtype=float)
        return DrugGraph(w.shape[0], w, "cooccurrence")

    def test_basic_row(self):
        g = self.graph([[0, 2, 0, 5], [2, 0, 0, 0], [0, 0, 0, 0], [5, 0, 0, 0]])
        assert neighbors(g, 0) == [1, 3]

    def test_isolated(self):
        g = self.graph([[0, 0], [0, 0]])
        assert neighbors(g, 1) == []

    def test_fully_connected(self):
        w = np.ones((4, 4)) - np.eye(4)
        assert neighbors(DrugGraph(4, w, "interaction"), 2) == [0, 1, 3]

    def test_out_of_range(self):
        with pytest.raises(GraphError):
            neighbors(self.graph([[0]]), 5)


def test_graph_export_round_trip(tmp_path):
    w = np.zeros((4, 4))
    w[0, 1] = w[1, 0] = 3.0
    w[2, 3] = w[3, 2] = 1.5
    graph = DrugGraph(4, w, "cooccurrence")
    path = tmp_path / "graph.txt"
    write_graph(graph, path)
    loaded = read_graph(path)
    assert loaded.kind == graph.kind
    assert np.array_equal(loaded.weights, graph.weights)
