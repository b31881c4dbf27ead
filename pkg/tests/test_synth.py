"""Tests for the synthetic cohort generator."""

import numpy as np
import pytest

from medrec.errors import ConfigError
from medrec.synth import (GeneratorConfig, PlantedRule, generate_interaction_pairs,
                          generate_synthetic_cohort, make_rules, rule_pair_codes,
                          rule_satisfaction_rate)


def small_config(**overrides):
    base = dict(n_patients=60, n_diagnosis=20, n_procedure=6, n_medication=24,
                mean_diagnoses=5.0, mean_procedures=2.0, mean_medications=9.0,
                noise=0.1, ddi_overlap=0.5, n_extra_interactions=5)
    base.update(overrides)
    config = GeneratorConfig(**base)
    config.rules = make_rules(config, n_rules=6, meds_per_rule=3, n_variants=2, seed=1)
    return config


class TestCalibration:
    def test_mean_diagnoses_tracks_target(self):
        # target taken from the reference inpatient dataset profile
        config = GeneratorConfig(n_patients=250, n_diagnosis=60, n_procedure=20,
                                 n_medication=50, mean_diagnoses=13.63,
                                 mean_procedures=4.53, mean_medications=19.85,
                                 noise=0.1)
        cohort = generate_synthetic_cohort(config, seed=5)
        counts = [len(v.diagnoses) for r in cohort.records for v in r.visits]
        assert 13.63 * 0.85 <= np.mean(counts) <= 13.63 * 1.15

    def test_procedure_and_medication_means(self):
        config = small_config(n_patients=250)
        cohort = generate_synthetic_cohort(config, seed=6)
        procs = [len(v.procedures) for r in cohort.records for v in r.visits]
        meds = [len(v.medications) for r in cohort.records for v in r.visits]
        assert abs(np.mean(procs) - config.mean_procedures) <= 0.15 * config.mean_procedures
        assert abs(np.mean(meds) - config.mean_medications) <= 0.15 * config.mean_medications


class TestRules:
    def test_zero_noise_satisfies_every_applicable_visit(self):
        config = small_config(noise=0.0)
        cohort = generate_synthetic_cohort(config, seed=2)
        assert rule_satisfaction_rate(cohort, config) == 1.0

    def test_noisy_rate_near_target(self):
        config = small_config(noise=0.25, n_patients=300)
        cohort = generate_synthetic_cohort(config, seed=3)
        rate = rule_satisfaction_rate(cohort, config)
        assert rate >= 0.75
        assert rate < 0.97  # noise visibly lowers it

    def test_chronic_codes_repeat_across_visits(self):
        cohort = generate_synthetic_cohort(small_config(), seed=4)
        overlaps = []
        for rec in cohort.records:
            if len(rec.visits) < 2:
                continue
            a, b = rec.visits[0].diagnoses, rec.visits[1].diagnoses
            overlaps.append(len(a & b) / max(1, min(len(a), len(b))))
        assert np.mean(overlaps) > 0.4


class TestDeterminism:
    def test_same_seed_same_cohort(self):
        config = small_config()
        a = generate_synthetic_cohort(config, seed=42)
        b = generate_synthetic_cohort(config, seed=42)
        assert a == b

    def test_different_seed_differs(self):
        config = small_config()
        assert generate_synthetic_cohort(config, 1) != generate_synthetic_cohort(config, 2)

    def test_interaction_pairs_deterministic(self):
        config = small_config()
        assert generate_interaction_pairs(config, 9) == generate_interaction_pairs(config, 9)


class TestInteractions:
    def test_overlap_fraction_of_rule_pairs(self):
        config = small_config(ddi_overlap=0.5, n_extra_interactions=0)
        pairs = generate_interaction_pairs(config, seed=7)
        rule_pairs = set(rule_pair_codes(config))
        emitted = {(a, b) for a, b, _ in pairs}
        assert emitted <= rule_pairs
        assert len(emitted) == round(0.5 * len(rule_pairs))

    def test_extra_pairs_do_not_touch_rule_pairs(self):
        config = small_config(ddi_overlap=0.0, n_extra_interactions=8)
        pairs = generate_interaction_pairs(config, seed=8)
        rule_pairs = set(rule_pair_codes(config))
        assert len(pairs) == 8
        assert all((a, b) not in rule_pairs for a, b, _ in pairs)

    def test_counts_positive(self):
        pairs = generate_interaction_pairs(small_config(), seed=10)
        assert all(c >= 1 for _, _, c in pairs)


class TestConfigValidation:
    def test_infeasible_mean_rejected(self):
        with pytest.raises(ConfigError):
            GeneratorConfig(n_diagnosis=5, mean_diagnoses=9.0)

    def test_bad_noise_rejected(self):
        with pytest.raises(ConfigError):
            GeneratorConfig(noise=1.5)

    def test_rule_outside_vocabulary_rejected(self):
        with pytest.raises(ConfigError):
            GeneratorConfig(n_diagnosis=4, n_medication=4, mean_diagnoses=2,
                            mean_procedures=1, mean_medications=2,
                            rules=(PlantedRule(("D9",), ("M0",)),))

    def test_round_trip_via_file(self, tmp_path):
        config = small_config()
        path = tmp_path / "gen.json"
        config.to_file(path)
        loaded = GeneratorConfig.from_file(path)
        assert loaded == config

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "gen.json"
        path.write_text('{"n_patients": 5, "wat": 1}', encoding="utf-8")
        with pytest.raises(ConfigError, match="wat"):
            GeneratorConfig.from_file(path)
