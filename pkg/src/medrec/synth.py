"""Synthetic cohort generator with planted diagnosis -> medication rules.

The generator exists to give acceptance tests known ground truth:

* every patient carries a chronic diagnosis set that repeats across visits,
  so history is informative;
* planted rules map diagnosis subsets to medication subsets and hold in at
  least (1 - noise) of the visits where they apply;
* each rule optionally has per-patient "variant" medications, stable across
  a patient's visits but not inferable from the diagnoses, so the past
  prescription memory carries signal the diagnosis path cannot recover;
* a configurable fraction of the medication pairs that rules co-prescribe
  is emitted as known interactions, so interaction-aware training has a
  real tradeoff to exercise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .ehr import CodeVocabulary, Cohort, PatientRecord, Visit
from .errors import ConfigError


def _code(prefix, i, width):
    return f"{prefix}{i:0{width}d}"


@dataclass(frozen=True)
class PlantedRule:
    """antecedent diagnoses -> consequent medications (+ optional variants).

    The consequent is prescribed whenever the antecedent is present, except
    in a ``noise`` fraction of visits. Variant alternatives are picked once
    per patient and co-prescribed whenever the rule fires.
    """

    antecedent: tuple
    consequent: tuple
    variants: tuple = ()


@dataclass
class GeneratorConfig:
    n_patients: int = 500
    n_diagnosis: int = 30
    n_procedure: int = 10
    n_medication: int = 40
    mean_diagnoses: float = 6.0
    mean_procedures: float = 2.0
    mean_medications: float = 12.0
    visit_count_weights: dict = field(default_factory=lambda: {2: 0.4, 3: 0.4, 4: 0.2})
    rules: tuple = ()
    noise: float = 0.1
    ddi_overlap: float = 0.3
    n_extra_interactions: int = 20
    chronic_fraction: float = 0.5

    def __post_init__(self):
        if min(self.n_patients, self.n_diagnosis, self.n_procedure, self.n_medication) <= 0:
            raise ConfigError("all sizes must be positive")
        if self.mean_diagnoses > self.n_diagnosis:
            raise ConfigError(f"mean_diagnoses {self.mean_diagnoses} exceeds "
                              f"vocabulary size {self.n_diagnosis}")
        if self.mean_procedures > self.n_procedure:
            raise ConfigError(f"mean_procedures {self.mean_procedures} exceeds "
                              f"vocabulary size {self.n_procedure}")
        if self.mean_medications > self.n_medication:
            raise ConfigError(f"mean_medications {self.mean_medications} exceeds "
                              f"vocabulary size {self.n_medication}")
        if not 0.0 <= self.noise <= 1.0:
            raise ConfigError(f"noise must be in [0, 1], got {self.noise}")
        if not 0.0 <= self.ddi_overlap <= 1.0:
            raise ConfigError(f"ddi_overlap must be in [0, 1], got {self.ddi_overlap}")
        if not self.visit_count_weights or any(w < 0 for w in self.visit_count_weights.values()):
            raise ConfigError("visit_count_weights must be nonempty and nonnegative")
        self.visit_count_weights = {int(k): float(v) for k, v in self.visit_count_weights.items()}
        self.rules = tuple(
            r if isinstance(r, PlantedRule) else
            PlantedRule(tuple(r["if"]), tuple(r["then"]),
                        tuple(tuple(v) for v in r.get("variants", ())))
            for r in self.rules)
        known_d = {self.diagnosis_code(i) for i in range(self.n_diagnosis)}
        known_m = {self.medication_code(i) for i in range(self.n_medication)}
        for rule in self.rules:
            if not set(rule.antecedent) <= known_d:
                raise ConfigError(f"rule antecedent {rule.antecedent} not in vocabulary")
            meds = set(rule.consequent).union(*rule.variants) if rule.variants \
                else set(rule.consequent)
            if not meds <= known_m:
                raise ConfigError(f"rule medications {sorted(meds)} not in vocabulary")

    def diagnosis_code(self, i):
        return _code("D", i, len(str(self.n_diagnosis - 1)))

    def procedure_code(self, i):
        return _code("P", i, len(str(self.n_procedure - 1)))

    def medication_code(self, i):
        return _code("M", i, len(str(self.n_medication - 1)))

    def to_file(self, path):
        payload = asdict(self)
        payload["rules"] = [{"if": list(r.antecedent), "then": list(r.consequent),
                             "variants": [list(v) for v in r.variants]}
                            for r in self.rules]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)

    @classmethod
    def from_file(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        unknown = set(payload) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown generator config key {sorted(unknown)[0]!r}")
        return cls(**payload)


def make_rules(config, n_rules, meds_per_rule=4, n_variants=2, seed=0):
    """Plant ``n_rules`` single-diagnosis rules with per-patient variants."""
    if n_rules > config.n_diagnosis:
        raise ConfigError(f"cannot plant {n_rules} rules over "
                          f"{config.n_diagnosis} diagnoses")
    if meds_per_rule + n_variants > config.n_medication:
        raise ConfigError("rule medication demand exceeds vocabulary")
    rng = np.random.default_rng(seed)
    antecedent_dx = rng.choice(config.n_diagnosis, size=n_rules, replace=False)
    rules = []
    for d in antecedent_dx:
        meds = rng.choice(config.n_medication, size=meds_per_rule + n_variants,
                          replace=False)
        consequent = tuple(config.medication_code(m) for m in meds[:meds_per_rule])
        variants = tuple((config.medication_code(m),) for m in meds[meds_per_rule:])
        rules.append(PlantedRule((config.diagnosis_code(d),), consequent, variants))
    return tuple(rules)


def _sample_distinct(rng, pool, k):
    k = min(k, len(pool))
    if k <= 0:
        return []
    return list(rng.choice(pool, size=k, replace=False))


def generate_synthetic_cohort(config, seed):
    """Sample a cohort; deterministic for a fixed (config, seed)."""
    rng = np.random.default_rng(seed)
    all_dx = [config.diagnosis_code(i) for i in range(config.n_diagnosis)]
    all_proc = [config.procedure_code(i) for i in range(config.n_procedure)]
    all_med = [config.medication_code(i) for i in range(config.n_medication)]

    visit_counts = sorted(config.visit_count_weights)
    weights = np.array([config.visit_count_weights[c] for c in visit_counts], dtype=float)
    weights /= weights.sum()

    n_chronic = max(1, round(config.chronic_fraction * config.mean_diagnoses))
    n_chronic = min(n_chronic, config.n_diagnosis)
    acute_mean = max(0.0, config.mean_diagnoses - n_chronic)

    raw_records = []
    for p in range(config.n_patients):
        n_visits = int(rng.choice(visit_counts, p=weights))
        chronic = set(_sample_distinct(rng, all_dx, n_chronic))
        acute_pool = [d for d in all_dx if d not in chronic]
        variant_choice = {}
        for r, rule in enumerate(config.rules):
            if rule.variants:
                variant_choice[r] = rule.variants[rng.integers(len(rule.variants))]

        visits = []
        for _ in range(n_visits):
            dx = set(chronic)
            dx.update(_sample_distinct(rng, acute_pool, rng.poisson(acute_mean)))
            procs = set(_sample_distinct(rng, all_proc, rng.poisson(config.mean_procedures)))

            meds = set()
            for r, rule in enumerate(config.rules):
                if set(rule.antecedent) <= dx and rng.random() >= config.noise:
                    meds.update(rule.consequent)
                    meds.update(variant_choice.get(r, ()))
            target = rng.poisson(config.mean_medications)
            filler_pool = [m for m in all_med if m not in meds]
            meds.update(_sample_distinct(rng, filler_pool, target - len(meds)))
            visits.append((sorted(dx), sorted(procs), sorted(meds)))
        raw_records.append((f"synthetic-{p:05d}", visits))

    # vocabularies from the observed union, same convention as load_cohort
    seen = {"d": set(), "p": set(), "m": set()}
    for _, visits in raw_records:
        for dx, procs, meds in visits:
            seen["d"].update(dx)
            seen["p"].update(procs)
            seen["m"].update(meds)
    vocab_d = CodeVocabulary.from_codes("diagnosis", seen["d"])
    vocab_p = CodeVocabulary.from_codes("procedure", seen["p"])
    vocab_m = CodeVocabulary.from_codes("medication", seen["m"])

    records = tuple(
        PatientRecord(pid, tuple(
            Visit.of((vocab_d.index(c) for c in dx),
                     (vocab_p.index(c) for c in procs),
                     (vocab_m.index(c) for c in meds))
            for dx, procs, meds in visits))
        for pid, visits in raw_records)
    return Cohort(records, vocab_d, vocab_p, vocab_m)


def rule_pair_codes(config):
    """Unordered medication pairs co-prescribed by construction of the rules."""
    pairs = set()
    for rule in config.rules:
        meds = list(rule.consequent)
        for i in range(len(meds)):
            for j in range(i + 1, len(meds)):
                pairs.add(tuple(sorted((meds[i], meds[j]))))
        for variant in rule.variants:
            for v in variant:
                for c in rule.consequent:
                    pairs.add(tuple(sorted((v, c))))
    return sorted(pairs)


def generate_interaction_pairs(config, seed):
    """Emit (code_a, code_b, report_count) triples for the interaction file.

    Takes ``ddi_overlap`` of the rule-co-prescribed pairs plus
    ``n_extra_interactions`` random unrelated pairs.
    """
    rng = np.random.default_rng(seed)
    rule_pairs = rule_pair_codes(config)
    n_overlap = round(config.ddi_overlap * len(rule_pairs))
    chosen = set()
    if n_overlap and rule_pairs:
        idx = rng.choice(len(rule_pairs), size=min(n_overlap, len(rule_pairs)), replace=False)
        chosen.update(rule_pairs[i] for i in idx)

    all_med = [config.medication_code(i) for i in range(config.n_medication)]
    rule_pair_set = set(rule_pairs)
    extras = 0
    guard = 0
    while extras < config.n_extra_interactions and guard < 50 * config.n_extra_interactions:
        guard += 1
        a, b = rng.choice(len(all_med), size=2, replace=False)
        pair = tuple(sorted((all_med[a], all_med[b])))
        if pair in rule_pair_set or pair in chosen:
            continue
        chosen.add(pair)
        extras += 1
    return [(a, b, int(rng.integers(1, 100))) for a, b in sorted(chosen)]


def write_interaction_file(pairs, path):
    with open(path, "w", encoding="utf-8") as fh:
        for a, b, count in pairs:
            fh.write(f"{a}\t{b}\t{count}\n")


def rule_satisfaction_rate(cohort, config):
    """Fraction of applicable (visit, rule) incidents whose consequent holds."""
    applicable = satisfied = 0
    for rec in cohort.records:
        for visit in rec.visits:
            dx = {cohort.vocab_d.code(i) for i in visit.diagnoses}
            meds = {cohort.vocab_m.code(i) for i in visit.medications}
            for rule in config.rules:
                if set(rule.antecedent) <= dx:
                    applicable += 1
                    if set(rule.consequent) <= meds:
                        satisfied += 1
    return satisfied / applicable if applicable else 1.0


def rule_replay_jaccard(cohort, config):
    """Jaccard of predicting exactly the applicable rules' consequents.

    An oracle that knows the planted rules but not the per-patient variants
    or fillers; learned models are benchmarked against a fraction of this.
    """
    scores = []
    for rec in cohort.records:
        for visit in rec.visits:
            if not visit.medications:
                continue
            dx = {cohort.vocab_d.code(i) for i in visit.diagnoses}
            predicted = set()
            for rule in config.rules:
                if set(rule.antecedent) <= dx:
                    predicted.update(rule.consequent)
            truth = {cohort.vocab_m.code(i) for i in visit.medications}
            union = predicted | truth
            scores.append(len(predicted & truth) / len(union) if union else 1.0)
    return float(np.mean(scores)) if scores else 1.0
