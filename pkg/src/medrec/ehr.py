"""Patient-record data model: vocabularies, visits, cohorts, file IO.

A cohort file is UTF-8 JSON lines, one patient per line:

    {"patient_id": "...", "visits": [{"d": [...], "p": [...], "m": [...]}, ...]}

Vocabularies are always derived from the union of codes observed in the
data, in sorted order, so the index map is deterministic and explicit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CohortFormatError, EncodingError, SchemaError, SplitError

VISIT_FIELDS = ("d", "p", "m")


@dataclass(frozen=True)
class CodeVocabulary:
    """Ordered, unique code list with a bijective code<->index map."""

    kind: str
    codes: tuple[str, ...]
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        index = {code: i for i, code in enumerate(self.codes)}
        if len(index) != len(self.codes):
            raise SchemaError(f"{self.kind} vocabulary has duplicate codes")
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_codes(cls, kind, codes):
        return cls(kind, tuple(sorted(set(codes))))

    @property
    def size(self):
        return len(self.codes)

    def index(self, code):
        try:
            return self._index[code]
        except KeyError:
            raise EncodingError(f"unknown {self.kind} code {code!r}") from None

    def code(self, i):
        return self.codes[i]


@dataclass(frozen=True)
class Visit:
    """One visit's code sets, stored as vocabulary indices."""

    diagnoses: frozenset
    procedures: frozenset = frozenset()
    medications: frozenset = frozenset()

    @classmethod
    def of(cls, diagnoses, procedures=(), medications=()):
        return cls(frozenset(diagnoses), frozenset(procedures), frozenset(medications))


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    visits: tuple  # chronological, length >= 1

    def __post_init__(self):
        if len(self.visits) < 1:
            raise SchemaError(f"patient {self.patient_id!r} has no visits")


@dataclass(frozen=True)
class Cohort:
    records: tuple
    vocab_d: CodeVocabulary
    vocab_p: CodeVocabulary
    vocab_m: CodeVocabulary

    def __post_init__(self):
        sizes = (self.vocab_d.size, self.vocab_p.size, self.vocab_m.size)
        for rec in self.records:
            for visit in rec.visits:
                for idxs, dim, kind in zip(
                        (visit.diagnoses, visit.procedures, visit.medications),
                        sizes, ("diagnosis", "procedure", "medication")):
                    for i in idxs:
                        if not 0 <= i < dim:
                            raise EncodingError(
                                f"patient {rec.patient_id!r}: {kind} index {i} "
                                f"out of range for vocabulary of size {dim}")

    def __len__(self):
        return len(self.records)


@dataclass(frozen=True)
class MultiHotVector:
    dims: int
    active: tuple  # sorted indices

    def dense(self):
        v = np.zeros(self.dims)
        if self.active:
            v[list(self.active)] = 1.0
        return v


def encode_multi_hot(codes, dims):
    """Index set -> MultiHotVector over a vocabulary of size ``dims``."""
    active = sorted(set(codes))
    for i in active:
        if not 0 <= i < dims:
            raise EncodingError(f"index {i} out of range for size {dims}")
    return MultiHotVector(dims, tuple(active))


def filter_min_visits(cohort, min_visits):
    """Drop records with fewer than ``min_visits`` visits; vocabularies kept."""
    if min_visits < 1:
        raise SplitError(f"min_visits must be >= 1, got {min_visits}")
    kept = tuple(r for r in cohort.records if len(r.visits) >= min_visits)
    return Cohort(kept, cohort.vocab_d, cohort.vocab_p, cohort.vocab_m)


def split_cohort(cohort, ratios=(4, 1, 1), seed=0):
    """Patient-level partition with sizes proportional to ``ratios``.

    Deterministic for a fixed seed; largest-remainder rounding keeps every
    part within one patient of its exact share.
    """
    if any(r <= 0 for r in ratios):
        raise SplitError(f"ratios must be positive, got {ratios}")
    n = len(cohort.records)
    if n < len(ratios):
        raise SplitError(f"cannot split {n} patients into {len(ratios)} parts")
    total = sum(ratios)
    exact = [n * r / total for r in ratios]
    counts = [math.floor(e) for e in exact]
    remainder = n - sum(counts)
    by_frac = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in by_frac[:remainder]:
        counts[i] += 1

    order = np.random.default_rng(seed).permutation(n)
    parts, start = [], 0
    for c in counts:
        part = tuple(cohort.records[i] for i in sorted(order[start:start + c]))
        parts.append(Cohort(part, cohort.vocab_d, cohort.vocab_p, cohort.vocab_m))
        start += c
    return tuple(parts)


# -- file io ---------------------------------------------------------------


def _parse_record(obj, line_no):
    if not isinstance(obj, dict):
        raise CohortFormatError(f"line {line_no}: record must be an object")
    unknown = set(obj) - {"patient_id", "visits"}
    if unknown:
        raise SchemaError(f"line {line_no}: unknown field {sorted(unknown)[0]!r}")
    try:
        patient_id = obj["patient_id"]
        visits = obj["visits"]
    except KeyError as exc:
        raise CohortFormatError(f"line {line_no}: missing field {exc.args[0]!r}") from None
    if not isinstance(patient_id, str) or not isinstance(visits, list) or not visits:
        raise CohortFormatError(f"line {line_no}: bad patient_id or empty visits")
    parsed = []
    for v in visits:
        if not isinstance(v, dict):
            raise CohortFormatError(f"line {line_no}: visit must be an object")
        unknown = set(v) - set(VISIT_FIELDS)
        if unknown:
            raise SchemaError(f"line {line_no}: unknown visit field {sorted(unknown)[0]!r}")
        if "d" not in v:
            raise CohortFormatError(f"line {line_no}: visit missing 'd'")
        parsed.append({f: list(map(str, v.get(f, []))) for f in VISIT_FIELDS})
    return patient_id, parsed


def load_cohort(path):
    """Read a JSONL cohort file; vocabularies come from the observed codes."""
    raw = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CohortFormatError(f"line {line_no}: {exc.msg}") from None
            raw.append(_parse_record(obj, line_no))

    codes = {"d": set(), "p": set(), "m": set()}
    for _, visits in raw:
        for v in visits:
            for f in VISIT_FIELDS:
                codes[f].update(v[f])
    vocab_d = CodeVocabulary.from_codes("diagnosis", codes["d"])
    vocab_p = CodeVocabulary.from_codes("procedure", codes["p"])
    vocab_m = CodeVocabulary.from_codes("medication", codes["m"])

    records = []
    for patient_id, visits in raw:
        parsed = tuple(
            Visit.of((vocab_d.index(c) for c in v["d"]),
                     (vocab_p.index(c) for c in v["p"]),
                     (vocab_m.index(c) for c in v["m"]))
            for v in visits)
        records.append(PatientRecord(patient_id, parsed))
    return Cohort(tuple(records), vocab_d, vocab_p, vocab_m)


def save_cohort(cohort, path):
    """Write the canonical JSONL form (sorted code lists, fixed key order)."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in cohort.records:
            visits = [{
                "d": sorted(cohort.vocab_d.code(i) for i in v.diagnoses),
                "p": sorted(cohort.vocab_p.code(i) for i in v.procedures),
                "m": sorted(cohort.vocab_m.code(i) for i in v.medications),
            } for v in rec.visits]
            fh.write(json.dumps({"patient_id": rec.patient_id, "visits": visits},
                                sort_keys=True) + "\n")
