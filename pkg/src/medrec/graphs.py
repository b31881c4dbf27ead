"""Drug graphs: co-occurrence counts from a cohort, capped binary interactions.

Both graphs are symmetric with a zero diagonal. The interaction graph keeps,
for every drug, its ``cap`` highest-report-count partners (ties broken by
code order), then symmetrizes and binarizes; the co-occurrence graph keeps
raw visit counts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DataError, EncodingError, GraphError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DrugGraph:
    dims: int
    weights: np.ndarray  # dims x dims, nonnegative, symmetric, zero diagonal
    kind: str  # "cooccurrence" | "interaction"

    def __post_init__(self):
        if self.weights.shape != (self.dims, self.dims):
            raise GraphError(f"weights shape {self.weights.shape} != ({self.dims}, {self.dims})")


def build_cooccurrence(train_cohort):
    """Count, per drug pair, the visits that prescribe both drugs together."""
    n = train_cohort.vocab_m.size
    weights = np.zeros((n, n))
    for rec in train_cohort.records:
        for visit in rec.visits:
            meds = sorted(visit.medications)
            for i, a in enumerate(meds):
                for b in meds[i + 1:]:
                    weights[a, b] += 1
                    weights[b, a] += 1
    return DrugGraph(n, weights, "cooccurrence")


def _top_partners(partner_counts, cap):
    """Keep the ``cap`` highest-count partners; ties resolved by code order."""
    ranked = sorted(partner_counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [code for code, _ in ranked[:cap]]


def read_interaction_pairs(pairs_file):
    """Parse the tab-separated ``codeA<TAB>codeB<TAB>count`` file."""
    pairs = []
    try:
        fh = open(pairs_file, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read interaction file {pairs_file}: {exc}") from None
    with fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{pairs_file}:{line_no}: expected 3 tab-separated fields")
            a, b, raw_count = parts
            try:
                count = int(raw_count)
            except ValueError:
                raise DataError(f"{pairs_file}:{line_no}: bad count {raw_count!r}") from None
            if count < 0:
                raise DataError(f"{pairs_file}:{line_no}: negative report count {count}")
            pairs.append((a, b, count))
    return pairs


def build_interaction(pairs_file, vocab_m, cap=40):
    """Binary interaction graph from a pair-count file, capped per drug."""
    pairs = read_interaction_pairs(pairs_file)
    n = vocab_m.size
    counts = {}  # drug index -> {partner index: summed report count}
    skipped = 0
    for a, b, count in pairs:
        try:
            ia, ib = vocab_m.index(a), vocab_m.index(b)
        except EncodingError:
            skipped += 1
            continue
        if ia == ib:
            continue
        counts.setdefault(ia, {})[ib] = counts.setdefault(ia, {}).get(ib, 0) + count
        counts.setdefault(ib, {})[ia] = counts.setdefault(ib, {}).get(ia, 0) + count
    if skipped:
        log.warning("interaction file %s: skipped %d pairs with codes outside "
                    "the medication vocabulary", pairs_file, skipped)

    kept = np.zeros((n, n))
    for j, partners in counts.items():
        # rank by count with ties in code order
        by_code = {vocab_m.code(k): c for k, c in partners.items()}
        for code in _top_partners(by_code, cap):
            kept[j, vocab_m.index(code)] = 1.0
    weights = ((kept + kept.T) > 0).astype(float)
    np.fill_diagonal(weights, 0.0)
    return DrugGraph(n, weights, "interaction")


def neighbors(graph, j):
    """Sorted indices with a nonzero edge to ``j``."""
    if not 0 <= j < graph.dims:
        raise GraphError(f"node {j} out of range for graph of size {graph.dims}")
    return sorted(int(k) for k in np.flatnonzero(graph.weights[j]))


def write_graph(graph, path):
    """Coordinate-list export: one ``j k weight`` line per upper-triangle edge."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# kind={graph.kind} dims={graph.dims}\n")
        rows, cols = np.nonzero(graph.weights)
        for j, k in zip(rows, cols):
            if j < k:
                w = graph.weights[j, k]
                fh.write(f"{j} {k} {w:g}\n")


def read_graph(path):
    """Load a coordinate-list export back into a DrugGraph."""
    kind, dims, edges = None, None, []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                meta = dict(part.split("=") for part in line[1:].split())
                kind, dims = meta["kind"], int(meta["dims"])
                continue
            j, k, w = line.split()
            edges.append((int(j), int(k), float(w)))
    if kind is None:
        raise DataError(f"{path}: missing graph header")
    weights = np.zeros((dims, dims))
    for j, k, w in edges:
        weights[j, k] = weights[k, j] = w
    return DrugGraph(dims, weights, kind)
