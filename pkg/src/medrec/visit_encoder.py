"""Stage 1: two-level attention over the visit sequence -> query vector.

Each code family (diagnosis, procedure) gets its own attention branch: one
GRU scores whole visits (softmax -> alpha), a second GRU scores the 64
embedding dimensions within each visit (tanh of a linear map -> beta). The
response vectors combine into a context vector, which both queries the
memory of past prescriptions and anchors the final query vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .errors import ShapeError
from .nnet import GruCell, uniform_init


@dataclass
class EmbeddingTables:
    """Linear code embeddings, one (dim x vocab) table per code family."""

    e_d: Parameter
    e_p: Parameter
    e_m: Parameter

    @classmethod
    def create(cls, n_diagnosis, n_procedure, n_medication, dim, rng):
        bound = 1.0 / np.sqrt(dim)
        return cls(
            Parameter(uniform_init(rng, (dim, n_diagnosis), bound), "embed.diagnosis"),
            Parameter(uniform_init(rng, (dim, n_procedure), bound), "embed.procedure"),
            Parameter(uniform_init(rng, (dim, n_medication), bound), "embed.medication"),
        )

    def parameters(self):
        return [self.e_d, self.e_p, self.e_m]


@dataclass
class AttentionBranch:
    """Visit-level (GRU + phi) and dimension-level (GRU + psi) attention."""

    gru_alpha: GruCell
    phi: Parameter  # (dim,)
    gru_beta: GruCell
    psi: Parameter  # (dim, dim); no bias: both maps are plain linear

    @classmethod
    def create(cls, dim, rng, name):
        bound = 1.0 / np.sqrt(dim)
        return cls(
            GruCell(dim, dim, rng, f"{name}.gru_alpha"),
            Parameter(uniform_init(rng, (dim,), bound), f"{name}.phi"),
            GruCell(dim, dim, rng, f"{name}.gru_beta"),
            Parameter(uniform_init(rng, (dim, dim), bound), f"{name}.psi"),
        )

    def parameters(self):
        return (self.gru_alpha.parameters() + [self.phi]
                + self.gru_beta.parameters() + [self.psi])


def embed_visit(tables, visit):
    """Multi-hot code sets -> summed embedding columns (empty set -> zeros)."""
    return (ad.embedding_sum(tables.e_d, sorted(visit.diagnoses)),
            ad.embedding_sum(tables.e_p, sorted(visit.procedures)),
            ad.embedding_sum(tables.e_m, sorted(visit.medications)))


def attention_scores(branch, embedded):
    """Per-visit alpha logits and beta vectors for the full sequence.

    GRUs are causal, so prefix attention at visit i only needs the first i
    entries of these lists; callers slice instead of re-running the RNNs.
    """
    if not embedded:
        raise ShapeError("attention over an empty visit sequence")
    g_hiddens = []
    h_hiddens = []
    g = Tensor(np.zeros(branch.gru_alpha.hidden_size))
    h = Tensor(np.zeros(branch.gru_beta.hidden_size))
    for e in embedded:
        g = branch.gru_alpha.step(e, g)
        h = branch.gru_beta.step(e, h)
        g_hiddens.append(g)
        h_hiddens.append(h)
    scores = [ad.dot(branch.phi, g_i) for g_i in g_hiddens]
    betas = [ad.tanh(ad.matmul(branch.psi, h_j)) for h_j in h_hiddens]
    return scores, betas


def two_level_attention(branch, embedded):
    """alpha over visits (softmax) and per-visit beta vectors (tanh)."""
    scores, betas = attention_scores(branch, embedded)
    alpha = ad.softmax(ad.stack(scores))
    return alpha, betas


def response_vector(alpha, betas, embedded):
    """r = sum_i alpha[i] * (beta[i] (*) e_i)."""
    if not (alpha.shape[0] == len(betas) == len(embedded)):
        raise ShapeError(f"response_vector: lengths alpha={alpha.shape[0]} "
                         f"beta={len(betas)} embeds={len(embedded)} differ")
    weighted = ad.mul(ad.stack(betas), ad.stack(embedded))
    return ad.matmul(alpha, weighted)


def context_vector(r_d, r_p, w1):
    """c = r_d + w1 * r_p; an all-zero r_p covers missing procedures."""
    return ad.add(r_d, ad.mul(w1, r_p))


class VisitMemory:
    """Append-only key-value store: context vector -> embedded medications."""

    def __init__(self):
        self.keys = []
        self.values = []

    def __len__(self):
        return len(self.keys)

    def append(self, key, value):
        self.keys.append(key)
        self.values.append(value)


def memory_attention(memory, c_t):
    """Dot-product read over past visits; empty history reads zeros."""
    if len(memory) == 0:
        return None, Tensor(np.zeros(c_t.shape[0]))
    scores = [ad.dot(key, c_t) for key in memory.keys]
    gamma = ad.softmax(ad.stack(scores))
    v = ad.matmul(gamma, ad.stack(memory.values))
    return gamma, v


def query_vector(c_t, v_t, w2):
    """q = c + w2 * v."""
    return ad.add(c_t, ad.mul(w2, v_t))
