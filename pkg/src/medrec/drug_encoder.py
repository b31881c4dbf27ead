"""Stage 2: graph attention over the drug graphs, query read, prediction.

Two two-layer graph attention networks (two heads then one) turn the
co-occurrence and interaction adjacency structure into per-drug
representations Z_C and Z_D. The query vector attends over the combined
representation (lambda), and the read vector joins the query in the final
sigmoid projection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .errors import GraphError, ShapeError
from .nnet import uniform_init

LEAKY_SLOPE = 0.2


@dataclass
class GatHead:
    w: Parameter  # (out_dim, in_dim)
    a: Parameter  # (2 * out_dim,) attention vector, [left || right] halves

    @property
    def out_dim(self):
        return self.w.shape[0]


@dataclass
class GatLayer:
    heads: list

    @classmethod
    def create(cls, in_dim, out_dim, n_heads, rng, name):
        bound = 1.0 / np.sqrt(in_dim)
        heads = [GatHead(Parameter(uniform_init(rng, (out_dim, in_dim), bound),
                                   f"{name}.head{b}.w"),
                         Parameter(uniform_init(rng, (2 * out_dim,), bound),
                                   f"{name}.head{b}.a"))
                 for b in range(n_heads)]
        return cls(heads)

    def parameters(self):
        return [p for head in self.heads for p in (head.w, head.a)]


@dataclass
class GatNetwork:
    """Two layers: (2 heads, concat) then (1 head)."""

    layer1: GatLayer
    layer2: GatLayer

    @classmethod
    def create(cls, n_nodes, dim, rng, name):
        return cls(GatLayer.create(n_nodes, dim, 2, rng, f"{name}.layer1"),
                   GatLayer.create(2 * dim, dim, 1, rng, f"{name}.layer2"))

    def parameters(self):
        return self.layer1.parameters() + self.layer2.parameters()


def neighbor_mask(graph):
    """Boolean adjacency plus self-loops, so no neighborhood is empty."""
    mask = graph.weights > 0
    return mask | np.eye(graph.dims, dtype=bool)


def head_attention(head, features, mask):
    """Attention coefficients delta[j, k] of one head over admissible edges."""
    if not mask.any(axis=1).all():
        raise GraphError("node with an empty neighborhood; self-loops missing")
    p = ad.matmul(head.w, features)  # (out_dim, N) projected nodes
    half = head.out_dim
    left = ad.matmul(head.a[:half], p)
    right = ad.matmul(head.a[half:], p)
    logits = ad.leaky_relu(ad.outer_add(left, right), LEAKY_SLOPE)
    return ad.masked_softmax(logits, mask), p


def head_forward(head, features, mask, activation=ad.tanh):
    delta, p = head_attention(head, features, mask)
    # column j of p @ delta^T is sum_k delta[j,k] * (W n_k)
    return activation(ad.matmul(p, ad.transpose(delta))), delta


def gat_layer_forward(layer, features, mask, activation=ad.tanh):
    outputs, deltas = [], []
    for head in layer.heads:
        out, delta = head_forward(head, features, mask, activation)
        outputs.append(out)
        deltas.append(delta)
    merged = outputs[0] if len(outputs) == 1 else ad.concat(outputs, axis=0)
    return merged, deltas


def gat_forward(network, graph, activation=ad.tanh):
    """Identity node features -> (dim x N) drug representations.

    Returns (Z, deltas) where deltas holds every head's attention matrix for
    normalization checks and diagnostics. Runs once per parameter update and
    is shared across all visits.
    """
    mask = neighbor_mask(graph)
    identity = Tensor(np.eye(graph.dims))
    hidden, deltas1 = gat_layer_forward(network.layer1, identity, mask, activation)
    z, deltas2 = gat_layer_forward(network.layer2, hidden, mask, activation)
    return z, deltas1 + deltas2


def drug_memory_read(z_c, z_d, q_t, w3):
    """lambda = softmax((Z_C + w3 Z_D)^T q); read = (Z_C + w3 Z_D) lambda.

    Either representation may be None (ablation); both None means no read.
    """
    if z_c is not None and z_d is not None:
        m = ad.add(z_c, ad.mul(w3, z_d))
    elif z_c is not None:
        m = z_c
    elif z_d is not None:
        m = ad.mul(w3, z_d)
    else:
        return None, None
    scores = ad.matmul(q_t, m)  # (dim,) @ (dim, N) -> (N,)
    lam = ad.softmax(scores)
    return lam, ad.matmul(m, lam)


def predict(q_t, read, w4, e_f, bias, threshold=0.5):
    """o = q + w4*read; probabilities = sigmoid(E_F o + bias); strict cut."""
    if e_f.shape[1] != q_t.shape[0]:
        raise ShapeError(f"projection {e_f.shape} incompatible with query {q_t.shape}")
    o_t = q_t if read is None else ad.add(q_t, ad.mul(w4, read))
    logits = ad.add(ad.matmul(e_f, o_t), bias)
    y_hat = ad.sigmoid(logits)
    predicted = frozenset(int(k) for k in np.flatnonzero(y_hat.data > threshold))
    return o_t, logits, y_hat, predicted
