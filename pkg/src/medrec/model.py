"""The composed recommender: parameters, per-patient forward pass, bundles.

A forward pass over one patient produces a per-visit cache (attention
weights, query, logits, probabilities, predicted set) that downstream
modules reuse: the training losses read the probability tensors, the
justification module reads the cached attention weights, and the service
serializes the predicted sets.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import drug_encoder, visit_encoder
from .autodiff import Parameter, Tensor
from .ehr import CodeVocabulary
from .errors import ConfigError, DataError
from .graphs import DrugGraph, read_graph, write_graph
from .nnet import load_checkpoint, save_checkpoint

BUNDLE_VERSION = 1
PARAMS_FILE = "params.ckpt"
META_FILE = "meta.json"
COOCCURRENCE_FILE = "cooccurrence.graph"
INTERACTION_FILE = "interaction.graph"


@dataclass
class ModelConfig:
    embed_size: int = 64
    threshold: float = 0.5
    dropout: float = 0.4
    use_med_memory: bool = True
    use_cooccurrence: bool = True
    use_interaction: bool = True
    memory_mode: str = "recorded"  # "recorded" | "predicted"
    seed: int = 0

    def __post_init__(self):
        if self.embed_size <= 0:
            raise ConfigError(f"embed_size must be positive, got {self.embed_size}")
        if self.memory_mode not in ("recorded", "predicted"):
            raise ConfigError(f"unknown memory mode {self.memory_mode!r}")

    @property
    def uses_graphs(self):
        return self.use_cooccurrence or self.use_interaction


@dataclass
class VisitForward:
    """Cached quantities for the prediction at one visit."""

    index: int
    alpha_d: Tensor
    betas_d: list
    alpha_p: Tensor
    betas_p: list
    gamma: Tensor | None
    lam: Tensor | None
    context: Tensor
    history: Tensor
    query: Tensor
    logits: Tensor
    y_hat: Tensor
    predicted: frozenset

    @property
    def probabilities(self):
        return self.y_hat.data


@dataclass
class PatientForward:
    visits: list
    z_c: Tensor | None
    z_d: Tensor | None
    gat_deltas: list = field(default_factory=list)


class Model:
    """All trainable state plus the drug graphs it was built against."""

    def __init__(self, vocab_d, vocab_p, vocab_m, graph_c, graph_d, config=None):
        self.config = config or ModelConfig()
        self.vocab_d, self.vocab_p, self.vocab_m = vocab_d, vocab_p, vocab_m
        self.graph_c, self.graph_d = graph_c, graph_d
        dim = self.config.embed_size
        n_m = vocab_m.size
        rng = np.random.default_rng(self.config.seed)

        self.tables = visit_encoder.EmbeddingTables.create(
            vocab_d.size, vocab_p.size, n_m, dim, rng)
        self.branch_d = visit_encoder.AttentionBranch.create(dim, rng, "attn.diagnosis")
        self.branch_p = visit_encoder.AttentionBranch.create(dim, rng, "attn.procedure")
        self.gat_c = drug_encoder.GatNetwork.create(n_m, dim, rng, "gat.cooccurrence")
        self.gat_d = drug_encoder.GatNetwork.create(n_m, dim, rng, "gat.interaction")
        self.w1 = Parameter(np.array(1.0), "scalar.w1")
        self.w2 = Parameter(np.array(1.0), "scalar.w2")
        self.w3 = Parameter(np.array(1.0), "scalar.w3")
        self.w4 = Parameter(np.array(1.0), "scalar.w4")
        bound = 1.0 / np.sqrt(dim)
        from .nnet import uniform_init
        self.e_f = Parameter(uniform_init(rng, (n_m, dim), bound), "project.weight")
        self.bias_f = Parameter(np.zeros(n_m), "project.bias")

    def parameters(self):
        params = (self.tables.parameters()
                  + self.branch_d.parameters() + self.branch_p.parameters()
                  + self.gat_c.parameters() + self.gat_d.parameters()
                  + [self.w1, self.w2, self.w3, self.w4, self.e_f, self.bias_f])
        return params

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    # -- forward ---------------------------------------------------------

    def encode_drugs(self):
        """Run both GATs once; returns (z_c, z_d, attention matrices)."""
        z_c = z_d = None
        deltas = []
        if self.config.use_cooccurrence:
            z_c, d1 = drug_encoder.gat_forward(self.gat_c, self.graph_c)
            deltas.extend(d1)
        if self.config.use_interaction:
            z_d, d2 = drug_encoder.gat_forward(self.gat_d, self.graph_d)
            deltas.extend(d2)
        return z_c, z_d, deltas

    def forward_patient(self, visits, memory_mode=None, training=False,
                        dropout_rng=None, threshold=None):
        """Predict at every visit of one patient, oldest first.

        ``memory_mode`` picks what fills the prescription memory: the visits'
        recorded medication sets or the model's own earlier predictions.
        """
        if not visits:
            raise DataError("forward_patient: no visits")
        mode = memory_mode or self.config.memory_mode
        cut = self.config.threshold if threshold is None else threshold
        cfg = self.config

        z_c, z_d, gat_deltas = self.encode_drugs()

        def maybe_drop(t):
            if training and cfg.dropout > 0:
                return ad.dropout(t, cfg.dropout, training=True, rng=dropout_rng)
            return t

        d_embeds, p_embeds, m_embeds = [], [], []
        for visit in visits:
            d_e, p_e, m_e = visit_encoder.embed_visit(self.tables, visit)
            d_embeds.append(maybe_drop(d_e))
            p_embeds.append(maybe_drop(p_e))
            m_embeds.append(maybe_drop(m_e) if mode == "recorded" else None)

        scores_d, betas_d = visit_encoder.attention_scores(self.branch_d, d_embeds)
        scores_p, betas_p = visit_encoder.attention_scores(self.branch_p, p_embeds)

        memory = visit_encoder.VisitMemory()
        outputs = []
        for i in range(len(visits)):
            alpha_d = ad.softmax(ad.stack(scores_d[:i + 1]))
            alpha_p = ad.softmax(ad.stack(scores_p[:i + 1]))
            r_d = visit_encoder.response_vector(alpha_d, betas_d[:i + 1], d_embeds[:i + 1])
            r_p = visit_encoder.response_vector(alpha_p, betas_p[:i + 1], p_embeds[:i + 1])
            c_t = visit_encoder.context_vector(r_d, r_p, self.w1)

            if cfg.use_med_memory:
                gamma, v_t = visit_encoder.memory_attention(memory, c_t)
                q_t = visit_encoder.query_vector(c_t, v_t, self.w2)
            else:
                gamma, v_t = None, Tensor(np.zeros(cfg.embed_size))
                q_t = c_t

            lam, read = drug_encoder.drug_memory_read(z_c, z_d, q_t, self.w3)
            _, logits, y_hat, predicted = drug_encoder.predict(
                q_t, read, self.w4, self.e_f, self.bias_f, cut)

            outputs.append(VisitForward(
                index=i, alpha_d=alpha_d, betas_d=betas_d[:i + 1],
                alpha_p=alpha_p, betas_p=betas_p[:i + 1], gamma=gamma, lam=lam,
                context=c_t, history=v_t, query=q_t, logits=logits,
                y_hat=y_hat, predicted=predicted))

            if cfg.use_med_memory:
                if mode == "recorded":
                    value = m_embeds[i]
                else:
                    value = ad.embedding_sum(self.tables.e_m, sorted(predicted))
                memory.append(c_t, value)
        return PatientForward(outputs, z_c, z_d, gat_deltas)

    def recommend(self, visits, threshold=None):
        """Inference at the final visit; returns its VisitForward."""
        forward = self.forward_patient(visits, training=False, threshold=threshold)
        return forward.visits[-1], forward

    # -- state & bundles ---------------------------------------------------

    def state_dict(self):
        return {p.name: p.data.copy() for p in self.parameters()}

    def load_state(self, state):
        for p in self.parameters():
            if p.name not in state:
                raise DataError(f"checkpoint missing parameter {p.name}")
            arr = np.asarray(state[p.name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise DataError(f"parameter {p.name}: checkpoint shape {arr.shape} "
                                f"!= model shape {p.data.shape}")
            p.data = arr.copy()


def save_bundle(model, path):
    """Persist parameters, config, vocabularies and graphs to a directory."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    tensors = model.state_dict()
    z_c, z_d, _ = model.encode_drugs()
    if z_c is not None:
        tensors["derived.z_c"] = z_c.data
    if z_d is not None:
        tensors["derived.z_d"] = z_d.data
    save_checkpoint(tensors, path / PARAMS_FILE)
    write_graph(model.graph_c, path / COOCCURRENCE_FILE)
    write_graph(model.graph_d, path / INTERACTION_FILE)
    meta = {
        "bundle_version": BUNDLE_VERSION,
        "model_hash": file_hash(path / PARAMS_FILE),
        "config": {
            "embed_size": model.config.embed_size,
            "threshold": model.config.threshold,
            "dropout": model.config.dropout,
            "use_med_memory": model.config.use_med_memory,
            "use_cooccurrence": model.config.use_cooccurrence,
            "use_interaction": model.config.use_interaction,
            "memory_mode": model.config.memory_mode,
            "seed": model.config.seed,
        },
        "vocabularies": {
            "diagnosis": list(model.vocab_d.codes),
            "procedure": list(model.vocab_p.codes),
            "medication": list(model.vocab_m.codes),
        },
    }
    with open(path / META_FILE, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    return meta["model_hash"]


def load_bundle(path):
    path = Path(path)
    try:
        with open(path / META_FILE, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read bundle {path}: {exc}") from None
    if meta.get("bundle_version") != BUNDLE_VERSION:
        raise DataError(f"unsupported bundle version {meta.get('bundle_version')}")
    vocab_d = CodeVocabulary("diagnosis", tuple(meta["vocabularies"]["diagnosis"]))
    vocab_p = CodeVocabulary("procedure", tuple(meta["vocabularies"]["procedure"]))
    vocab_m = CodeVocabulary("medication", tuple(meta["vocabularies"]["medication"]))
    graph_c = read_graph(path / COOCCURRENCE_FILE)
    graph_d = read_graph(path / INTERACTION_FILE)
    model = Model(vocab_d, vocab_p, vocab_m, graph_c, graph_d,
                  ModelConfig(**meta["config"]))
    state = load_checkpoint(path / PARAMS_FILE)
    model.load_state({k: v for k, v in state.items() if not k.startswith("derived.")})
    return model, meta


def file_hash(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()
