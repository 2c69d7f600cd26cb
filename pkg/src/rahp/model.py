"""Full network assembly: configuration, parameter collection, forward
pass to a helpfulness probability, loss, and checkpointing."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import qa as qa_mod
from . import ra as ra_mod
from .checkpoint import CheckpointError, read_checkpoint, save_checkpoint as _save
from .embedding import (
    CharConvParams,
    EmbeddingParams,
    PAD_TOKEN,
    Vocabulary,
    WordEmbeddingTable,
    embed_sequence,
)
from .encoders import BiLSTMParams, bilstm_encode
from .layers import MLPParams
from .tensor import (
    DEFAULT_DTYPE,
    Tensor,
    clip,
    concat,
    getitem,
    neg,
    sigmoid,
    sub,
    tlog,
    zeros,
)

# Config keys that determine tensor shapes or input semantics; a checkpoint
# can only be loaded into a model whose config agrees on all of them.
STRUCTURAL_FIELDS = (
    "hidden_size", "d1", "d2", "k_reviews", "word_dim", "char_dim",
    "char_filters", "char_filter_widths", "mlp_hidden", "final_hidden",
    "no_ra_coherence", "no_q_to_r_attention", "no_char_embedding",
)


@dataclass
class RAHPConfig:
    """Hyperparameters and ablation switches for the whole pipeline."""

    hidden_size: int = 128          # LSTM hidden units per direction
    d1: int = 128                   # QA prediction vector size
    d2: int = 3                     # per-review evidence vector size
    k_reviews: int = 5
    word_dim: int = 300
    char_dim: int = 16
    char_filters: int = 50
    char_filter_widths: tuple = (2, 3, 4, 5)
    mlp_hidden: int = 256
    final_hidden: int = 128
    max_q_len: int = 40
    max_a_len: int = 60
    max_r_len: int = 50
    max_word_len: int = 40
    dropout: float = 0.0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 30
    patience: int = 5
    stop_train_accuracy: float = 0.0   # 0 disables the capacity-check stop
    seed: int = 0
    freeze_pretrained: bool = False
    transfer_embeddings: bool = True
    query_includes_answer: bool = False
    nli_epochs: int = 200
    nli_batch_size: int = 64
    nli_patience: int = 50
    no_ra_coherence: bool = False
    no_q_to_r_attention: bool = False
    no_char_embedding: bool = False

    def __post_init__(self):
        if isinstance(self.char_filter_widths, list):
            self.char_filter_widths = tuple(self.char_filter_widths)
        for name in ("hidden_size", "d1", "d2", "k_reviews", "word_dim",
                     "char_dim", "char_filters", "mlp_hidden", "final_hidden",
                     "max_q_len", "max_a_len", "max_r_len", "max_word_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"config field {name} must be positive")

    @property
    def encoder_input_dim(self):
        if self.no_char_embedding:
            return self.word_dim
        return self.word_dim + self.char_filters * len(self.char_filter_widths)

    @property
    def final_input_dim(self):
        if self.no_ra_coherence:
            return self.d1
        return self.d1 + self.k_reviews * self.d2

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["char_filter_widths"] = list(self.char_filter_widths)
        return d

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    def fingerprint(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:12]

    @classmethod
    def from_file(cls, path, overrides=None):
        """Parse a flat key=value config file, then apply overrides."""
        values = {}
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ValueError(f"{path} line {line_no}: expected key=value")
                key, _, raw = line.partition("=")
                values[key.strip()] = raw.strip()
        if overrides:
            values.update({k: str(v) for k, v in overrides.items()})
        return cls.from_dict(_coerce_config_values(values))


def _coerce_config_values(values):
    fields = {f.name: f for f in dataclasses.fields(RAHPConfig)}
    out = {}
    for key, raw in values.items():
        f = fields.get(key)
        if f is None:
            raise ValueError(f"unknown config key: {key}")
        if f.type in ("int", int):
            out[key] = int(raw)
        elif f.type in ("float", float):
            out[key] = float(raw)
        elif f.type in ("bool", bool):
            out[key] = raw.lower() in ("1", "true", "yes", "on")
        elif f.type in ("tuple", tuple):
            out[key] = tuple(int(v) for v in str(raw).replace(" ", "").split(","))
        else:
            out[key] = raw
    return out


class ModelParams:
    """All trainable tensors, addressable by checkpoint name."""

    def __init__(self, config, embedding, bilstm_c, qa, ra, final_mlp):
        self.config = config
        self.embedding = embedding
        self.bilstm_c = bilstm_c
        self.qa = qa
        self.ra = ra
        self.final_mlp = final_mlp

    @classmethod
    def build(cls, config, vocab, char_vocab, rng, dtype=DEFAULT_DTYPE, word_table=None):
        if word_table is None:
            word_table = WordEmbeddingTable.random(vocab, config.word_dim, rng, dtype)
        char = CharConvParams.build(
            char_vocab, config.char_dim, config.char_filters,
            config.char_filter_widths, rng, dtype,
        )
        embedding = EmbeddingParams(word=word_table, char=char)
        bilstm_c = BiLSTMParams.build(config.encoder_input_dim, config.hidden_size, rng, dtype)
        qa = qa_mod.QAParams.build(
            2 * config.hidden_size, config.hidden_size, config.mlp_hidden, config.d1, rng, dtype,
        )
        ra = None
        if not config.no_ra_coherence:
            ra = ra_mod.RAParams.build(
                2 * config.hidden_size, config.hidden_size, config.mlp_hidden,
                config.d2, rng, dtype,
            )
        final_mlp = MLPParams.build(config.final_input_dim, config.final_hidden, 1, rng, dtype)
        return cls(config, embedding, bilstm_c, qa, ra, final_mlp)

    def named(self):
        out = {}
        for name, tensor in self.embedding.named():
            out[name] = tensor
        for name, tensor in self.bilstm_c.named("bilstm_c"):
            out[name] = tensor
        for name, tensor in self.qa.named():
            out[name] = tensor
        if self.ra is not None:
            for name, tensor in self.ra.named():
                out[name] = tensor
        for name, tensor in self.final_mlp.named("final_mlp"):
            out[name] = tensor
        return out

    def zero_grad(self):
        for tensor in self.named().values():
            tensor.zero_grad()

    def apply_grad_masks(self):
        """Pin the PAD word row (and frozen pretrained rows) in place."""
        table = self.embedding.word.table
        if table.grad is not None:
            mask = self.embedding.word.grad_row_mask(self.config.freeze_pretrained)
            table.grad *= mask[:, None]

    def snapshot(self):
        return {name: t.data.copy() for name, t in self.named().items()}

    def restore(self, snapshot):
        for name, t in self.named().items():
            t.data[...] = snapshot[name]


# ---------------------------------------------------------------------------
# forward pass


def _mask_from_tokens(tokens):
    m = np.array([t != PAD_TOKEN for t in tokens], dtype=bool)
    n = int(m.sum())
    if not m[:n].all():
        raise ValueError("padding tokens must trail real tokens")
    return m


def _encode_context(tokens, max_len, params, config):
    tokens = tokens[:max_len]
    mask = _mask_from_tokens(tokens)
    if not mask.any():
        raise ValueError("empty sequence")
    rows = embed_sequence(
        tokens, params.embedding,
        use_char=not config.no_char_embedding,
        max_word_len=config.max_word_len,
    )
    context = bilstm_encode(rows, mask, params.bilstm_c.fwd, params.bilstm_c.bwd)
    return context, mask


def forward(instance, params, config, collect=False, dropout_rate=0.0, rng=None):
    """Probability that the answer is helpful, in (0, 1).

    With ``collect`` also returns a dict of attention maps and
    intermediate prediction vectors (as numpy copies) for inspection.
    """
    if not instance.question_tokens:
        raise ValueError("empty question")
    if not instance.answer_tokens:
        raise ValueError("empty answer")

    c_q, mask_q = _encode_context(instance.question_tokens, config.max_q_len, params, config)
    c_a, mask_a = _encode_context(instance.answer_tokens, config.max_a_len, params, config)

    similarity = qa_mod.similarity_matrix(c_q, c_a)
    alignment = qa_mod.dual_attention(similarity, mask_q, mask_a)
    n_aq, n_qa = qa_mod.attended_representations(alignment, c_q, c_a)
    qa_pred = qa_mod.qa_encode_and_predict(
        c_q, n_aq, c_a, n_qa, mask_q, mask_a, params.qa,
        dropout_rate=dropout_rate, rng=rng,
    )

    details = {}
    if collect:
        details["alpha_q"] = alignment.alpha_q.data.copy()
        details["alpha_a"] = alignment.alpha_a.data.copy()
        details["s_qa"] = qa_pred.s_qa.data.copy()
        details["betas"] = []
        details["s_ra"] = []

    if config.no_ra_coherence:
        combined = qa_pred.s_qa
    else:
        m_a = ra_mod.encode_summary(c_a, mask_a, params.ra)
        slot_preds = []
        for slot in instance.reviews.slots[:config.k_reviews]:
            if slot is None:
                slot_preds.append(zeros(config.d2, dtype=c_q.data.dtype))
                if collect:
                    details["betas"].append(None)
                    details["s_ra"].append(np.zeros(config.d2))
                continue
            c_r, mask_r = _encode_context(slot.tokens, config.max_r_len, params, config)
            o_r = ra_mod.encode_summary(c_r, mask_r, params.ra)
            if config.no_q_to_r_attention:
                m_r = o_r
                beta = None
            else:
                beta, v_r = ra_mod.q_to_r_attention(qa_pred.o_q, c_r, mask_r)
                m_r = ra_mod.compose_review(v_r, o_r)
            s_ra = ra_mod.ra_predict(m_r, m_a, params.ra, dropout_rate=dropout_rate, rng=rng)
            slot_preds.append(s_ra)
            if collect:
                details["betas"].append(None if beta is None else beta.data.copy())
                details["s_ra"].append(s_ra.data.copy())
        while len(slot_preds) < config.k_reviews:
            slot_preds.append(zeros(config.d2, dtype=c_q.data.dtype))
        combined = concat([qa_pred.s_qa] + slot_preds)

    logit_vec = params.final_mlp.apply(combined, dropout_rate=dropout_rate, rng=rng)
    logit = clip(getitem(logit_vec, 0), -15.0, 15.0)
    prob = sigmoid(logit)
    if collect:
        details["logit"] = float(logit.data)
        return prob, details
    return prob


def loss(prob, label):
    """Binary cross-entropy against a 0/1 label."""
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label}")
    if label == 1:
        return neg(tlog(prob))
    return neg(tlog(sub(1.0, prob)))


# ---------------------------------------------------------------------------
# checkpointing


def save_model_checkpoint(path, params, config):
    _save(path, params.named(), config.to_dict())


def load_model_checkpoint(path, params, config):
    """Load a checkpoint into existing params; validates before mutating."""
    stored_config, tensors = read_checkpoint(path)
    for key in STRUCTURAL_FIELDS:
        stored = stored_config.get(key)
        if isinstance(stored, list):
            stored = tuple(stored)
        if stored != getattr(config, key):
            raise CheckpointError(
                f"{path}: config mismatch on {key}: checkpoint has {stored!r},"
                f" expected {getattr(config, key)!r}"
            )
    named = params.named()
    missing = sorted(set(named) - set(tensors))
    extra = sorted(set(tensors) - set(named))
    if missing or extra:
        raise CheckpointError(
            f"{path}: tensor set mismatch (missing: {missing or 'none'},"
            f" unexpected: {extra or 'none'})"
        )
    bad_shapes = sorted(
        name for name in named if tensors[name].shape != named[name].data.shape
    )
    if bad_shapes:
        raise CheckpointError(f"{path}: shape mismatch for {', '.join(bad_shapes)}")
    for name, tensor in named.items():
        tensor.data[...] = tensors[name].astype(tensor.data.dtype)
    return stored_config
