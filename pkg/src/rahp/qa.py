"""Dual attention between question and answer and the QA prediction head.

Each question word attends over every answer word and vice versa (dot
product similarity, row-wise masked softmax). The context rows and their
attended counterparts are concatenated, summarized by one shared BiLSTM,
and an MLP maps the two summaries to the QA prediction vector.
"""

from __future__ import annotations

from dataclasses import dataclass

from .encoders import BiLSTMParams, bilstm_encode, final_state
from .layers import MLPParams
from .tensor import (
    DEFAULT_DTYPE,
    Tensor,
    concat,
    matmul,
    softmax_masked,
    transpose,
)


@dataclass
class AttentionAlignment:
    """Similarity matrix plus the two row-normalized attention maps."""

    similarity: Tensor   # (L_q, L_a)
    alpha_q: Tensor      # (L_q, L_a) rows sum to 1 over unmasked answer positions
    alpha_a: Tensor      # (L_a, L_q) rows sum to 1 over unmasked question positions


@dataclass
class QAPrediction:
    o_q: Tensor
    o_a: Tensor
    s_qa: Tensor


@dataclass
class QAParams:
    bilstm: BiLSTMParams  # shared by the question and answer branches
    mlp: MLPParams

    @classmethod
    def build(cls, context_dim, hidden_size, mlp_hidden, out_dim, rng, dtype=DEFAULT_DTYPE):
        return cls(
            bilstm=BiLSTMParams.build(2 * context_dim, hidden_size, rng, dtype),
            mlp=MLPParams.build(4 * hidden_size, mlp_hidden, out_dim, rng, dtype),
        )

    def named(self):
        yield from self.bilstm.named("bilstm_qa")
        yield from self.mlp.named("qa.mlp")


def similarity_matrix(c_q, c_a):
    """S[j, k] = dot(question row j, answer row k)."""
    if c_q.ndim != 2 or c_a.ndim != 2 or c_q.shape[1] != c_a.shape[1]:
        raise ValueError(f"incompatible context shapes {c_q.shape} and {c_a.shape}")
    return matmul(c_q, transpose(c_a))


def dual_attention(similarity, mask_q, mask_a):
    """Row-normalize S over answer positions and S^T over question positions."""
    return AttentionAlignment(
        similarity=similarity,
        alpha_q=softmax_masked(similarity, mask_a),
        alpha_a=softmax_masked(transpose(similarity), mask_q),
    )


def attended_representations(alignment, c_q, c_a):
    """Attention-weighted counterparts: answers seen from each question
    word and questions seen from each answer word."""
    n_aq = matmul(alignment.alpha_q, c_a)
    n_qa = matmul(alignment.alpha_a, c_q)
    return n_aq, n_qa


def qa_encode_and_predict(c_q, n_aq, c_a, n_qa, mask_q, mask_a, params,
                          dropout_rate=0.0, rng=None):
    """Summarize [context; attended] for both sides and predict.

    One BiLSTM (shared weights) encodes both concatenations; the final
    states are concatenated and passed through the QA prediction MLP.
    """
    enc_q = bilstm_encode(concat([c_q, n_aq], axis=1), mask_q, params.bilstm.fwd, params.bilstm.bwd)
    enc_a = bilstm_encode(concat([c_a, n_qa], axis=1), mask_a, params.bilstm.fwd, params.bilstm.bwd)
    o_q = final_state(enc_q, mask_q)
    o_a = final_state(enc_a, mask_a)
    s_qa = params.mlp.apply(concat([o_q, o_a]), dropout_rate=dropout_rate, rng=rng)
    return QAPrediction(o_q=o_q, o_a=o_a, s_qa=s_qa)
