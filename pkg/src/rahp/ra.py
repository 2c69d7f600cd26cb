"""Review-answer coherence: entailment-style scoring of each retrieved
review sentence against the answer.

The answer and each review are summarized by a dedicated BiLSTM; a
question-guided attention highlights the review tokens that address the
asked aspect; the attended and summary vectors combine additively and an
MLP emits a 3-dimensional evidence vector per review slot. The BiLSTM and
MLP here (and the context encoder feeding them) accept parameters
transferred from an inference-pretrained network.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .checkpoint import CheckpointError, read_checkpoint
from .encoders import BiLSTMParams, bilstm_encode, final_state
from .layers import MLPParams
from .tensor import DEFAULT_DTYPE, add, concat, matmul, softmax_masked

TRANSFER_PREFIXES = ("bilstm_c.", "bilstm_ra.", "mlp_ra.")
EMBEDDING_PREFIX = "embedding."


@dataclass
class RAParams:
    bilstm: BiLSTMParams
    mlp: MLPParams  # 4H -> hidden -> 3 entailment-evidence logits

    @classmethod
    def build(cls, context_dim, hidden_size, mlp_hidden, out_dim, rng, dtype=DEFAULT_DTYPE):
        return cls(
            bilstm=BiLSTMParams.build(context_dim, hidden_size, rng, dtype),
            mlp=MLPParams.build(4 * hidden_size, mlp_hidden, out_dim, rng, dtype),
        )

    def named(self):
        yield from self.bilstm.named("bilstm_ra")
        yield from self.mlp.named("mlp_ra")


def encode_summary(context_rows, mask, params):
    """Final state of the coherence BiLSTM over context-encoded rows."""
    encoded = bilstm_encode(context_rows, mask, params.bilstm.fwd, params.bilstm.bwd)
    return final_state(encoded, mask)


def ra_encode(c_a, c_r, mask_a, mask_r, params):
    """Summaries (m_a, o_r) for the answer and one review; the model
    forward computes m_a once per instance and reuses it across slots."""
    return encode_summary(c_a, mask_a, params), encode_summary(c_r, mask_r, params)


def q_to_r_attention(o_q, c_r, mask_r):
    """Question-guided review attention.

    Scores every review token against the encoded question vector,
    normalizes over real tokens, and returns (weights, weighted sum of
    the context rows).
    """
    if o_q.shape != (c_r.shape[1],):
        raise ValueError(f"query shape {o_q.shape} does not match rows {c_r.shape}")
    scores = matmul(c_r, o_q)
    beta = softmax_masked(scores, mask_r)
    attended = matmul(beta, c_r)
    return beta, attended


def compose_review(v_r, o_r):
    """Element-wise sum of the attended and summary review vectors."""
    if v_r.shape != o_r.shape:
        raise ValueError(f"shape mismatch {v_r.shape} vs {o_r.shape}")
    return add(v_r, o_r)


def ra_predict(m_r, m_a, params, dropout_rate=0.0, rng=None):
    """Evidence logits for one review slot; not softmaxed here."""
    return params.mlp.apply(concat([m_r, m_a]), dropout_rate=dropout_rate, rng=rng)


def load_transferred(named_params, checkpoint_path, include_embeddings=True):
    """Copy pretrained tensors into a parameter dict, verbatim.

    Transfers the context encoder, coherence encoder and coherence MLP
    (prefixes ``bilstm_c.``, ``bilstm_ra.``, ``mlp_ra.``), plus the
    embedding tables when ``include_embeddings`` is set. Everything else
    stays as initialized. Returns the list of transferred tensor names.
    """
    _config, tensors = read_checkpoint(checkpoint_path)
    prefixes = TRANSFER_PREFIXES + ((EMBEDDING_PREFIX,) if include_embeddings else ())

    wanted = {
        name: p for name, p in named_params.items() if name.startswith(prefixes)
    }
    missing = sorted(set(wanted) - set(tensors))
    if missing:
        raise CheckpointError(
            f"{checkpoint_path}: transfer tensors missing from checkpoint: {', '.join(missing)}"
        )
    mismatched = sorted(
        name for name in wanted if tensors[name].shape != wanted[name].data.shape
    )
    if mismatched:
        details = ", ".join(
            f"{name} (checkpoint {tensors[name].shape}, model {wanted[name].data.shape})"
            for name in mismatched
        )
        raise CheckpointError(f"{checkpoint_path}: transfer shape mismatch: {details}")

    for name, param in wanted.items():
        param.data[...] = tensors[name].astype(param.data.dtype)
    return sorted(wanted)
