"""Independent plain-numpy re-computation of the model forward passes.

Used as the end-to-end oracle for the graph-based implementation: same
formulas, written as straight-line numpy with explicit loops and no
autodiff machinery. Works from a named-parameter dict (name -> ndarray).
"""

import numpy as np

from rahp.embedding import PAD_INDEX, PAD_TOKEN


def np_sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def np_softmax(x):
    e = np.exp(x - x.max())
    return e / e.sum()


def np_lstm_direction(X, wx, wh, b, reverse=False):
    length = X.shape[0]
    hidden = wh.shape[1]
    h = np.zeros(hidden, dtype=X.dtype)
    c = np.zeros(hidden, dtype=X.dtype)
    order = range(length - 1, -1, -1) if reverse else range(length)
    out = np.zeros((length, hidden), dtype=X.dtype)
    for t in order:
        z = wx @ X[t] + wh @ h + b
        gi = np_sigmoid(z[:hidden])
        gf = np_sigmoid(z[hidden:2 * hidden])
        gg = np.tanh(z[2 * hidden:3 * hidden])
        go = np_sigmoid(z[3 * hidden:])
        c = gf * c + gi * gg
        h = go * np.tanh(c)
        out[t] = h
    return out


def np_bilstm(X, named, prefix):
    fwd = np_lstm_direction(X, named[f"{prefix}.fwd.wx"], named[f"{prefix}.fwd.wh"],
                            named[f"{prefix}.fwd.b"])
    bwd = np_lstm_direction(X, named[f"{prefix}.bwd.wx"], named[f"{prefix}.bwd.wh"],
                            named[f"{prefix}.bwd.b"], reverse=True)
    return np.concatenate([fwd, bwd], axis=1)


def np_final_state(rows):
    hidden = rows.shape[1] // 2
    return np.concatenate([rows[-1, :hidden], rows[0, hidden:]])


def np_char_embed(word, named, char_vocab, widths, max_word_len):
    table = named["embedding.char"]
    if word == PAD_TOKEN:
        ids = [PAD_INDEX] * max(widths)
    else:
        ids = [char_vocab.index(c) for c in list(word)[:max_word_len]]
        while len(ids) < max(widths):
            ids.append(PAD_INDEX)
    embeds = table[ids]
    blocks = []
    for width in sorted(widths):
        weight = named[f"embedding.conv{width}.weight"]
        bias = named[f"embedding.conv{width}.bias"]
        acts = []
        for j in range(len(ids) - width + 1):
            acts.append(embeds[j:j + width].reshape(-1) @ weight + bias)
        blocks.append(np.max(np.stack(acts), axis=0))
    return np.concatenate(blocks)


def np_embed(tokens, named, vocab, char_vocab, config):
    word = named["embedding.word"]
    rows = []
    for token in tokens:
        word_part = word[vocab.index(token)]
        if config.no_char_embedding:
            rows.append(word_part)
        else:
            char_part = np_char_embed(
                token, named, char_vocab, config.char_filter_widths, config.max_word_len,
            )
            rows.append(np.concatenate([char_part, word_part]))
    return np.stack(rows)


def np_mlp(x, named, prefix):
    hidden = np.maximum(named[f"{prefix}.w1"] @ x + named[f"{prefix}.b1"], 0.0)
    return named[f"{prefix}.w2"] @ hidden + named[f"{prefix}.b2"]


def np_context(tokens, max_len, named, vocab, char_vocab, config):
    tokens = tokens[:max_len]
    rows = np_embed(tokens, named, vocab, char_vocab, config)
    return np_bilstm(rows, named, "bilstm_c")


def np_qa_branch(c_q, c_a, named):
    S = c_q @ c_a.T
    alpha_q = np.stack([np_softmax(row) for row in S])
    alpha_a = np.stack([np_softmax(row) for row in S.T])
    n_aq = alpha_q @ c_a
    n_qa = alpha_a @ c_q
    enc_q = np_bilstm(np.concatenate([c_q, n_aq], axis=1), named, "bilstm_qa")
    enc_a = np_bilstm(np.concatenate([c_a, n_qa], axis=1), named, "bilstm_qa")
    o_q = np_final_state(enc_q)
    o_a = np_final_state(enc_a)
    s_qa = np_mlp(np.concatenate([o_q, o_a]), named, "qa.mlp")
    return o_q, o_a, s_qa


def np_ra_summary(rows, named):
    return np_final_state(np_bilstm(rows, named, "bilstm_ra"))


def np_forward(instance, named, vocab, char_vocab, config):
    """Helpfulness probability, recomputed without the autodiff graph."""
    c_q = np_context(instance.question_tokens, config.max_q_len, named, vocab, char_vocab, config)
    c_a = np_context(instance.answer_tokens, config.max_a_len, named, vocab, char_vocab, config)
    o_q, _o_a, s_qa = np_qa_branch(c_q, c_a, named)

    if config.no_ra_coherence:
        combined = s_qa
    else:
        m_a = np_ra_summary(c_a, named)
        slot_preds = []
        for slot in instance.reviews.slots[:config.k_reviews]:
            if slot is None:
                slot_preds.append(np.zeros(config.d2, dtype=c_q.dtype))
                continue
            c_r = np_context(slot.tokens, config.max_r_len, named, vocab, char_vocab, config)
            o_r = np_ra_summary(c_r, named)
            if config.no_q_to_r_attention:
                m_r = o_r
            else:
                beta = np_softmax(c_r @ o_q)
                m_r = beta @ c_r + o_r
            slot_preds.append(np_mlp(np.concatenate([m_r, m_a]), named, "mlp_ra"))
        while len(slot_preds) < config.k_reviews:
            slot_preds.append(np.zeros(config.d2, dtype=c_q.dtype))
        combined = np.concatenate([s_qa] + slot_preds)

    logit = np.clip(np_mlp(combined, named, "final_mlp")[0], -15.0, 15.0)
    return float(np_sigmoid(np.array([logit]))[0])


def np_nli_logits(premise_tokens, hypothesis_tokens, named, vocab, char_vocab, config):
    c_p = np_context(premise_tokens, config.max_r_len, named, vocab, char_vocab, config)
    c_h = np_context(hypothesis_tokens, config.max_a_len, named, vocab, char_vocab, config)
    o_p = np_ra_summary(c_p, named)
    o_h = np_ra_summary(c_h, named)
    return np_mlp(np.concatenate([o_p, o_h]), named, "mlp_ra")
