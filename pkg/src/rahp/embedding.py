"""Text to per-word vectors: tokenization, vocabularies, pre-trained word
vectors and the character-level convolutional embedding.

Each word embeds as [char-CNN features; word vector]: four filter widths
over character embeddings, max-pooled over time, concatenated in front of
the (optionally pre-trained) word vector.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

import numpy as np

from .optim import xavier_uniform_init
from .tensor import (
    DEFAULT_DTYPE,
    Tensor,
    concat,
    embedding_lookup,
    from_op,
    stack,
)

log = logging.getLogger(__name__)

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_INDEX = 0
UNK_INDEX = 1

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def tokenize(text):
    """Lowercase and split on whitespace/punctuation; punctuation kept."""
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    """Dense token -> index map with reserved PAD=0 and UNK=1."""

    def __init__(self):
        self._index = {PAD_TOKEN: PAD_INDEX, UNK_TOKEN: UNK_INDEX}
        self._tokens = [PAD_TOKEN, UNK_TOKEN]
        self._frozen = False

    def __len__(self):
        return len(self._tokens)

    def __contains__(self, token):
        return token in self._index

    @property
    def frozen(self):
        return self._frozen

    @property
    def tokens(self):
        return list(self._tokens)

    def add(self, token):
        if self._frozen:
            raise ValueError("cannot add to a frozen vocabulary")
        idx = self._index.get(token)
        if idx is None:
            idx = len(self._tokens)
            self._index[token] = idx
            self._tokens.append(token)
        return idx

    def extend(self, tokens):
        for token in tokens:
            self.add(token)

    def freeze(self):
        self._frozen = True
        return self

    def index(self, token):
        """Index of token; unseen tokens map to UNK."""
        return self._index.get(token, UNK_INDEX)

    @classmethod
    def build(cls, token_iter):
        vocab = cls()
        vocab.extend(token_iter)
        return vocab.freeze()

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for token, idx in self._index.items():
                fh.write(f"{token}\t{idx}\n")

    @classmethod
    def load(cls, path):
        vocab = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                token, idx_text = line.split("\t")
                idx = int(idx_text)
                if token in (PAD_TOKEN, UNK_TOKEN):
                    continue
                got = vocab.add(token)
                if got != idx:
                    raise ValueError(f"non-dense vocabulary file {path} at {token}")
        return vocab.freeze()


# ---------------------------------------------------------------------------
# word vectors


def iter_vector_file(path, dim):
    """Yield (line_no, word, float32 vector) from a text vector file.

    Lines whose values fail float parsing yield a None vector so callers
    can count them; lines with a wrong number of columns raise an error
    naming the line.
    """
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            word, values = parts[0], parts[1:]
            try:
                vec = np.array([float(v) for v in values], dtype=np.float32)
            except ValueError:
                yield line_no, word, None
                continue
            if vec.shape[0] != dim:
                raise ValueError(
                    f"{path} line {line_no}: expected {dim} values, got {vec.shape[0]}"
                )
            yield line_no, word, vec


def load_vector_file(path, dim):
    """Read the whole vector file: (word -> vector dict, skipped count)."""
    vectors = {}
    skipped = 0
    for _line_no, word, vec in iter_vector_file(path, dim):
        if vec is None:
            skipped += 1
            continue
        vectors[word] = vec
    return vectors, skipped


@dataclass
class WordEmbeddingTable:
    """(vocab x dim) word vectors; PAD row pinned to zero."""

    vocab: Vocabulary
    table: Tensor
    pretrained_rows: np.ndarray  # bool per row: loaded verbatim from file
    coverage: float = 0.0
    skipped_lines: int = 0

    @property
    def dim(self):
        return self.table.shape[1]

    @classmethod
    def random(cls, vocab, dim, rng, dtype=DEFAULT_DTYPE):
        data = rng.uniform(-0.1, 0.1, size=(len(vocab), dim)).astype(dtype)
        data[PAD_INDEX] = 0.0
        return cls(
            vocab=vocab,
            table=Tensor(data, requires_grad=True),
            pretrained_rows=np.zeros(len(vocab), dtype=bool),
        )

    def grad_row_mask(self, freeze_pretrained=False):
        """Multiplier per row applied to the table gradient before updates."""
        mask = np.ones(len(self.vocab), dtype=self.table.data.dtype)
        mask[PAD_INDEX] = 0.0
        if freeze_pretrained:
            mask[self.pretrained_rows] = 0.0
        return mask

    def named(self, prefix="embedding"):
        yield f"{prefix}.word", self.table


def load_pretrained_vectors(path, vocab, rng, dim=300, dtype=DEFAULT_DTYPE):
    """Build a WordEmbeddingTable from a "word v1 .. vN"-per-line file.

    Vocabulary words found in the file are loaded verbatim; everything
    else (including UNK) is randomly initialized and trainable. The PAD
    row stays zero.
    """
    table = WordEmbeddingTable.random(vocab, dim, rng, dtype)
    found = 0
    skipped = 0
    for _line_no, word, vec in iter_vector_file(path, dim):
        if vec is None:
            skipped += 1
            continue
        if word in vocab:
            idx = vocab.index(word)
            if idx not in (PAD_INDEX, UNK_INDEX):
                table.table.data[idx] = vec.astype(dtype)
                table.pretrained_rows[idx] = True
                found += 1
    content_words = max(len(vocab) - 2, 1)
    table.coverage = found / content_words
    table.skipped_lines = skipped
    log.info(
        "word vectors: %d/%d vocabulary words covered (%.1f%%), %d malformed lines skipped",
        found, content_words, 100.0 * table.coverage, skipped,
    )
    return table


# ---------------------------------------------------------------------------
# character-level CNN


@dataclass
class CharConvParams:
    """Character embedding table plus one (weight, bias) pair per width."""

    char_vocab: Vocabulary
    table: Tensor  # (n_chars, char_dim)
    filters: dict  # width -> (weight (width*char_dim, n_filters), bias (n_filters,))

    @property
    def char_dim(self):
        return self.table.shape[1]

    @property
    def output_dim(self):
        return sum(w.shape[1] for w, _b in self.filters.values())

    @property
    def max_width(self):
        return max(self.filters)

    @classmethod
    def build(cls, char_vocab, char_dim, n_filters, widths, rng, dtype=DEFAULT_DTYPE):
        table = rng.uniform(-0.1, 0.1, size=(len(char_vocab), char_dim)).astype(dtype)
        filters = {}
        for width in sorted(widths):
            weight = np.ascontiguousarray(
                xavier_uniform_init(width * char_dim, n_filters, rng, dtype).T
            )
            bias = np.zeros(n_filters, dtype=dtype)
            filters[width] = (
                Tensor(weight, requires_grad=True),
                Tensor(bias, requires_grad=True),
            )
        return cls(
            char_vocab=char_vocab,
            table=Tensor(table, requires_grad=True),
            filters=filters,
        )

    def named(self, prefix="embedding"):
        yield f"{prefix}.char", self.table
        for width in sorted(self.filters):
            weight, bias = self.filters[width]
            yield f"{prefix}.conv{width}.weight", weight
            yield f"{prefix}.conv{width}.bias", bias


def conv_max_over_time(embeds, weight, bias):
    """1-D convolution over character embeddings + max-over-time pooling.

    embeds: (L, d) character embeddings; weight: (width*d, F); bias: (F,).
    Returns the (F,) max-pooled feature vector. Implemented as a single
    graph node with a hand-written backward for speed.
    """
    length, d = embeds.shape
    width = weight.shape[0] // d
    if weight.shape[0] != width * d:
        raise ValueError("filter width incompatible with embedding dim")
    if length < width:
        raise ValueError(f"sequence of length {length} shorter than filter width {width}")
    windows = np.stack(
        [embeds.data[j:j + width].reshape(-1) for j in range(length - width + 1)]
    )
    activations = windows @ weight.data + bias.data
    argmax = activations.argmax(axis=0)
    out = activations[argmax, np.arange(activations.shape[1])]

    def backward_fn(g):
        d_act = np.zeros_like(activations)
        cols = np.arange(activations.shape[1])
        d_act[argmax, cols] = g
        d_weight = windows.T @ d_act
        d_bias = d_act.sum(axis=0)
        d_windows = d_act @ weight.data.T
        d_embeds = np.zeros_like(embeds.data)
        for offset in range(width):
            d_embeds[offset:offset + d_windows.shape[0]] += d_windows[
                :, offset * d:(offset + 1) * d
            ]
        return (d_embeds, d_weight, d_bias)

    return from_op(out, (embeds, weight, bias), backward_fn)


def char_embed_word(word, params, max_word_len=40):
    """Fixed-size character features for one word (4 pooled filter blocks)."""
    if not word:
        raise ValueError("cannot character-embed an empty word")
    if word == PAD_TOKEN:
        ids = [PAD_INDEX] * params.max_width
    else:
        chars = list(word)[:max_word_len]
        ids = [params.char_vocab.index(c) for c in chars]
        while len(ids) < params.max_width:
            ids.append(PAD_INDEX)
    embeds = embedding_lookup(params.table, np.asarray(ids, dtype=np.int64))
    blocks = []
    for width in sorted(params.filters):
        weight, bias = params.filters[width]
        blocks.append(conv_max_over_time(embeds, weight, bias))
    return concat(blocks)


@dataclass
class EmbeddingParams:
    word: WordEmbeddingTable
    char: CharConvParams

    def named(self, prefix="embedding"):
        yield from self.word.named(prefix)
        yield from self.char.named(prefix)


def embed_sequence(tokens, params, use_char=True, max_word_len=40):
    """Embed a token list as an (L, char_dim + word_dim) matrix.

    Row t is [char features; word vector] for token t; with use_char off
    only the word vector part remains.
    """
    if not tokens:
        raise ValueError("empty sequence")
    ids = np.asarray([params.word.vocab.index(t) for t in tokens], dtype=np.int64)
    word_rows = embedding_lookup(params.word.table, ids)
    if not use_char:
        return word_rows
    char_rows = stack([char_embed_word(t, params.char, max_word_len) for t in tokens])
    return concat([char_rows, word_rows], axis=1)


def char_vocab_from_tokens(token_iter):
    """Character vocabulary over all characters of the given tokens."""
    vocab = Vocabulary()
    for token in token_iter:
        for ch in token:
            vocab.add(ch)
    return vocab.freeze()
