import numpy as np
import pytest

from rahp.embedding import (
    CharConvParams,
    EmbeddingParams,
    PAD_INDEX,
    PAD_TOKEN,
    UNK_INDEX,
    Vocabulary,
    WordEmbeddingTable,
    char_embed_word,
    char_vocab_from_tokens,
    conv_max_over_time,
    embed_sequence,
    load_pretrained_vectors,
    tokenize,
)
from rahp.tensor import Tensor, grad_check, tsum

# hand-computed: chars [0.1,0.2],[-0.3,0.4], width-2 filter [0.1,0.2,0.3,0.4],
# bias 0.05 -> single window dot + bias
CONV_HAND_CASE = 0.17


class TestTokenize:
    def test_punctuation_separated(self):
        assert tokenize("Does it work?") == ["does", "it", "work", "?"]

    def test_empty(self):
        assert tokenize("") == []

    def test_hyphenated(self):
        assert tokenize("glare-free Kindle") == ["glare", "-", "free", "kindle"]


class TestVocabulary:
    def test_reserved_indices(self):
        v = Vocabulary.build(["apple", "pear"])
        assert v.index(PAD_TOKEN) == PAD_INDEX == 0
        assert v.index("never-seen") == UNK_INDEX == 1
        assert v.index("apple") == 2

    def test_dense_first_appearance_order(self):
        v = Vocabulary.build(["b", "a", "b", "c"])
        assert [v.index(t) for t in ("b", "a", "c")] == [2, 3, 4]
        assert len(v) == 5

    def test_frozen_rejects_add(self):
        v = Vocabulary.build(["x"])
        with pytest.raises(ValueError, match="frozen"):
            v.add("y")

    def test_save_load_round_trip(self, tmp_path):
        v = Vocabulary.build(["kindle", "case", "glare"])
        path = tmp_path / "vocab.tsv"
        v.save(path)
        loaded = Vocabulary.load(path)
        assert loaded.tokens == v.tokens
        assert loaded.index("case") == v.index("case")


class TestLoadPretrainedVectors:
    def _write(self, path, lines):
        path.write_text("\n".join(lines) + "\n")

    def test_found_word_loaded_verbatim(self, tmp_path):
        path = tmp_path / "vec.txt"
        self._write(path, ["apple 0.25 -0.5 1.0"])
        vocab = Vocabulary.build(["apple", "pear"])
        table = load_pretrained_vectors(path, vocab, np.random.default_rng(0), dim=3)
        assert np.allclose(table.table.data[vocab.index("apple")], [0.25, -0.5, 1.0])
        assert table.pretrained_rows[vocab.index("apple")]
        assert table.coverage == pytest.approx(0.5)

    def test_absent_word_random_and_trainable(self, tmp_path):
        path = tmp_path / "vec.txt"
        self._write(path, ["apple 0.1 0.2 0.3"])
        vocab = Vocabulary.build(["apple", "pear"])
        table = load_pretrained_vectors(path, vocab, np.random.default_rng(0), dim=3)
        row = vocab.index("pear")
        assert not table.pretrained_rows[row]
        assert np.any(table.table.data[row] != 0.0)
        assert table.grad_row_mask()[row] == 1.0

    def test_pad_row_zero_and_pinned(self, tmp_path):
        path = tmp_path / "vec.txt"
        self._write(path, ["apple 0.1 0.2 0.3"])
        vocab = Vocabulary.build(["apple"])
        table = load_pretrained_vectors(path, vocab, np.random.default_rng(0), dim=3)
        assert np.all(table.table.data[PAD_INDEX] == 0.0)
        assert table.grad_row_mask()[PAD_INDEX] == 0.0

    def test_wrong_dimension_names_line(self, tmp_path):
        path = tmp_path / "vec.txt"
        self._write(path, ["apple 0.1 0.2 0.3", "pear 0.1 0.2"])
        vocab = Vocabulary.build(["apple", "pear"])
        with pytest.raises(ValueError, match="line 2"):
            load_pretrained_vectors(path, vocab, np.random.default_rng(0), dim=3)

    def test_malformed_line_skipped_with_count(self, tmp_path):
        path = tmp_path / "vec.txt"
        self._write(path, ["apple 0.1 0.2 0.3", "pear zero point one nope", "plum 1 2 3"])
        vocab = Vocabulary.build(["apple", "pear", "plum"])
        table = load_pretrained_vectors(path, vocab, np.random.default_rng(0), dim=3)
        assert table.skipped_lines == 1
        assert np.allclose(table.table.data[vocab.index("plum")], [1.0, 2.0, 3.0])

    def test_freeze_pretrained_mask(self, tmp_path):
        path = tmp_path / "vec.txt"
        self._write(path, ["apple 0.1 0.2 0.3"])
        vocab = Vocabulary.build(["apple", "pear"])
        table = load_pretrained_vectors(path, vocab, np.random.default_rng(0), dim=3)
        mask = table.grad_row_mask(freeze_pretrained=True)
        assert mask[vocab.index("apple")] == 0.0
        assert mask[vocab.index("pear")] == 1.0


def build_char_params(char_dim=2, n_filters=2, widths=(2, 3, 4, 5), seed=0):
    chars = char_vocab_from_tokens(["work", "fine", "yes", "a"])
    return CharConvParams.build(chars, char_dim, n_filters, widths,
                                np.random.default_rng(seed), dtype=np.float64)


class TestCharConv:
    def test_zero_weights_output_is_bias(self):
        params = build_char_params()
        for width, (weight, bias) in params.filters.items():
            weight.data[...] = 0.0
            bias.data[...] = 0.1 * width
        out = char_embed_word("yes", params)
        expected = np.concatenate([
            np.full(2, 0.1 * w) for w in sorted(params.filters)
        ])
        assert np.allclose(out.data, expected)

    def test_single_character_word_padded(self):
        params = build_char_params()
        out = char_embed_word("a", params)
        assert out.shape == (params.output_dim,)
        assert np.isfinite(out.data).all()

    def test_hand_convolution_oracle(self):
        embeds = Tensor(np.array([[0.1, 0.2], [-0.3, 0.4]]), dtype=np.float64)
        weight = Tensor(np.array([[0.1], [0.2], [0.3], [0.4]]), dtype=np.float64)
        bias = Tensor(np.array([0.05]), dtype=np.float64)
        out = conv_max_over_time(embeds, weight, bias)
        assert out.data[0] == pytest.approx(CONV_HAND_CASE, abs=1e-12)

    def test_max_pool_selects_best_window(self):
        embeds = Tensor(np.array([[1.0], [5.0], [2.0]]), dtype=np.float64)
        weight = Tensor(np.array([[1.0], [1.0]]), dtype=np.float64)  # width 2
        bias = Tensor(np.array([0.0]), dtype=np.float64)
        out = conv_max_over_time(embeds, weight, bias)
        assert out.data[0] == pytest.approx(7.0)  # window (5, 2)

    def test_output_dim_for_all_word_lengths(self):
        params = build_char_params()
        for length in range(1, 41):
            out = char_embed_word("x" * length, params)
            assert out.shape == (params.output_dim,)

    def test_word_length_clamped(self):
        params = build_char_params()
        out_40 = char_embed_word("k" * 40, params, max_word_len=40)
        out_90 = char_embed_word("k" * 90, params, max_word_len=40)
        assert np.array_equal(out_40.data, out_90.data)

    def test_unknown_characters_use_unk(self):
        params = build_char_params()
        out = char_embed_word("üñ", params)  # chars absent from vocab
        assert np.isfinite(out.data).all()

    def test_gradients(self):
        params = build_char_params(widths=(2, 3))
        embeds = Tensor(np.random.default_rng(1).normal(size=(4, 2)),
                        requires_grad=True, dtype=np.float64)
        weight, bias = params.filters[2]

        def f(e, w, b):
            return tsum(conv_max_over_time(e, w, b))

        assert grad_check(f, [embeds, weight, bias]) < 1e-6


class TestEmbedSequence:
    def _params(self, words, dim=4, seed=0):
        vocab = Vocabulary.build(words)
        table = WordEmbeddingTable.random(vocab, dim, np.random.default_rng(seed),
                                          dtype=np.float64)
        char = build_char_params()
        return EmbeddingParams(word=table, char=char), vocab

    def test_row_width_is_char_plus_word(self):
        params, _ = self._params(["work", "fine"])
        out = embed_sequence(["work", "fine"], params)
        assert out.shape == (2, params.char.output_dim + 4)

    def test_pad_token_word_part_zero(self):
        params, _ = self._params(["work"])
        out = embed_sequence(["work", PAD_TOKEN], params)
        assert np.all(out.data[1, params.char.output_dim:] == 0.0)

    def test_identical_tokens_identical_rows(self):
        params, _ = self._params(["fine"])
        out = embed_sequence(["fine", "fine"], params)
        assert np.array_equal(out.data[0], out.data[1])

    def test_empty_rejected(self):
        params, _ = self._params(["work"])
        with pytest.raises(ValueError, match="empty sequence"):
            embed_sequence([], params)

    def test_word_only_mode(self):
        params, _ = self._params(["work"])
        out = embed_sequence(["work"], params, use_char=False)
        assert out.shape == (1, 4)

    def test_gradients_reach_tables_and_filters(self):
        params, vocab = self._params(["work", "fine"])
        out = embed_sequence(["work", "fine"], params)
        tsum(out).backward()
        assert params.word.table.grad is not None
        assert np.any(params.word.table.grad[vocab.index("work")] != 0.0)
        assert params.char.table.grad is not None
        assert np.any(params.char.table.grad != 0.0)
        for weight, bias in params.char.filters.values():
            assert weight.grad is not None and bias.grad is not None
