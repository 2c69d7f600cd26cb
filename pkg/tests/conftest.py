import os

os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

import numpy as np
import pytest

from rahp.embedding import Vocabulary, char_vocab_from_tokens, tokenize
from rahp.instances import LabeledQAInstance, ReviewSet, ReviewSlot
from rahp.model import ModelParams, RAHPConfig

TOY_WORDS = [
    "does", "it", "work", "yes", "no", "fine", "great", "awful",
    "battery", "case", "charges", "with", "a", "the", "?", ".", "!",
]


@pytest.fixture
def tiny_config():
    return RAHPConfig(
        hidden_size=4, d1=6, d2=3, k_reviews=2, word_dim=6, char_dim=3,
        char_filters=2, mlp_hidden=7, final_hidden=5,
        max_q_len=10, max_a_len=10, max_r_len=10, seed=0,
    )


@pytest.fixture
def tiny_vocab():
    return Vocabulary.build(TOY_WORDS)


@pytest.fixture
def tiny_char_vocab(tiny_vocab):
    return char_vocab_from_tokens(tiny_vocab.tokens)


def make_instance(question, answer, review_texts, k, label=1, votes=(3, 3),
                  product_id="p1"):
    slots = [
        ReviewSlot(text=text, tokens=tokenize(text), score=1.0 - 0.1 * i)
        for i, text in enumerate(review_texts)
    ]
    slots.extend([None] * (k - len(slots)))
    return LabeledQAInstance(
        product_id=product_id,
        question=question,
        answer=answer,
        question_tokens=tokenize(question),
        answer_tokens=tokenize(answer),
        label=label,
        votes=votes,
        reviews=ReviewSet(slots=slots),
    )


@pytest.fixture
def toy_instance(tiny_config):
    return make_instance(
        "does it work ?", "yes it does work fine",
        ["battery charges fine .", "it does work"], tiny_config.k_reviews,
    )


def build_params(config, vocab, char_vocab, seed=0, dtype=np.float32):
    rng = np.random.default_rng(seed)
    return ModelParams.build(config, vocab, char_vocab, rng, dtype=dtype)
