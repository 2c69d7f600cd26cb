"""Corpus ingestion, label derivation, sentence splitting, review
retrieval, dataset splitting and the vocabulary-overlap diagnostic.

Raw corpora arrive as JSON-lines files: one ``{product_id, question,
answer, vote_x, vote_y}`` object per line for QA records and one
``{product_id, review_text}`` (optional ``review_id``) object per line
for reviews. Prepared shards are JSON-lines as well, carrying the
resolved label and the retrieved review sentences with their scores.
"""

from __future__ import annotations

import enum
import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .embedding import tokenize
from .instances import (
    LabeledQAInstance,
    RawAnswerRecord,
    ReviewSentence,
    ReviewSet,
    ReviewSlot,
)

log = logging.getLogger(__name__)


class Label(enum.Enum):
    HELPFUL = "helpful"
    UNHELPFUL = "unhelpful"
    DISCARD = "discard"


def derive_label(vote_x, vote_y):
    """Map raw votes [X, Y] to a training label.

    Helpful requires a unanimous score with at least two votes; answers
    with a single downvote are kept as unhelpful; everything with fewer
    than two votes is otherwise discarded.
    """
    if vote_x < 0 or vote_y < 0:
        raise ValueError(f"negative votes: [{vote_x}, {vote_y}]")
    if vote_x > vote_y:
        raise ValueError(f"upvotes exceed total votes: [{vote_x}, {vote_y}]")
    if vote_y >= 2:
        return Label.HELPFUL if vote_x == vote_y else Label.UNHELPFUL
    if vote_y == 1 and vote_x == 0:
        return Label.UNHELPFUL
    return Label.DISCARD


# ---------------------------------------------------------------------------
# sentence splitting

# Versioned exception list: a period after these (lowercased) does not end
# a sentence.
ABBREVIATIONS = frozenset({
    "mr", "mrs", "ms", "dr", "st", "vs", "etc", "inc", "ltd", "co",
    "e.g", "i.e", "approx", "oz", "qt", "ft", "in", "lbs",
})


def _preceding_word(text, dot_index):
    j = dot_index
    while j > 0 and (text[j - 1].isalnum() or text[j - 1] == "."):
        j -= 1
    return text[j:dot_index].lower()


def split_review_sentences(review_text):
    """Rule-based split on . ! ? followed by whitespace or end of text.

    Decimal points never match (the next character is a digit, not a
    space); a small abbreviation list suppresses the rest of the false
    boundaries. Empty fragments are dropped.
    """
    sentences = []
    buf = []
    n = len(review_text)
    for i, ch in enumerate(review_text):
        buf.append(ch)
        if ch not in ".!?":
            continue
        nxt = review_text[i + 1] if i + 1 < n else ""
        if nxt and not nxt.isspace():
            continue
        if ch == "." and _preceding_word(review_text, i) in ABBREVIATIONS:
            continue
        sentence = "".join(buf).strip()
        if sentence:
            sentences.append(sentence)
        buf = []
    tail = "".join(buf).strip()
    if tail:
        sentences.append(tail)
    return sentences


# ---------------------------------------------------------------------------
# retrieval


def sentence_vector(tokens, vectors, dim):
    """Average of the pre-trained vectors over tokens; out-of-vocabulary
    tokens contribute the UNK vector (all zeros)."""
    if not tokens:
        return np.zeros(dim, dtype=np.float64)
    acc = np.zeros(dim, dtype=np.float64)
    for token in tokens:
        vec = vectors.get(token)
        if vec is not None:
            acc += vec
    return acc / len(tokens)


@dataclass
class RetrievalIndex:
    """Per-product review sentences with embedding-average vectors.

    Keeps a reference to the word-vector table so queries embed the same
    way the indexed sentences did.
    """

    dim: int
    by_product: dict = field(default_factory=dict)
    vectors: dict = field(default_factory=dict)

    @classmethod
    def build(cls, sentences, vectors, dim):
        index = cls(dim=dim, vectors=vectors)
        for sent in sentences:
            vec = sentence_vector(tokenize(sent.text), vectors, dim)
            index.by_product.setdefault(sent.product_id, []).append((sent, vec))
        return index

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for product_id, entries in self.by_product.items():
                for sent, vec in entries:
                    fh.write(json.dumps({
                        "product_id": product_id,
                        "text": sent.text,
                        "review_id": sent.review_id,
                        "sentence_index": sent.sentence_index,
                        "vector": [round(float(v), 8) for v in vec],
                    }) + "\n")

    @classmethod
    def load(cls, path, vectors):
        """Reload a saved index; ``vectors`` must be the same table the
        index was built with (queries embed through it)."""
        index = None
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                vec = np.asarray(rec["vector"], dtype=np.float64)
                if index is None:
                    index = cls(dim=vec.shape[0], vectors=vectors)
                sent = ReviewSentence(
                    product_id=rec["product_id"], text=rec["text"],
                    review_id=rec["review_id"], sentence_index=rec["sentence_index"],
                )
                index.by_product.setdefault(rec["product_id"], []).append((sent, vec))
        if index is None:
            raise ValueError(f"{path}: empty retrieval index")
        return index


def retrieve_top_k(question, product_id, index, k, query_extra=""):
    """Top-k review sentences by dot product with the question vector.

    The query embeds as the word-vector average of the question tokens
    (plus ``query_extra`` text when the pipeline is configured to include
    the answer). Ties break lexicographically on sentence text; missing
    sentences leave EMPTY slots; an unknown product warns and returns
    all-EMPTY slots.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    entries = index.by_product.get(product_id)
    if entries is None:
        warnings.warn(f"unknown product {product_id!r}: returning EMPTY review slots")
        return ReviewSet.empty(k)
    query_text = question if not query_extra else f"{question} {query_extra}"
    query = sentence_vector(tokenize(query_text), index.vectors, index.dim)
    scored = sorted(
        ((float(np.dot(query, vec)), sent) for sent, vec in entries),
        key=lambda pair: (-pair[0], pair[1].text),
    )
    slots = [
        ReviewSlot(text=sent.text, tokens=tokenize(sent.text), score=score)
        for score, sent in scored[:k]
    ]
    slots.extend([None] * (k - len(slots)))
    return ReviewSet(slots=slots)


# ---------------------------------------------------------------------------
# splits and overlap


@dataclass
class DatasetSplit:
    train: list
    valid: list
    test: list


def make_splits(instances, seed):
    """Deterministic 80:10:10 split: seeded shuffle, then contiguous cuts.

    Valid and test each receive floor(n/10) instances; the remainder
    stays in train (so 101 instances split 81/10/10).
    """
    n = len(instances)
    if n < 10:
        raise ValueError(f"need at least 10 instances to split, got {n}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    shuffled = [instances[i] for i in order]
    n_eval = n // 10
    train_end = n - 2 * n_eval
    return DatasetSplit(
        train=shuffled[:train_end],
        valid=shuffled[train_end:train_end + n_eval],
        test=shuffled[train_end + n_eval:],
    )


def vocab_overlap(corpus_a_texts, corpus_b_texts):
    """|V_a intersect V_b| / |V_a| over token types."""
    v_a = {t for text in corpus_a_texts for t in tokenize(text)}
    v_b = {t for text in corpus_b_texts for t in tokenize(text)}
    if not v_a or not v_b:
        raise ValueError("vocab_overlap requires non-empty corpora")
    return len(v_a & v_b) / len(v_a)


# ---------------------------------------------------------------------------
# JSON-lines I/O


def read_qa_records(path):
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                records.append(RawAnswerRecord(
                    product_id=str(rec["product_id"]),
                    question=rec["question"],
                    answer=rec["answer"],
                    vote_x=int(rec["vote_x"]),
                    vote_y=int(rec["vote_y"]),
                ))
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path} line {line_no}: bad QA record: {exc}") from exc
    return records


def read_review_records(path):
    """Review texts as (product_id, review_id, text) tuples."""
    reviews = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                reviews.append((
                    str(rec["product_id"]),
                    str(rec.get("review_id", f"r{line_no}")),
                    rec["review_text"],
                ))
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path} line {line_no}: bad review record: {exc}") from exc
    return reviews


def split_all_reviews(review_records):
    sentences = []
    for product_id, review_id, text in review_records:
        for idx, sentence in enumerate(split_review_sentences(text)):
            sentences.append(ReviewSentence(
                product_id=product_id, text=sentence,
                review_id=review_id, sentence_index=idx,
            ))
    return sentences


def instance_to_record(inst):
    return {
        "product_id": inst.product_id,
        "question": inst.question,
        "answer": inst.answer,
        "label": inst.label,
        "votes": list(inst.votes),
        "reviews": [
            {"text": slot.text, "score": round(slot.score, 8)}
            for slot in inst.reviews.filled
        ],
    }


def record_to_instance(rec, k):
    slots = [
        ReviewSlot(text=r["text"], tokens=tokenize(r["text"]), score=r["score"])
        for r in rec["reviews"][:k]
    ]
    slots.extend([None] * (k - len(slots)))
    return LabeledQAInstance(
        product_id=rec["product_id"],
        question=rec["question"],
        answer=rec["answer"],
        question_tokens=tokenize(rec["question"]),
        answer_tokens=tokenize(rec["answer"]),
        label=int(rec["label"]),
        votes=tuple(rec["votes"]),
        reviews=ReviewSet(slots=slots),
    )


def write_shard(path, instances):
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(instance_to_record(inst), sort_keys=True) + "\n")


def read_shard(path, k):
    instances = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                instances.append(record_to_instance(json.loads(line), k))
    return instances
