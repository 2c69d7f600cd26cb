"""Shared record types for QA pairs, review slots and NLI pairs."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class RawAnswerRecord:
    """One community answer with its helpfulness votes [X, Y]."""

    product_id: str
    question: str
    answer: str
    vote_x: int
    vote_y: int

    def __post_init__(self):
        if self.vote_x < 0 or self.vote_y < 0:
            raise ValueError(f"negative votes: [{self.vote_x}, {self.vote_y}]")
        if self.vote_x > self.vote_y:
            raise ValueError(
                f"upvotes exceed total votes: [{self.vote_x}, {self.vote_y}]"
            )
        if not self.question.strip() or not self.answer.strip():
            raise ValueError("question and answer must be non-empty")


@dataclass
class ReviewSentence:
    product_id: str
    text: str
    review_id: str
    sentence_index: int


@dataclass
class ReviewSlot:
    """One retrieved review sentence with its retrieval score."""

    text: str
    tokens: list
    score: float


@dataclass
class ReviewSet:
    """Fixed number of review slots, highest retrieval score first.

    ``None`` marks an EMPTY slot (fewer sentences retrieved than slots);
    empty slots always trail the filled ones.
    """

    slots: list

    def __post_init__(self):
        seen_empty = False
        prev_score = None
        for slot in self.slots:
            if slot is None:
                seen_empty = True
                continue
            if seen_empty:
                raise ValueError("EMPTY review slots must trail filled slots")
            if prev_score is not None and slot.score > prev_score:
                raise ValueError("review slots must be ordered by descending score")
            prev_score = slot.score

    @property
    def k(self):
        return len(self.slots)

    @property
    def filled(self):
        return [s for s in self.slots if s is not None]

    @classmethod
    def empty(cls, k):
        return cls(slots=[None] * k)


@dataclass
class LabeledQAInstance:
    """A labeled QA pair plus its retrieved review sentences."""

    product_id: str
    question: str
    answer: str
    question_tokens: list
    answer_tokens: list
    label: int
    votes: tuple
    reviews: ReviewSet


NLI_LABELS = ("entailment", "neutral", "contradiction")


@dataclass
class NLIInstance:
    premise_tokens: list
    hypothesis_tokens: list
    label: int  # index into NLI_LABELS

    def __post_init__(self):
        if self.label not in (0, 1, 2):
            raise ValueError(f"NLI label out of range: {self.label}")
        if not self.premise_tokens or not self.hypothesis_tokens:
            raise ValueError("premise and hypothesis must be non-empty")
