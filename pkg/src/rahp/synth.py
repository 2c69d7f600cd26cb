"""Synthetic corpus generators for desk-scale training and verification.

Two constructions matter:

* a 3-way inference corpus that is separable by construction (hypothesis
  is a substring of the premise for entailment, drawn from a disjoint
  vocabulary for contradiction, partial overlap for neutral),
* a review-agreement QA corpus where the helpful label equals agreement
  between the answer's polarity token and the product reviews' polarity
  token, while question/answer text alone carries no label signal. Only
  a model that reads the reviews can beat chance on held-out data.

Run ``python -m rahp.synth --out DIR`` to materialize a demo corpus.
"""

from __future__ import annotations

import argparse
import json
import os

import numpy as np

_FILLERS = [
    "alpha", "bravo", "delta", "echo", "fox", "golf", "hotel", "india",
    "juliet", "kilo", "lima", "mike", "nova", "oscar", "papa", "quebec",
    "romeo", "sierra", "tango", "union", "victor", "whisk", "xray", "yank",
]

_NLI_POOL_A = [
    "river", "stone", "forest", "meadow", "cloud", "valley", "breeze",
    "harbor", "lantern", "orchard", "summit", "trail", "willow", "ember",
    "garden", "hollow", "ridge", "thicket", "shore", "brook",
]
_NLI_POOL_B = [
    "engine", "circuit", "piston", "gearbox", "voltage", "dynamo",
    "turbine", "sprocket", "flywheel", "manifold",
]


def write_word_vectors(path, words, dim, seed=0):
    """Deterministic text vector file covering the given words."""
    rng = np.random.default_rng(seed)
    with open(path, "w", encoding="utf-8") as fh:
        for word in words:
            vec = rng.uniform(-0.5, 0.5, size=dim)
            fh.write(word + " " + " ".join(f"{v:.6f}" for v in vec) + "\n")


def separable_nli_corpus(n=60, seed=0):
    """(label, sentence1, sentence2) rows, n/3 per class."""
    rng = np.random.default_rng(seed)
    rows = []
    per_class = n // 3
    extra = n - 3 * per_class
    counts = [per_class + (1 if i < extra else 0) for i in range(3)]

    for _ in range(counts[0]):  # entailment: hypothesis inside premise
        words = list(rng.choice(_NLI_POOL_A, size=6, replace=False))
        start = int(rng.integers(0, 4))
        span = int(rng.integers(2, 4))
        rows.append(("entailment", " ".join(words), " ".join(words[start:start + span])))
    for _ in range(counts[1]):  # neutral: partial overlap
        words = list(rng.choice(_NLI_POOL_A, size=6, replace=False))
        outside = [w for w in _NLI_POOL_A if w not in words]
        hyp = [words[int(rng.integers(0, 6))]] + list(rng.choice(outside, size=2, replace=False))
        rows.append(("neutral", " ".join(words), " ".join(hyp)))
    for _ in range(counts[2]):  # contradiction: disjoint vocabulary
        words = list(rng.choice(_NLI_POOL_A, size=6, replace=False))
        hyp = list(rng.choice(_NLI_POOL_B, size=3, replace=False))
        rows.append(("contradiction", " ".join(words), " ".join(hyp)))

    order = rng.permutation(len(rows))
    return [rows[i] for i in order]


def write_nli_tsv(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("gold_label\tsentence1\tsentence2\n")
        for label, s1, s2 in rows:
            fh.write(f"{label}\t{s1}\t{s2}\n")


def review_agreement_corpus(n=2000, n_products=100, seed=0,
                            helpful_votes=((2, 2), (3, 3), (4, 4)),
                            unhelpful_votes=((0, 2), (1, 3), (0, 4), (0, 1))):
    """QA + review JSON-line rows where helpfulness = polarity agreement.

    Returns (qa_rows, review_rows, vocabulary words).
    """
    rng = np.random.default_rng(seed)
    polarity = {"pos": "great", "neg": "awful"}
    product_polarity = {}
    review_rows = []
    for p in range(n_products):
        product_id = f"prod{p:04d}"
        pol = "pos" if rng.random() < 0.5 else "neg"
        product_polarity[product_id] = pol
        token = polarity[pol]
        sentences = [
            f"the battery life is {token}.",
            f"this battery is {token} overall.",
            f"the {rng.choice(_FILLERS)} {rng.choice(_FILLERS)} arrived quickly.",
            f"my {rng.choice(_FILLERS)} came with a {rng.choice(_FILLERS)} box.",
        ]
        review_rows.append({"product_id": product_id, "review_text": " ".join(sentences)})

    qa_rows = []
    product_ids = sorted(product_polarity)
    for _ in range(n):
        product_id = product_ids[int(rng.integers(0, n_products))]
        answer_pol = "pos" if rng.random() < 0.5 else "neg"
        agree = answer_pol == product_polarity[product_id]
        votes = helpful_votes[int(rng.integers(0, len(helpful_votes)))] if agree \
            else unhelpful_votes[int(rng.integers(0, len(unhelpful_votes)))]
        question = f"how is the battery life {rng.choice(_FILLERS)}"
        answer = f"it is {polarity[answer_pol]} {rng.choice(_FILLERS)}"
        qa_rows.append({
            "product_id": product_id,
            "question": question,
            "answer": answer,
            "vote_x": int(votes[0]),
            "vote_y": int(votes[1]),
        })

    vocabulary = sorted({
        w
        for row in qa_rows
        for w in (row["question"] + " " + row["answer"]).split()
    } | {
        w.strip(".")
        for row in review_rows
        for w in row["review_text"].split()
    } | {"."})
    return qa_rows, review_rows, vocabulary


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def materialize_demo(out_dir, n_qa=400, n_products=40, dim=32, nli_size=60, seed=0):
    """Write a complete small corpus set under out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    qa_rows, review_rows, vocabulary = review_agreement_corpus(
        n=n_qa, n_products=n_products, seed=seed,
    )
    write_jsonl(os.path.join(out_dir, "qa.jsonl"), qa_rows)
    write_jsonl(os.path.join(out_dir, "reviews.jsonl"), review_rows)
    nli_rows = separable_nli_corpus(n=nli_size, seed=seed)
    write_nli_tsv(os.path.join(out_dir, "nli.tsv"), nli_rows)
    words = sorted(set(vocabulary)
                   | {w for _l, s1, s2 in nli_rows for w in (s1 + " " + s2).split()})
    write_word_vectors(os.path.join(out_dir, "vectors.txt"), words, dim=dim, seed=seed)
    return {
        "qa": os.path.join(out_dir, "qa.jsonl"),
        "reviews": os.path.join(out_dir, "reviews.jsonl"),
        "nli": os.path.join(out_dir, "nli.tsv"),
        "vectors": os.path.join(out_dir, "vectors.txt"),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description="generate synthetic demo corpora")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--qa-size", type=int, default=400)
    parser.add_argument("--products", type=int, default=40)
    parser.add_argument("--nli-size", type=int, default=60)
    parser.add_argument("--dim", type=int, default=32)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    paths = materialize_demo(
        args.out, n_qa=args.qa_size, n_products=args.products,
        dim=args.dim, nli_size=args.nli_size, seed=args.seed,
    )
    for kind, path in paths.items():
        print(f"{kind}: {path}")


if __name__ == "__main__":
    main()
