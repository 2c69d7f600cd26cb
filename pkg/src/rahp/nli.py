"""Siamese textual-inference network, trained on an SNLI-format corpus.

The network shares its architecture (and parameter names) with the
review-answer coherence pathway: embeddings, context BiLSTM, coherence
BiLSTM and the 3-way prediction MLP. After training, the checkpoint holds
exactly the tensors named ``embedding.*``, ``bilstm_c.*``, ``bilstm_ra.*``
and ``mlp_ra.*``, which is precisely the transfer contract the main model
loads.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import ra as ra_mod
from .checkpoint import save_checkpoint
from .embedding import (
    CharConvParams,
    EmbeddingParams,
    Vocabulary,
    WordEmbeddingTable,
    char_vocab_from_tokens,
    embed_sequence,
    tokenize,
)
from .encoders import BiLSTMParams, bilstm_encode, full_mask
from .instances import NLI_LABELS, NLIInstance
from .optim import Adam
from .tensor import DEFAULT_DTYPE, concat, getitem, mean, neg, no_grad, softmax_masked, stack, tlog

log = logging.getLogger(__name__)


class TrainingDiverged(Exception):
    """Raised when a training loss becomes non-finite."""


@dataclass
class ParseStats:
    total: int = 0
    kept: int = 0
    skipped_label: int = 0
    skipped_malformed: int = 0


def parse_nli_corpus(path):
    """Read (gold_label, sentence1, sentence2) records from a TSV file.

    A header line naming ``gold_label``/``sentence1``/``sentence2`` maps
    columns; otherwise the first three columns are taken in that order.
    Records with an undetermined gold label ("-") or any other unknown
    label are skipped and counted.
    """
    stats = ParseStats()
    instances = []
    label_index = {label: i for i, label in enumerate(NLI_LABELS)}
    columns = (0, 1, 2)
    with open(path, encoding="utf-8") as fh:
        first = True
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if first:
                first = False
                if "gold_label" in fields:
                    columns = (
                        fields.index("gold_label"),
                        fields.index("sentence1"),
                        fields.index("sentence2"),
                    )
                    continue
            stats.total += 1
            if len(fields) <= max(columns):
                stats.skipped_malformed += 1
                continue
            label_text = fields[columns[0]].strip().lower()
            if label_text not in label_index:
                stats.skipped_label += 1
                continue
            premise = tokenize(fields[columns[1]])
            hypothesis = tokenize(fields[columns[2]])
            if not premise or not hypothesis:
                stats.skipped_malformed += 1
                continue
            instances.append(
                NLIInstance(
                    premise_tokens=premise,
                    hypothesis_tokens=hypothesis,
                    label=label_index[label_text],
                )
            )
            stats.kept += 1
    if not instances:
        warnings.warn(f"{path}: no usable records parsed")
    log.info(
        "parsed %s: %d kept, %d label-skipped, %d malformed",
        path, stats.kept, stats.skipped_label, stats.skipped_malformed,
    )
    return instances, stats


@dataclass
class NLIParams:
    """Exactly the transferable parameter groups, nothing else."""

    embedding: EmbeddingParams
    bilstm_c: BiLSTMParams
    ra: ra_mod.RAParams

    @classmethod
    def build(cls, config, vocab, char_vocab, rng, dtype=DEFAULT_DTYPE, word_table=None):
        if word_table is None:
            word_table = WordEmbeddingTable.random(vocab, config.word_dim, rng, dtype)
        char = CharConvParams.build(
            char_vocab, config.char_dim, config.char_filters,
            config.char_filter_widths, rng, dtype,
        )
        return cls(
            embedding=EmbeddingParams(word=word_table, char=char),
            bilstm_c=BiLSTMParams.build(config.encoder_input_dim, config.hidden_size, rng, dtype),
            ra=ra_mod.RAParams.build(
                2 * config.hidden_size, config.hidden_size, config.mlp_hidden,
                len(NLI_LABELS), rng, dtype,
            ),
        )

    def named(self):
        out = {}
        for name, tensor in self.embedding.named():
            out[name] = tensor
        for name, tensor in self.bilstm_c.named("bilstm_c"):
            out[name] = tensor
        for name, tensor in self.ra.named():
            out[name] = tensor
        return out

    def zero_grad(self):
        for tensor in self.named().values():
            tensor.zero_grad()

    def apply_grad_masks(self, config):
        table = self.embedding.word.table
        if table.grad is not None:
            mask = self.embedding.word.grad_row_mask(config.freeze_pretrained)
            table.grad *= mask[:, None]

    def snapshot(self):
        return {name: t.data.copy() for name, t in self.named().items()}

    def restore(self, snapshot):
        for name, t in self.named().items():
            t.data[...] = snapshot[name]


def _encode_side(tokens, max_len, params, config):
    tokens = tokens[:max_len]
    mask = full_mask(len(tokens))
    rows = embed_sequence(
        tokens, params.embedding,
        use_char=not config.no_char_embedding,
        max_word_len=config.max_word_len,
    )
    context = bilstm_encode(rows, mask, params.bilstm_c.fwd, params.bilstm_c.bwd)
    return context, mask

def nli_logits(premise_tokens, hypothesis_tokens, params, config):
    """Raw 3-way logits; the premise follows the review truncation rule
    and the hypothesis the answer rule, matching the transfer target."""
    if not premise_tokens or not hypothesis_tokens:
        raise ValueError("empty sequence")
    c_p, mask_p = _encode_side(premise_tokens, config.max_r_len, params, config)
    c_h, mask_h = _encode_side(hypothesis_tokens, config.max_a_len, params, config)
    o_p = ra_mod.encode_summary(c_p, mask_p, params.ra)
    o_h = ra_mod.encode_summary(c_h, mask_h, params.ra)
    return params.ra.mlp.apply(concat([o_p, o_h]))


def nli_forward(premise_tokens, hypothesis_tokens, params, config):
    """3-class probability vector (entailment, neutral, contradiction)."""
    logits = nli_logits(premise_tokens, hypothesis_tokens, params, config)
    return softmax_masked(logits, full_mask(len(NLI_LABELS)))


def cross_entropy(probs, label):
    return neg(tlog(getitem(probs, label)))


@dataclass
class PretrainResult:
    checkpoint_path: str
    history: list = field(default_factory=list)
    best_val_accuracy: float = 0.0
    final_train_accuracy: float = 0.0
    epochs_run: int = 0


def _accuracy(instances, params, config):
    if not instances:
        return 0.0
    correct = 0
    with no_grad():
        for inst in instances:
            probs = nli_forward(inst.premise_tokens, inst.hypothesis_tokens, params, config)
            correct += int(np.argmax(probs.data) == inst.label)
    return correct / len(instances)


def pretrain(instances, config, checkpoint_path, vocab=None, char_vocab=None,
             word_table=None, rng=None):
    """Train the inference network and export the transfer checkpoint.

    Early-stops on validation accuracy (patience from the config); when
    ``config.stop_train_accuracy`` is set, stops as soon as training
    accuracy reaches it and exports the current parameters instead of the
    best-validation ones.
    """
    if not instances:
        raise ValueError("empty pre-training corpus")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    if vocab is None:
        vocab = Vocabulary.build(
            t for inst in instances for t in inst.premise_tokens + inst.hypothesis_tokens
        )
    if char_vocab is None:
        char_vocab = char_vocab_from_tokens(vocab.tokens)
    params = NLIParams.build(config, vocab, char_vocab, rng, word_table=word_table)
    optimizer = Adam(
        params.named(), learning_rate=config.learning_rate,
        beta1=config.beta1, beta2=config.beta2, eps=config.adam_eps,
    )

    n_val = len(instances) // 10 if len(instances) >= 10 else 0
    perm = rng.permutation(len(instances))
    val_set = [instances[i] for i in perm[:n_val]]
    train_set = [instances[i] for i in perm[n_val:]]
    if not val_set:
        val_set = train_set

    result = PretrainResult(checkpoint_path=checkpoint_path)
    best_val = -1.0
    best_snapshot = params.snapshot()
    stall = 0
    stop_on_train = config.stop_train_accuracy > 0.0

    for epoch in range(1, config.nli_epochs + 1):
        order = rng.permutation(len(train_set))
        epoch_loss = 0.0
        for start in range(0, len(order), config.nli_batch_size):
            batch = [train_set[i] for i in order[start:start + config.nli_batch_size]]
            params.zero_grad()
            losses = [
                cross_entropy(
                    nli_forward(inst.premise_tokens, inst.hypothesis_tokens, params, config),
                    inst.label,
                )
                for inst in batch
            ]
            batch_loss = mean(stack(losses))
            value = float(batch_loss.data)
            if not np.isfinite(value):
                raise TrainingDiverged(
                    f"non-finite pre-training loss at epoch {epoch},"
                    f" batch starting at {start}"
                )
            batch_loss.backward()
            params.apply_grad_masks(config)
            optimizer.step()
            epoch_loss += value * len(batch)
        epoch_loss /= len(train_set)

        train_acc = _accuracy(train_set, params, config)
        val_acc = _accuracy(val_set, params, config)
        result.history.append(
            {"epoch": epoch, "loss": epoch_loss, "train_accuracy": train_acc,
             "val_accuracy": val_acc}
        )
        result.epochs_run = epoch
        result.final_train_accuracy = train_acc
        log.info("pretrain epoch %d: loss %.4f train acc %.3f val acc %.3f",
                 epoch, epoch_loss, train_acc, val_acc)

        if val_acc > best_val:
            best_val = val_acc
            best_snapshot = params.snapshot()
            stall = 0
        else:
            stall += 1
        result.best_val_accuracy = best_val

        if stop_on_train and train_acc >= config.stop_train_accuracy:
            break
        if not stop_on_train and stall >= config.nli_patience:
            break

    if not stop_on_train:
        params.restore(best_snapshot)
    save_checkpoint(checkpoint_path, params.named(), config.to_dict())
    return result, params, vocab, char_vocab
