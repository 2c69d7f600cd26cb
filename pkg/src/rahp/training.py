"""Mini-batch training and evaluation for the helpfulness model.

Single-writer contract: the training loop is the only mutator of the
parameters; evaluation passes run in no-grad mode on parameter snapshots
and may be parallelized by the caller.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .metrics import EvalReport
from .model import forward, loss
from .nli import TrainingDiverged
from .optim import Adam
from .tensor import mean, no_grad, stack

log = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_report: EvalReport | None = None
    train_accuracy: float | None = None


@dataclass
class TrainResult:
    history: list = field(default_factory=list)
    best_epoch: int = 0
    best_val_auroc: float = 0.0
    diverged: bool = False
    stop_reason: str = ""


def model_scores(instances, params, config):
    """Helpfulness probabilities for a batch of instances (no grad)."""
    scores = np.empty(len(instances), dtype=np.float64)
    with no_grad():
        for i, inst in enumerate(instances):
            scores[i] = float(forward(inst, params, config).data)
    return scores


def evaluate_model(instances, params, config, threshold=0.5):
    """EvalReport plus the per-instance scores it was computed from."""
    if not instances:
        raise ValueError("cannot evaluate an empty shard")
    scores = model_scores(instances, params, config)
    labels = [inst.label for inst in instances]
    report = EvalReport.from_scores(
        scores, labels, config_fingerprint=config.fingerprint(), threshold=threshold,
    )
    return report, scores


def train_accuracy(instances, params, config, threshold=0.5):
    scores = model_scores(instances, params, config)
    preds = (scores >= threshold).astype(int)
    labels = np.array([inst.label for inst in instances])
    return float((preds == labels).mean())


def train_rahp(train_set, valid_set, params, config, rng=None):
    """Train with Adam and early stopping on validation AUROC.

    Leaves ``params`` holding the best-validation parameters (or the
    last finite ones if the loss diverges: the result flags it and
    training aborts at that point). When ``config.stop_train_accuracy``
    is positive, training instead stops once train accuracy reaches the
    target and keeps the current parameters.
    """
    if not train_set:
        raise ValueError("empty training shard")
    if not valid_set:
        raise ValueError("empty validation shard")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    optimizer = Adam(
        params.named(), learning_rate=config.learning_rate,
        beta1=config.beta1, beta2=config.beta2, eps=config.adam_eps,
    )
    result = TrainResult()
    best_auroc = -1.0
    best_snapshot = params.snapshot()
    last_good = params.snapshot()
    stall = 0
    stop_on_train = config.stop_train_accuracy > 0.0

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_set))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = [train_set[i] for i in order[start:start + config.batch_size]]
            params.zero_grad()
            losses = [
                loss(
                    forward(inst, params, config, dropout_rate=config.dropout, rng=rng),
                    inst.label,
                )
                for inst in batch
            ]
            batch_loss = mean(stack(losses))
            value = float(batch_loss.data)
            if not np.isfinite(value):
                params.restore(last_good)
                result.diverged = True
                result.stop_reason = (
                    f"non-finite loss at epoch {epoch}, batch starting at {start};"
                    " restored last finite parameters"
                )
                log.error(result.stop_reason)
                return result
            batch_loss.backward()
            params.apply_grad_masks()
            optimizer.step()
            epoch_loss += value * len(batch)
        epoch_loss /= len(train_set)
        last_good = params.snapshot()

        record = EpochRecord(epoch=epoch, train_loss=epoch_loss)
        if stop_on_train:
            record.train_accuracy = train_accuracy(train_set, params, config)
        val_report, _scores = evaluate_model(valid_set, params, config)
        record.val_report = val_report
        result.history.append(record)
        log.info(
            "epoch %d: loss %.4f val AUROC %.4f val F1 %.4f%s",
            epoch, epoch_loss, val_report.auroc, val_report.f1,
            f" train acc {record.train_accuracy:.3f}" if record.train_accuracy is not None else "",
        )

        if val_report.auroc > best_auroc:
            best_auroc = val_report.auroc
            result.best_epoch = epoch
            best_snapshot = params.snapshot()
            stall = 0
        else:
            stall += 1
        result.best_val_auroc = best_auroc

        if stop_on_train and record.train_accuracy >= config.stop_train_accuracy:
            result.stop_reason = f"train accuracy target reached at epoch {epoch}"
            return result
        if not stop_on_train and stall >= config.patience:
            result.stop_reason = f"no validation improvement for {config.patience} epochs"
            break

    if not result.stop_reason:
        result.stop_reason = "epoch budget exhausted"
    if not stop_on_train:
        params.restore(best_snapshot)
    return result
