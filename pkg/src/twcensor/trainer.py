"""Splitting, tweet sampling, training with early stopping, and evaluation."""

from __future__ import annotations

import copy
import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .censornet import ModelCheckpoint, ModelConfig, TwCensorNet, UserExample, make_batch
from .datamodel import AccountProfile, AccountTimeline, TweetRecord
from .encoder import EmbeddingStore
from .errors import DivergedLoss, EmptyTimeline, ProfileMissing, TooFewUsers
from .ingest import CohortLabelRecord
from .nn import AdamW, bce_loss
from .stats import precision_recall_f1, roc_auc, threshold_sweep

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
SPLIT_FRACTIONS = (0.70, 0.15, 0.15)


@dataclass
class SplitAssignment:
    assignment: dict[int, str]
    seed: int

    def members(self, split: str) -> list[int]:
        return sorted(a for a, s in self.assignment.items() if s == split)

    def sizes(self) -> dict[str, int]:
        return {s: len(self.members(s)) for s in SPLITS}


def split_users(cohort: Sequence[CohortLabelRecord], seed: int = 0, stratify: bool = True) -> SplitAssignment:
    """70/15/15 user-level split; train absorbs rounding remainders.

    With ``stratify`` the validation and test quotas are shared between the
    classes in proportion to their global frequency.
    """
    n = len(cohort)
    if n < 10:
        raise TooFewUsers(f"need at least 10 users to split, got {n}")
    n_val = int(math.floor(n * SPLIT_FRACTIONS[1]))
    n_test = int(math.floor(n * SPLIT_FRACTIONS[2]))
    rng = np.random.default_rng(seed)
    by_label: dict[int, list[int]] = {}
    for rec in sorted(cohort, key=lambda r: r.account_id):
        by_label.setdefault(rec.label if stratify else 0, []).append(rec.account_id)

    assignment: dict[int, str] = {}
    labels = sorted(by_label)
    val_left, test_left = n_val, n_test
    for j, lab in enumerate(labels):
        ids = by_label[lab]
        rng.shuffle(ids)
        if j == len(labels) - 1:
            nv, nt = val_left, test_left
        else:
            frac = len(ids) / n
            nv, nt = int(round(n_val * frac)), int(round(n_test * frac))
        val_left -= nv
        test_left -= nt
        for a in ids[:nv]:
            assignment[a] = "val"
        for a in ids[nv: nv + nt]:
            assignment[a] = "test"
        for a in ids[nv + nt:]:
            assignment[a] = "train"
    return SplitAssignment(assignment, seed)


def sample_tweets(timeline: AccountTimeline, max_tweets: int = 50, seed: int = 0) -> list[TweetRecord]:
    """All tweets if there are at most ``max_tweets``, else a seeded sample kept in time order."""
    tweets = timeline.tweets
    if not tweets:
        raise EmptyTimeline("timeline has no tweets")
    if len(tweets) <= max_tweets:
        return list(tweets)
    rng = np.random.default_rng([seed, timeline.account_id])
    idx = np.sort(rng.choice(len(tweets), size=max_tweets, replace=False))
    return [tweets[i] for i in idx]


def build_examples(
    cohort: Sequence[CohortLabelRecord],
    timelines: Mapping[int, AccountTimeline],
    store: EmbeddingStore,
    profiles: Mapping[int, AccountProfile] | None = None,
    max_tweets: int = 50,
    seed: int = 0,
    use_profile: bool = False,
) -> list[UserExample]:
    """Encode sampled tweets (and profiles when requested) for every cohort member."""
    out = []
    for rec in cohort:
        tweets = sample_tweets(timelines[rec.account_id], max_tweets, seed)
        emb = store.encode_many(t.text for t in tweets)
        meta = np.array([t.meta_vector() for t in tweets], dtype=np.float32)
        prof = None
        if use_profile:
            profile = (profiles or {}).get(rec.account_id)
            if profile is None:
                raise ProfileMissing(f"no profile for account {rec.account_id}")
            prof = np.asarray(store.encode_profile(profile), dtype=np.float32)
        out.append(UserExample(rec.account_id, int(rec.label), emb, meta, prof))
    return out


def check_no_leakage(splits: Mapping[str, Sequence[UserExample]]) -> None:
    owners = {name: {u.account_id for u in users} for name, users in splits.items()}
    names = list(owners)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            shared = owners[a] & owners[b]
            if shared:
                raise ValueError(f"accounts {sorted(shared)[:5]} appear in both {a} and {b}")


class EarlyStopping:
    """Stop after ``patience`` epochs without an improvement larger than ``min_delta``.

    ``reference_epoch`` is the last epoch that counted as an improvement. It
    trails :attr:`best_epoch` (plain argmax) only when later gains were
    smaller than ``min_delta``.
    """

    def __init__(self, patience: int = 5, min_delta: float = 0.001):
        self.patience, self.min_delta = patience, min_delta
        self.reference = -math.inf
        self.reference_epoch = 0
        self.best = -math.inf
        self.best_epoch = 0
        self.wait = 0

    def update(self, epoch: int, value: float) -> bool:
        """Record ``value`` for ``epoch``; return True when training should stop."""
        if value > self.best:
            self.best, self.best_epoch = value, epoch
        if value > self.reference + self.min_delta:
            self.reference, self.reference_epoch = value, epoch
            self.wait = 0
        else:
            self.wait += 1
        return self.wait >= self.patience


@dataclass
class EvalMetrics:
    n: int
    roc_auc: float
    precision: float
    recall: float
    f1: float
    threshold: float

    def as_dict(self) -> dict[str, float]:
        return {"n": self.n, "roc_auc": self.roc_auc, "precision": self.precision,
                "recall": self.recall, "f1": self.f1, "threshold": self.threshold}


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_auc: float


@dataclass
class TrainReport:
    variant: str
    seed: int
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False
    threshold: float = 0.5
    val_f1: float = 0.0
    test: EvalMetrics | None = None

    @property
    def epochs_run(self) -> int:
        return len(self.epochs)

    @property
    def best_val_auc(self) -> float:
        return max(e.val_auc for e in self.epochs) if self.epochs else float("nan")

    def metrics_lines(self) -> list[str]:
        lines = [
            f"variant={self.variant}",
            f"seed={self.seed}",
            f"epochs_run={self.epochs_run}",
            f"best_epoch={self.best_epoch}",
            f"best_val_auc={self.best_val_auc:.6f}",
            f"stopped_early={int(self.stopped_early)}",
            f"threshold={self.threshold:.2f}",
            f"val_f1={self.val_f1:.6f}",
        ]
        if self.test is not None:
            lines += [f"test_{k}={v:.6f}" if isinstance(v, float) else f"test_{k}={v}"
                      for k, v in self.test.as_dict().items()]
        return lines

    def write(self, metrics_path, curves_path=None) -> None:
        Path(metrics_path).write_text("\n".join(self.metrics_lines()) + "\n", encoding="utf-8")
        if curves_path is not None:
            with open(curves_path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["epoch", "train_loss", "val_auc"])
                for e in self.epochs:
                    w.writerow([e.epoch, f"{e.train_loss:.8g}", f"{e.val_auc:.8g}"])


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    chunks = [order[s: s + batch_size] for s in range(0, n, batch_size)]
    # a lone trailing user cannot feed training-mode batch norm reliably
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        lone = chunks.pop()
        chunks[-1] = np.concatenate([chunks[-1], lone])
    return chunks


def evaluate(checkpoint: ModelCheckpoint, users: Sequence[UserExample]) -> EvalMetrics:
    """Eval-mode ROC-AUC and precision/recall/F1 at the checkpoint threshold."""
    scores = checkpoint.model.predict(users)
    labels = np.array([u.label for u in users])
    p, r, f1 = precision_recall_f1(scores, labels, checkpoint.threshold)
    return EvalMetrics(len(users), roc_auc(scores, labels), p, r, f1, checkpoint.threshold)


def train(
    config: ModelConfig,
    data: Mapping[str, Sequence[UserExample]],
    seed: int = 0,
    epochs: int = 20,
    batch_size: int = 16,
    lr: float = 2e-3,
    weight_decay: float = 0.01,
    patience: int = 5,
    min_delta: float = 0.001,
    dtype=np.float32,
) -> tuple[ModelCheckpoint, TrainReport]:
    """Fit one model variant and select its checkpoint and threshold on validation.

    ``data`` maps ``"train"``, ``"val"`` and optionally ``"test"`` to user
    examples. Parameters from the epoch with the highest validation ROC-AUC
    are restored before the threshold sweep and the test evaluation.
    """
    check_no_leakage(data)
    train_users, val_users = list(data["train"]), list(data["val"])
    test_users = list(data.get("test", ()))
    model = TwCensorNet(config, seed=seed, dtype=dtype)
    opt = AdamW(model.params(), lr=lr, weight_decay=weight_decay)
    stopper = EarlyStopping(patience, min_delta)
    report = TrainReport(variant=config.variant, seed=seed)
    val_labels = np.array([u.label for u in val_users])
    best_tensors = None

    for epoch in range(1, epochs + 1):
        rng = np.random.default_rng([seed, epoch])
        losses = []
        for idx in _batches(len(train_users), batch_size, rng):
            batch = make_batch([train_users[i] for i in idx], model.dtype, config.use_profile)
            scores = model.forward(batch, training=True, rng=rng)
            loss, dscores = bce_loss(scores, batch.labels)
            if not math.isfinite(loss):
                raise DivergedLoss(f"non-finite loss at epoch {epoch}")
            model.backward(dscores)
            opt.step(model.grads())
            losses.append(loss * len(idx))
        val_auc = roc_auc(model.predict(val_users), val_labels)
        report.epochs.append(EpochRecord(epoch, float(sum(losses) / len(train_users)), val_auc))
        log.info("%s epoch %d loss %.4f val_auc %.4f", config.variant, epoch, report.epochs[-1].train_loss, val_auc)
        improved = val_auc > stopper.best
        stop = stopper.update(epoch, val_auc)
        if improved:
            best_tensors = copy.deepcopy(model.tensors())
        if stop:
            report.stopped_early = True
            break

    if best_tensors is not None:
        for name, arr in model.params().items():
            arr[...] = best_tensors[name]
        model.set_state({k: best_tensors[k] for k in model.state()})
    report.best_epoch = stopper.best_epoch
    tau, val_f1 = threshold_sweep(model.predict(val_users), val_labels)
    report.threshold, report.val_f1 = tau, val_f1
    checkpoint = ModelCheckpoint(model, tau, {
        "seed": str(seed),
        "epochs_run": str(report.epochs_run),
        "best_epoch": str(report.best_epoch),
        "best_val_auc": f"{report.best_val_auc:.6f}",
    })
    if test_users:
        report.test = evaluate(checkpoint, test_users)
    return checkpoint, report
