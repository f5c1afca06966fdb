"""Noise-aware training: loss-based sample selection plus embedding mixup.

The procedure alternates between two views of the (possibly mislabeled)
training set. At the start of each adaptive epoch, per-sample losses are fit
with a two-component Gaussian mixture; samples whose posterior under the
low-loss component clears a threshold keep their labels (the labeled set),
the rest have their labels replaced by the model's own sharpened predictions
(the unlabeled set). Training then minimizes

    cross-entropy on convex combinations of embedding/target pairs
    + lambda_p * confidence loss on the unlabeled set
    + lambda_r * symmetric-KL agreement between two dropout passes

Warm-up epochs of plain cross-entropy precede selection so that early losses
are informative. A per-class loss standardization switch makes selection
robust when different classes have different loss scales.

Ground-truth corruption flags, when present on a dataset, are used only to
report selection quality; they never influence training decisions.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .common import NumericError, subseed
from .data import Dataset, one_hot
from .encoder import (
    BatchItem,
    FeatureVector,
    Gradients,
    ModelParams,
    OptimizerState,
    adam_step,
    backward,
    encode,
    featurize_text,
    head_forward,
    init_optimizer,
    init_params,
    predict_proba,
    rdrop_from_probs,
    softmax,
)
from .gmm import fit_gmm, posterior_clean

_MIX_KEY_BASE = 1_000_000


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and optimizer hyperparameters for the text encoder."""

    num_buckets: int = 2**18
    hidden: int = 64
    dropout_rate: float = 0.3
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


@dataclass(frozen=True)
class SelfMixConfig:
    """Knobs of the adaptive procedure.

    Exactly one of ``warmup_epochs``/``warmup_samples`` must be set; the
    warm-up phase is measured either in full passes or in a number of
    training examples. ``total_epochs`` counts warm-up and adaptive epochs
    together. ``term_normalization`` selects whether the confidence and
    agreement terms are averaged over the unlabeled members of each batch
    (``"mean"``) or summed (``"sum"``).
    """

    tau: float = 0.5
    lambda_p: float = 0.2
    lambda_r: float = 0.3
    alpha: float = 0.75
    temperature: float = 0.5
    warmup_epochs: int | None = 2
    warmup_samples: int | None = None
    total_epochs: int = 6
    batch_size: int = 32
    class_regularize: bool = False
    term_normalization: str = "mean"
    seed: int = 0

    def __post_init__(self) -> None:
        if (self.warmup_epochs is None) == (self.warmup_samples is None):
            raise ValueError("set exactly one of warmup_epochs and warmup_samples")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie strictly between 0 and 1")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")
        if self.lambda_p < 0.0 or self.lambda_r < 0.0:
            raise ValueError("loss weights must be non-negative")
        if self.total_epochs < 1:
            raise ValueError("total_epochs must be at least 1")
        if self.warmup_epochs is not None and not (
            0 <= self.warmup_epochs <= self.total_epochs
        ):
            raise ValueError("warmup_epochs must lie in [0, total_epochs]")
        if self.warmup_samples is not None and self.warmup_samples < 0:
            raise ValueError("warmup_samples must be non-negative")
        if self.term_normalization not in ("mean", "sum"):
            raise ValueError("term_normalization must be 'mean' or 'sum'")


@dataclass(frozen=True)
class DataSplit:
    """Result of one selection round.

    ``labeled_ids`` hold every id whose clean posterior is at least ``tau``;
    ``unlabeled_ids`` hold the rest. ``posteriors`` maps every id to its
    clean probability.
    """

    labeled_ids: tuple[int, ...]
    unlabeled_ids: tuple[int, ...]
    posteriors: dict[int, float]
    tau: float
    epoch: int


@dataclass(frozen=True)
class MixedBatch:
    """Convex combinations of embedding/target pairs, biased toward the
    first element of each pair (mixing coefficients lie in [0.5, 1])."""

    embeddings: np.ndarray  # (m, hidden)
    targets: np.ndarray  # (m, num_classes)
    lam: np.ndarray  # (m,) the realized coefficients, all >= 0.5


@dataclass
class EpochStats:
    """One row of the training report."""

    test_acc: float
    sel_precision: float
    sel_recall: float
    sel_f1: float
    l_mix: float
    l_p: float
    l_r: float
    labeled_count: int


REPORT_CSV_FIELDS = (
    "epoch",
    "test_acc",
    "sel_precision",
    "sel_recall",
    "sel_f1",
    "l_mix",
    "l_p",
    "l_r",
    "labeled_count",
)


@dataclass
class TrainReport:
    """Outcome of a training run.

    ``as_dict`` exposes the serializable summary; ``config`` echoes every
    model/procedure knob so a report is self-describing. ``final_params``,
    ``step_acc`` (accuracy every K optimizer steps), ``warnings`` and the
    optional ``per_epoch_losses`` snapshots ride along for callers that
    want them but are not part of the JSON summary.
    """

    epochs: int
    best_acc: float
    last_acc: float
    per_epoch: list[EpochStats]
    config: dict = field(default_factory=dict)
    step_acc: list[tuple[int, float]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    final_params: ModelParams | None = None
    per_epoch_losses: list[np.ndarray] | None = None

    def as_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "best_acc": self.best_acc,
            "last_acc": self.last_acc,
            "per_epoch": [
                {
                    "test_acc": s.test_acc,
                    "sel_precision": s.sel_precision,
                    "sel_recall": s.sel_recall,
                    "sel_f1": s.sel_f1,
                    "l_mix": s.l_mix,
                    "l_p": s.l_p,
                    "l_r": s.l_r,
                    "labeled_count": s.labeled_count,
                }
                for s in self.per_epoch
            ],
        }

    def csv_rows(self) -> list[list]:
        rows = [list(REPORT_CSV_FIELDS)]
        for e, s in enumerate(self.per_epoch):
            rows.append(
                [
                    e,
                    s.test_acc,
                    s.sel_precision,
                    s.sel_recall,
                    s.sel_f1,
                    s.l_mix,
                    s.l_p,
                    s.l_r,
                    s.labeled_count,
                ]
            )
        return rows


# ---------------------------------------------------------------------------
# Elementary operations
# ---------------------------------------------------------------------------


def per_sample_losses(
    params: ModelParams,
    dataset: Dataset,
    features: list[FeatureVector] | None = None,
) -> np.ndarray:
    """Cross-entropy of each observed label with dropout off."""
    losses, _ = _losses_and_probs(params, dataset, features)
    return losses


def _losses_and_probs(
    params: ModelParams,
    dataset: Dataset,
    features: list[FeatureVector] | None,
) -> tuple[np.ndarray, np.ndarray]:
    if features is None:
        features = [featurize_text(ex.text, params.num_buckets) for ex in dataset]
    losses = np.empty(len(dataset))
    probs = np.empty((len(dataset), params.num_classes))
    for i, ex in enumerate(dataset):
        p = predict_proba(params, features[i])
        probs[i] = p
        losses[i] = -math.log(max(float(p[ex.observed_label]), 1e-300))
    return losses, probs


def class_regularize(
    losses: np.ndarray, labels: np.ndarray, num_classes: int | None = None
) -> np.ndarray:
    """Standardize losses within each observed class (population std).

    Removes per-class loss-scale differences so that a single mixture split
    remains meaningful when label noise difficulty varies by class. A class
    whose losses are all equal maps to zeros. ``num_classes``, when given,
    bounds the label range; classes with no members are simply absent.
    """
    losses = np.asarray(losses, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if losses.shape != labels.shape:
        raise ValueError("losses and labels must have matching shapes")
    if labels.size and labels.min() < 0:
        raise ValueError("labels must be non-negative")
    if num_classes is not None and labels.size and labels.max() >= num_classes:
        raise ValueError(
            f"label {int(labels.max())} outside [0, {num_classes})"
        )
    out = np.empty_like(losses)
    for c in np.unique(labels):
        member = labels == c
        mu = losses[member].mean()
        sigma = max(float(losses[member].std()), 1e-12)
        out[member] = (losses[member] - mu) / sigma
    return out


def select_split(
    losses: np.ndarray,
    tau: float,
    ids: Iterable[int] | None = None,
    *,
    seed: int = 0,
    epoch: int = 0,
) -> DataSplit:
    """Fit the loss mixture and threshold clean posteriors at ``tau``.

    ``ids`` names the sample behind each loss; it defaults to positions
    0..n-1.
    """
    losses = np.asarray(losses, dtype=np.float64)
    ids = tuple(range(losses.size)) if ids is None else tuple(int(i) for i in ids)
    if losses.size != len(ids):
        raise ValueError("losses and ids must have the same length")
    params = fit_gmm(losses, seed=seed)
    w = posterior_clean(params, losses)
    labeled = tuple(i for i, wi in zip(ids, w) if wi >= tau)
    unlabeled = tuple(i for i, wi in zip(ids, w) if wi < tau)
    return DataSplit(
        labeled_ids=labeled,
        unlabeled_ids=unlabeled,
        posteriors={i: float(wi) for i, wi in zip(ids, w)},
        tau=float(tau),
        epoch=epoch,
    )


def sharpen(p: np.ndarray, temperature: float) -> np.ndarray:
    """Raise a distribution to 1/temperature and renormalize."""
    if temperature <= 0.0:
        raise ValueError("temperature must be positive")
    p = np.asarray(p, dtype=np.float64)
    powered = p ** (1.0 / temperature)
    total = powered.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise NumericError(
            "sharpen: distribution mass is zero or non-finite after tempering"
        )
    return powered / total


def embmix(
    emb_a: np.ndarray,
    targets_a: np.ndarray,
    emb_b: np.ndarray,
    targets_b: np.ndarray,
    lam: np.ndarray,
) -> MixedBatch:
    """Mix embedding/target pairs with coefficients folded into [0.5, 1].

    Folding ``lam`` to ``max(lam, 1 - lam)`` keeps each mixed example
    dominated by its first parent, so the mixed pair inherits that parent's
    identity.
    """
    lam = np.asarray(lam, dtype=np.float64)
    lam_prime = np.maximum(lam, 1.0 - lam)
    emb = lam_prime[:, None] * emb_a + (1.0 - lam_prime)[:, None] * emb_b
    targets = lam_prime[:, None] * targets_a + (1.0 - lam_prime)[:, None] * targets_b
    return MixedBatch(embeddings=emb, targets=targets, lam=lam_prime)


def mix_loss(
    params: ModelParams, batch: MixedBatch, *, mask_seed: int | None = None
) -> float:
    """Mean cross-entropy of a mixed batch (dropout on when seeded)."""
    m = batch.embeddings.shape[0]
    if m == 0:
        return 0.0
    items = [
        BatchItem(
            batch.embeddings[k],
            "ce",
            batch.targets[k],
            weight=1.0 / m,
            key=_MIX_KEY_BASE + k,
        )
        for k in range(m)
    ]
    from .encoder import batch_loss

    total, _ = batch_loss(params, items, mask_seed=mask_seed)
    return total


def pseudo_loss(outputs: Iterable[np.ndarray]) -> float:
    """Mean negative log of each distribution's top probability.

    Argmax ties resolve to the lowest class index; an empty collection
    contributes nothing and returns 0.
    """
    total = 0.0
    count = 0
    for p in outputs:
        p = np.asarray(p, dtype=np.float64)
        top = float(p[int(np.argmax(p))])
        total += -math.log(max(top, 1e-300))
        count += 1
    return total / count if count else 0.0


def rdrop_loss(p1: np.ndarray, p2: np.ndarray) -> float:
    """Half the symmetric KL between two class distributions."""
    return rdrop_from_probs(
        np.asarray(p1, dtype=np.float64), np.asarray(p2, dtype=np.float64)
    )


def total_loss(
    l_mix: float, l_p: float, l_r: float, lambda_p: float, lambda_r: float
) -> float:
    """Combine the three training terms with their weights."""
    return l_mix + lambda_p * l_p + lambda_r * l_r


def selection_prf(
    unlabeled_ids: Iterable[int], flipped_ids: Iterable[int]
) -> tuple[float, float, float]:
    """Precision/recall/F1 of the unlabeled set as a noisy-label detector.

    Precision is the fraction of unlabeled samples that are truly
    mislabeled; recall is the fraction of mislabeled samples that were sent
    to the unlabeled set. Empty denominators yield 0.
    """
    unlabeled = set(unlabeled_ids)
    flipped = set(flipped_ids)
    hit = len(unlabeled & flipped)
    precision = hit / len(unlabeled) if unlabeled else 0.0
    recall = hit / len(flipped) if flipped else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if precision + recall > 0.0
        else 0.0
    )
    return precision, recall, f1


def accuracy(
    params: ModelParams, features: list[FeatureVector], labels: np.ndarray
) -> float:
    """Dropout-off classification accuracy."""
    if not features:
        return 0.0
    hits = sum(
        int(np.argmax(predict_proba(params, fv)) == int(label))
        for fv, label in zip(features, labels)
    )
    return hits / len(features)


# ---------------------------------------------------------------------------
# Training loops
# ---------------------------------------------------------------------------


class _Run:
    """Shared state for one training run (either arm)."""

    def __init__(
        self,
        train: Dataset,
        test: Dataset,
        model: ModelConfig,
        cfg: SelfMixConfig,
        eval_every: int,
        record_losses: bool,
    ):
        self.train = train
        self.test = test
        self.model = model
        self.cfg = cfg
        self.eval_every = max(1, eval_every)
        self.record_losses = record_losses
        self.features = [featurize_text(ex.text, model.num_buckets) for ex in train]
        self.test_features = [
            featurize_text(ex.text, model.num_buckets) for ex in test
        ]
        self.test_labels = test.observed_labels()
        self.params = init_params(
            model.num_buckets,
            model.hidden,
            train.num_classes,
            model.dropout_rate,
            subseed(cfg.seed, "init"),
        )
        self.opt = init_optimizer(
            self.params,
            learning_rate=model.learning_rate,
            beta1=model.beta1,
            beta2=model.beta2,
            epsilon=model.epsilon,
        )
        self.flipped = train.flipped_ids() if train.has_oracle() else None
        self.global_step = 0
        self.step_acc: list[tuple[int, float]] = []
        self.warnings: list[str] = []
        self.loss_snapshots: list[np.ndarray] | None = [] if record_losses else None

    def test_accuracy(self) -> float:
        return accuracy(self.params, self.test_features, self.test_labels)

    def _step(self, grads: Gradients) -> None:
        adam_step(self.params, grads, self.opt)
        self.global_step += 1
        if self.global_step % self.eval_every == 0:
            self.step_acc.append((self.global_step, self.test_accuracy()))

    def shuffled_batches(
        self, epoch: int, sample_limit: int | None = None
    ) -> list[np.ndarray]:
        """Deterministic shuffled batches; optionally truncated to a budget."""
        rng = np.random.default_rng(subseed(self.cfg.seed, "shuffle", epoch))
        order = rng.permutation(len(self.train))
        if sample_limit is not None:
            order = order[:sample_limit]
        bs = self.cfg.batch_size
        return [order[i : i + bs] for i in range(0, len(order), bs)]

    def ce_epoch(self, epoch: int, sample_limit: int | None = None) -> float:
        """One pass of plain cross-entropy on observed labels.

        Used by the warm-up phase and by the non-adaptive arm; both derive
        identical shuffles and dropout masks from the same seed, so the two
        arms coincide exactly for the duration of the warm-up.
        """
        loss_sum = 0.0
        count = 0
        for b, batch in enumerate(self.shuffled_batches(epoch, sample_limit)):
            try:
                m = batch.size
                items = [
                    BatchItem(
                        self.features[i],
                        "ce",
                        one_hot(
                            self.train[i].observed_label, self.train.num_classes
                        ),
                        weight=1.0 / m,
                        key=int(i),
                    )
                    for i in batch
                ]
                mask_seed = subseed(self.cfg.seed, "dropout", epoch, b)
                _, grads, breakdown = backward(
                    self.params, items, mask_seed=mask_seed
                )
                self._step(grads)
            except NumericError as err:
                raise NumericError(f"epoch {epoch}, batch {b}: {err}") from err
            raw, n = breakdown["ce"]
            loss_sum += raw
            count += n
        return loss_sum / count if count else 0.0

    def selfmix_epoch(self, epoch: int) -> tuple[DataSplit, float, float, float]:
        """One adaptive epoch: select, then per batch pseudo-label, mix, step.

        Selection happens once at the top of the epoch; pseudo-labels are
        recomputed inside every mini-batch from the current model with
        dropout off, so label guesses track the parameters as they move.
        """
        cfg = self.cfg
        num_classes = self.train.num_classes
        losses = per_sample_losses(self.params, self.train, self.features)
        values = (
            class_regularize(losses, self.train.observed_labels(), num_classes)
            if cfg.class_regularize
            else losses
        )
        split = select_split(
            values,
            cfg.tau,
            [ex.id for ex in self.train],
            seed=subseed(cfg.seed, "gmm", epoch),
            epoch=epoch,
        )
        if not split.labeled_ids:
            self.warnings.append(
                f"epoch {epoch}: selection kept no labeled samples; "
                "training continues on model-assigned targets only"
            )

        unlabeled = set(split.unlabeled_ids)
        sums = {"ce": [0.0, 0], "pseudo": [0.0, 0], "rdrop": [0.0, 0]}
        for b, batch in enumerate(self.shuffled_batches(epoch)):
            try:
                m = batch.size
                rng = np.random.default_rng(subseed(cfg.seed, "mixup", epoch, b))
                lam = rng.beta(cfg.alpha, cfg.alpha, size=m)
                partners = rng.integers(0, m, size=m)
                emb = np.stack(
                    [encode(self.params, self.features[i]) for i in batch]
                )
                batch_targets = np.empty((m, num_classes))
                u_members: list[int] = []
                for k, i in enumerate(batch):
                    ex = self.train[int(i)]
                    if ex.id in unlabeled:
                        u_members.append(int(i))
                        guess = softmax(head_forward(self.params, emb[k]))
                        batch_targets[k] = sharpen(guess, cfg.temperature)
                    else:
                        batch_targets[k] = one_hot(ex.observed_label, num_classes)
                mixed = embmix(
                    emb, batch_targets, emb[partners], batch_targets[partners], lam
                )
                items = [
                    BatchItem(
                        mixed.embeddings[k],
                        "ce",
                        mixed.targets[k],
                        weight=1.0 / m,
                        key=_MIX_KEY_BASE + k,
                    )
                    for k in range(m)
                ]
                if u_members:
                    norm = len(u_members) if cfg.term_normalization == "mean" else 1
                    if cfg.lambda_p > 0.0:
                        items.extend(
                            BatchItem(
                                self.features[i],
                                "pseudo",
                                weight=cfg.lambda_p / norm,
                                key=i,
                            )
                            for i in u_members
                        )
                    if cfg.lambda_r > 0.0:
                        items.extend(
                            BatchItem(
                                self.features[i],
                                "rdrop",
                                weight=cfg.lambda_r / norm,
                                key=i,
                            )
                            for i in u_members
                        )
                mask_seed = subseed(cfg.seed, "dropout", epoch, b)
                _, grads, breakdown = backward(
                    self.params, items, mask_seed=mask_seed
                )
                self._step(grads)
            except NumericError as err:
                raise NumericError(f"epoch {epoch}, batch {b}: {err}") from err
            for kind, (raw, n) in breakdown.items():
                sums[kind][0] += raw
                sums[kind][1] += n

        means = {
            kind: (s / n if n else 0.0) for kind, (s, n) in sums.items()
        }
        return split, means["ce"], means["pseudo"], means["rdrop"]

    def snapshot_losses(self) -> None:
        if self.loss_snapshots is not None:
            self.loss_snapshots.append(
                per_sample_losses(self.params, self.train, self.features)
            )

    def stats_for(
        self,
        l_mix: float,
        l_p: float,
        l_r: float,
        split: DataSplit | None,
    ) -> EpochStats:
        if split is not None and self.flipped is not None:
            precision, recall, f1 = selection_prf(split.unlabeled_ids, self.flipped)
        else:
            precision = recall = f1 = 0.0
        labeled = len(split.labeled_ids) if split is not None else len(self.train)
        return EpochStats(
            test_acc=self.test_accuracy(),
            sel_precision=precision,
            sel_recall=recall,
            sel_f1=f1,
            l_mix=l_mix,
            l_p=l_p,
            l_r=l_r,
            labeled_count=labeled,
        )

    def finish(self, per_epoch: list[EpochStats]) -> TrainReport:
        accs = [s.test_acc for s in per_epoch]
        return TrainReport(
            epochs=len(per_epoch),
            best_acc=max(accs),
            last_acc=accs[-1],
            per_epoch=per_epoch,
            config={
                "model": dataclasses.asdict(self.model),
                "selfmix": dataclasses.asdict(self.cfg),
            },
            step_acc=self.step_acc,
            warnings=self.warnings,
            final_params=self.params,
            per_epoch_losses=self.loss_snapshots,
        )


def _warmup_schedule(cfg: SelfMixConfig, dataset_size: int) -> list[int | None]:
    """Per-warm-up-epoch sample limits; None means a full pass.

    In sample mode the budget is spread over ceil(budget / N) passes, the
    last of which may be partial; each pass still occupies one epoch row.
    """
    if cfg.warmup_epochs is not None:
        return [None] * cfg.warmup_epochs
    budget = cfg.warmup_samples or 0
    limits: list[int | None] = []
    while budget > 0:
        take = min(budget, dataset_size)
        limits.append(take if take < dataset_size else None)
        budget -= take
    if len(limits) > cfg.total_epochs:
        raise ValueError(
            "warmup_samples spans more passes than total_epochs allows"
        )
    return limits


def warmup(
    params: ModelParams,
    opt: OptimizerState,
    dataset: Dataset,
    *,
    epochs: int | None = None,
    samples: int | None = None,
    batch_size: int = 32,
    seed: int = 0,
    features: list[FeatureVector] | None = None,
) -> tuple[ModelParams, OptimizerState]:
    """Plain cross-entropy training on observed labels, in place.

    Duration is either ``epochs`` full passes or ``samples`` examples
    (exactly one must be given); the optimizer state supplies the step-size
    hyperparameters. Useful standalone for bootstrapping models whose losses
    will later be mixture-split.
    """
    if (epochs is None) == (samples is None):
        raise ValueError("set exactly one of epochs and samples")
    if features is None:
        features = [featurize_text(ex.text, params.num_buckets) for ex in dataset]
    labels = dataset.observed_labels()
    num_classes = dataset.num_classes
    schedule: list[int | None]
    if epochs is not None:
        schedule = [None] * epochs
    else:
        budget = samples
        schedule = []
        while budget > 0:
            take = min(budget, len(dataset))
            schedule.append(take if take < len(dataset) else None)
            budget -= take
    for epoch, limit in enumerate(schedule):
        rng = np.random.default_rng(subseed(seed, "shuffle", epoch))
        order = rng.permutation(len(dataset))
        if limit is not None:
            order = order[:limit]
        for b in range(0, len(order), batch_size):
            batch = order[b : b + batch_size]
            m = batch.size
            items = [
                BatchItem(
                    features[i],
                    "ce",
                    one_hot(int(labels[i]), num_classes),
                    weight=1.0 / m,
                    key=int(i),
                )
                for i in batch
            ]
            mask_seed = subseed(seed, "dropout", epoch, b // batch_size)
            _, grads, _ = backward(params, items, mask_seed=mask_seed)
            adam_step(params, grads, opt)
    return params, opt


def train_baseline(
    train: Dataset,
    test: Dataset,
    model: ModelConfig | None = None,
    cfg: SelfMixConfig | None = None,
    *,
    eval_every: int = 50,
    record_losses: bool = False,
) -> TrainReport:
    """Plain cross-entropy training for the full epoch budget."""
    model = model or ModelConfig()
    cfg = cfg or SelfMixConfig()
    run = _Run(train, test, model, cfg, eval_every, record_losses)
    per_epoch: list[EpochStats] = []
    for epoch in range(cfg.total_epochs):
        mean_ce = run.ce_epoch(epoch)
        run.snapshot_losses()
        per_epoch.append(run.stats_for(mean_ce, 0.0, 0.0, None))
    return run.finish(per_epoch)


def train_selfmix(
    train: Dataset,
    test: Dataset,
    model: ModelConfig | None = None,
    cfg: SelfMixConfig | None = None,
    *,
    eval_every: int = 50,
    record_losses: bool = False,
) -> TrainReport:
    """Warm-up then adaptive selection/mixing for the remaining epochs."""
    model = model or ModelConfig()
    cfg = cfg or SelfMixConfig()
    run = _Run(train, test, model, cfg, eval_every, record_losses)
    schedule = _warmup_schedule(cfg, len(train))
    per_epoch: list[EpochStats] = []
    for epoch, limit in enumerate(schedule):
        mean_ce = run.ce_epoch(epoch, limit)
        run.snapshot_losses()
        per_epoch.append(run.stats_for(mean_ce, 0.0, 0.0, None))
    for epoch in range(len(schedule), cfg.total_epochs):
        split, l_mix, l_p, l_r = run.selfmix_epoch(epoch)
        run.snapshot_losses()
        per_epoch.append(run.stats_for(l_mix, l_p, l_r, split))
    return run.finish(per_epoch)
