"""Training: in-batch softmax ranking with optional hard negatives, plus the
confidence task, all on hand-rolled gradients and plain SGD.

Each step scores a batch of K pairs as one K x (K + H) matrix product, where
H extra columns come from mined hard negatives of the batch's sources.  True
pairs sit on the diagonal of the first K columns; every other column is a
negative for every row.  A seeded Bernoulli draw interleaves confidence-head
steps into the same stream, so a whole run is a pure function of the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import annindex
from .confidence import HeadGrads, confidence_loss_and_grads
from .encoder import (
    DualEncoderModel,
    ModelConfig,
    TowerGrads,
    backward_tower,
    default_model_config,
    encode_corpus,
    forward_batch,
    init_model,
)
from .errors import (
    ConfigInvalid,
    DimensionMismatch,
    EmptyCorpus,
    InsufficientTargets,
)
from .textpipe import FeatureIds, featurize_text

# source sentence id -> ids of mined non-translation targets
HardNegativeTable = dict[int, list[int]]

Corpus = Sequence[tuple[str, str]]


@dataclass(frozen=True)
class TrainingConfig:
    """Optimization settings.  Desk-scale defaults; the large-scale settings
    (batch 128, lr 0.01, decay every 5M steps) are expressible verbatim."""

    batch_size: int = 128
    learning_rate: float = 0.25
    decay_factor: float = 0.8
    decay_every_steps: int = 250
    total_steps: int = 2000
    hard_negatives_per_example: int = 5
    hard_fraction: float = 0.2
    confidence_task_fraction: float = 0.1
    # The head gets per-coordinate AdaGrad at this fixed rate.  A shared plain
    # SGD rate cannot serve both tasks: whatever the towers want either blows
    # the head into sigmoid saturation or leaves it frozen while the score
    # distribution drifts underneath it.
    confidence_adagrad_rate: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        if self.batch_size < 2:
            raise ConfigInvalid(f"batch_size must be >= 2, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigInvalid(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 < self.decay_factor <= 1.0:
            raise ConfigInvalid(f"decay_factor must be in (0, 1], got {self.decay_factor}")
        if self.decay_every_steps < 1:
            raise ConfigInvalid("decay_every_steps must be >= 1")
        if self.total_steps < 0:
            raise ConfigInvalid("total_steps must be >= 0")
        if self.hard_negatives_per_example < 0:
            raise ConfigInvalid("hard_negatives_per_example must be >= 0")
        if not 0.0 <= self.hard_fraction <= 1.0:
            raise ConfigInvalid("hard_fraction must be in [0, 1]")
        if not 0.0 <= self.confidence_task_fraction <= 1.0:
            raise ConfigInvalid("confidence_task_fraction must be in [0, 1]")
        if self.confidence_adagrad_rate <= 0:
            raise ConfigInvalid("confidence_adagrad_rate must be positive")


@dataclass
class Gradients:
    source: TowerGrads
    target: TowerGrads


# ---------------------------------------------------------------------------
# Ranking objective
# ---------------------------------------------------------------------------

def batch_scores(
    u: np.ndarray, v: np.ndarray, v_hard: np.ndarray | None = None
) -> np.ndarray:
    """All pair scores of a batch as U @ [V; V_hard]^T.

    Entry (i, i) is the true-pair score; everything else is a negative.
    """
    if u.ndim != 2 or v.ndim != 2:
        raise DimensionMismatch("u and v must be 2-d")
    if u.shape != v.shape:
        raise DimensionMismatch(f"u {u.shape} and v {v.shape} must match")
    v_all = v
    if v_hard is not None and len(v_hard):
        if v_hard.ndim != 2 or v_hard.shape[1] != u.shape[1]:
            raise DimensionMismatch(f"v_hard {v_hard.shape} incompatible with u {u.shape}")
        v_all = np.vstack([v, v_hard])
    return u @ v_all.T


def ranking_loss(scores: np.ndarray) -> float:
    """Mean negative log-probability of the true pair under the row softmax."""
    loss, _ = ranking_loss_and_grad(scores)
    return loss


def ranking_loss_and_grad(scores: np.ndarray) -> tuple[float, np.ndarray]:
    """Loss and d(loss)/d(scores) = (softmax - onehot_diagonal) / K.

    Computed with max-subtraction; the candidate axis may be wider than K
    when hard negatives are appended.
    """
    k, c = scores.shape
    if c < k:
        raise DimensionMismatch(f"score matrix [{k}, {c}] has no full diagonal")
    m = scores.max(axis=1, keepdims=True)
    shifted = scores - m
    lse = m[:, 0] + np.log(np.exp(shifted).sum(axis=1))
    diag = scores[np.arange(k), np.arange(k)]
    loss = float(np.mean(lse - diag))
    softmax = np.exp(shifted)
    softmax /= softmax.sum(axis=1, keepdims=True)
    grad = softmax
    grad[np.arange(k), np.arange(k)] -= 1.0
    grad /= k
    return loss, grad


def backward(
    src_feats: Sequence[FeatureIds],
    tgt_feats: Sequence[FeatureIds],
    hard_feats: Sequence[FeatureIds],
    model: DualEncoderModel,
) -> tuple[float, Gradients]:
    """Forward the batch through both towers, then backprop the ranking loss.

    Hard-negative sentences run through the target tower like any other
    target, so their gradients flow into the target parameters too.
    """
    u, src_cache = forward_batch(src_feats, model.source, model.config.source)
    tgt_all = list(tgt_feats) + list(hard_feats)
    v_all, tgt_cache = forward_batch(tgt_all, model.target, model.config.target)
    scores = u @ v_all.T
    loss, dscores = ranking_loss_and_grad(scores)
    du = dscores @ v_all
    dv_all = dscores.T @ u
    return loss, Gradients(
        source=backward_tower(du, src_cache, model.source, model.config.source),
        target=backward_tower(dv_all, tgt_cache, model.target, model.config.target),
    )


# ---------------------------------------------------------------------------
# SGD
# ---------------------------------------------------------------------------

def learning_rate_at(step: int, cfg: TrainingConfig) -> float:
    return cfg.learning_rate * cfg.decay_factor ** (step // cfg.decay_every_steps)


def sgd_step_towers(model: DualEncoderModel, grads: Gradients, step: int, cfg: TrainingConfig) -> None:
    """In-place SGD update of both towers; embedding rows update sparsely."""
    lr = learning_rate_at(step, cfg)
    for params, g in ((model.source, grads.source), (model.target, grads.target)):
        if len(g.unigram.ids):
            params.unigram_table[g.unigram.ids] -= lr * g.unigram.rows
        if len(g.bigram.ids):
            params.bigram_table[g.bigram.ids] -= lr * g.bigram.rows
        for w, dw in zip(params.weights, g.weights):
            w -= lr * dw
        for b, db in zip(params.biases, g.biases):
            b -= lr * db


_HEAD_FIELDS = ("scale_weights", "scale_bias", "shift_weights", "shift_bias")


class HeadAdaGradState:
    """Per-coordinate squared-gradient accumulators for the confidence head.

    Optimizer state is in-memory only; it is not part of a checkpoint, so a
    reloaded model starts head training with fresh accumulators.
    """

    def __init__(self, head) -> None:
        self.acc = {k: np.zeros_like(getattr(head, k)) for k in _HEAD_FIELDS}

    def apply(self, head, grads: HeadGrads, rate: float) -> None:
        for k in _HEAD_FIELDS:
            g = getattr(grads, k)
            acc = self.acc[k]
            acc += g * g
            setattr(head, k, getattr(head, k) - rate * g / np.sqrt(acc + 1e-8))


def sgd_step_head(
    model: DualEncoderModel,
    grads: HeadGrads,
    state: HeadAdaGradState,
    cfg: TrainingConfig,
) -> None:
    """AdaGrad update of the head only; tower parameters are never touched."""
    state.apply(model.head, grads, cfg.confidence_adagrad_rate)


# ---------------------------------------------------------------------------
# Hard-negative mining
# ---------------------------------------------------------------------------

def mine_hard_negatives(
    model: DualEncoderModel,
    corpus: Corpus,
    m: int,
    fraction: float,
    index: annindex.ExactIndex | annindex.PartitionedIndex | None = None,
    seed: int = 0,
) -> HardNegativeTable:
    """Top-m highest-scoring non-translation targets for a seeded sample of sources.

    Sources outside the sample are absent from the table and train with
    in-batch random negatives only.
    """
    n = len(corpus)
    if n == 0:
        raise EmptyCorpus("cannot mine hard negatives from an empty corpus")
    if n < m + 1:
        raise InsufficientTargets(f"need at least m+1={m + 1} pairs, corpus has {n}")
    if not 0.0 <= fraction <= 1.0:
        raise ConfigInvalid(f"fraction must be in [0, 1], got {fraction}")
    count = math.ceil(fraction * n)
    if count == 0:
        return {}
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(n, size=count, replace=False))
    if index is None:
        v = encode_corpus([pair[1] for pair in corpus], "target", model)
        index = annindex.build_exact(v, list(range(n)))
    u = encode_corpus([corpus[i][0] for i in chosen], "source", model)
    table: HardNegativeTable = {}
    for row, i in zip(u, chosen.tolist()):
        hits = annindex.search(index, row, m + 1)
        negs = [tid for tid, _ in hits if tid != i][:m]
        table[i] = negs
    return table


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

StepCallback = Callable[[int, str, float, float], None]


def train(
    cfg: TrainingConfig,
    corpus: Corpus,
    hard_table: HardNegativeTable | None = None,
    model: DualEncoderModel | None = None,
    model_config: ModelConfig | None = None,
    on_step: StepCallback | None = None,
) -> DualEncoderModel:
    """Run `total_steps` of interleaved ranking / confidence SGD.

    A fresh model is initialized from cfg.seed unless one is passed in (in
    which case training continues its step counter and RNG stream).  Every
    epoch reshuffles the corpus; partial trailing batches are dropped so the
    in-batch candidate count stays fixed.
    """
    n = len(corpus)
    if n == 0:
        raise EmptyCorpus("training corpus is empty")
    if n < cfg.batch_size:
        raise ConfigInvalid(f"corpus ({n} pairs) smaller than one batch ({cfg.batch_size})")
    if model is None:
        model = init_model(model_config or default_model_config(), cfg.seed)
    fz = model.featurizer
    src_feats = [featurize_text(s, fz) for s, _ in corpus]
    tgt_feats = [featurize_text(t, fz) for _, t in corpus]
    hard_table = hard_table or {}

    k = cfg.batch_size
    drop = model.head.dropout_rate
    head_opt = HeadAdaGradState(model.head)
    done = 0
    while done < cfg.total_steps:
        order = model.rng.permutation(n)
        for start in range(0, n - k + 1, k):
            if done >= cfg.total_steps:
                break
            batch = order[start : start + k]
            lr = learning_rate_at(model.step, cfg)
            conf_step = model.rng.random() < cfg.confidence_task_fraction
            if conf_step:
                u, _ = forward_batch([src_feats[i] for i in batch], model.source, model.config.source)
                v, _ = forward_batch([tgt_feats[i] for i in batch], model.target, model.config.target)
                scores = u @ v.T
                mask = None
                if drop > 0:
                    mask = (model.rng.random((k, 2 * u.shape[1])) >= drop).astype(u.dtype)
                loss, hgrads = confidence_loss_and_grads(u, scores, model.head, mask)
                sgd_step_head(model, hgrads, head_opt, cfg)
                task = "conf"
            else:
                hard_ids = [j for i in batch for j in hard_table.get(int(i), ())]
                loss, grads = backward(
                    [src_feats[i] for i in batch],
                    [tgt_feats[i] for i in batch],
                    [tgt_feats[j] for j in hard_ids],
                    model,
                )
                sgd_step_towers(model, grads, model.step, cfg)
                task = "rank"
            model.step += 1
            done += 1
            if on_step is not None:
                on_step(model.step, task, loss, lr)
    return model
