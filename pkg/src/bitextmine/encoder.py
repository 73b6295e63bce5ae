"""Dual-encoder towers: averaged n-gram input embeddings plus a dense stack.

Each tower owns its unigram and bigram embedding tables and a feedforward
stack with ReLU on every layer but the last.  Residual connections jump over
``residual_skip`` layers (skip level 1 adds layer i-2's output onto layer i's
output) and apply only where the two widths match.  A pair score is the plain
dot product of the two tower outputs.

``encode_corpus`` evaluates one sentence at a time on purpose: row-batched
BLAS matmuls are not bitwise reproducible across batch shapes, and corpus
encodings must not depend on internal chunking.  The batched forward/backward
used by the trainer has no such contract and lives in ``forward_batch``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .confidence import ConfidenceHead
from .errors import ConfigInvalid, DimensionMismatch, EmptyCorpus, EmptySentence, MiningError
from .textpipe import FeatureIds, FeaturizerConfig, featurize_text

# Unigram tables start small but nonzero (an all-zero model is a gradient
# fixed point of the bilinear score); bigram tables start at exactly zero so
# that n-grams never seen in training contribute nothing at inference instead
# of random noise.  Dense layers use width-aware uniform limits, else the
# signal (and its gradient) vanishes across the stack.
EMBED_INIT_SCALE = 0.1
HEAD_INIT_SCALE = 0.05


@dataclass(frozen=True)
class TowerConfig:
    """Shape of one encoder tower.

    The sentence embedding width always equals the last hidden width; a
    residual is added only when source and destination widths agree.
    """

    input_dim: int
    hidden_dims: tuple[int, ...]
    residual_skip: int = 1

    def __post_init__(self) -> None:
        if self.input_dim < 1:
            raise ConfigInvalid(f"input_dim must be positive, got {self.input_dim}")
        if not self.hidden_dims or any(d < 1 for d in self.hidden_dims):
            raise ConfigInvalid(f"hidden_dims must be non-empty positive, got {self.hidden_dims}")
        if self.residual_skip < 1:
            raise ConfigInvalid(f"residual_skip must be positive, got {self.residual_skip}")
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))

    @property
    def output_dim(self) -> int:
        return self.hidden_dims[-1]

    @property
    def num_layers(self) -> int:
        return len(self.hidden_dims)

    def residual_source(self, layer: int) -> int:
        """Index of the layer whose output feeds a residual into `layer`, or -1."""
        src = layer - (self.residual_skip + 1)
        if src >= 0 and self.hidden_dims[src] == self.hidden_dims[layer]:
            return src
        return -1


@dataclass
class TowerParams:
    unigram_table: np.ndarray  # [hash_buckets, input_dim]
    bigram_table: np.ndarray   # [hash_buckets, input_dim]
    weights: list[np.ndarray]  # per layer, [in_dim, out_dim]
    biases: list[np.ndarray]   # per layer, [out_dim]

    def copy(self) -> "TowerParams":
        return TowerParams(
            unigram_table=self.unigram_table.copy(),
            bigram_table=self.bigram_table.copy(),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def astype(self, dtype) -> "TowerParams":
        return TowerParams(
            unigram_table=self.unigram_table.astype(dtype),
            bigram_table=self.bigram_table.astype(dtype),
            weights=[w.astype(dtype) for w in self.weights],
            biases=[b.astype(dtype) for b in self.biases],
        )


@dataclass(frozen=True)
class ModelConfig:
    featurizer: FeaturizerConfig
    source: TowerConfig
    target: TowerConfig
    dropout_rate: float = 0.4

    def __post_init__(self) -> None:
        if self.source.output_dim != self.target.output_dim:
            raise ConfigInvalid("source and target towers must share output_dim")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigInvalid(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")


def default_model_config(
    hash_buckets: int = 32768,
    dim: int = 64,
    num_layers: int = 4,
    dropout_rate: float = 0.4,
) -> ModelConfig:
    """Desk-scale defaults: uniform widths so every residual applies."""
    tower = TowerConfig(input_dim=dim, hidden_dims=(dim,) * num_layers)
    return ModelConfig(
        featurizer=FeaturizerConfig(hash_buckets=hash_buckets),
        source=tower,
        target=tower,
        dropout_rate=dropout_rate,
    )


@dataclass
class DualEncoderModel:
    """Two independent towers, a confidence head, and training state."""

    config: ModelConfig
    source: TowerParams
    target: TowerParams
    head: ConfidenceHead
    step: int = 0
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    @property
    def featurizer(self) -> FeaturizerConfig:
        return self.config.featurizer

    def tower(self, side: Literal["source", "target"]) -> tuple[TowerParams, TowerConfig]:
        if side == "source":
            return self.source, self.config.source
        if side == "target":
            return self.target, self.config.target
        raise ConfigInvalid(f"tower side must be 'source' or 'target', got {side!r}")


def _init_tower(cfg: TowerConfig, hash_buckets: int, rng: np.random.Generator) -> TowerParams:
    unigram = rng.uniform(
        -EMBED_INIT_SCALE, EMBED_INIT_SCALE, size=(hash_buckets, cfg.input_dim)
    ).astype(np.float32)
    bigram = np.zeros((hash_buckets, cfg.input_dim), dtype=np.float32)
    weights, biases = [], []
    in_dim = cfg.input_dim
    for out_dim in cfg.hidden_dims:
        limit = np.sqrt(6.0 / (in_dim + out_dim))
        weights.append(rng.uniform(-limit, limit, size=(in_dim, out_dim)).astype(np.float32))
        biases.append(np.zeros(out_dim, dtype=np.float32))
        in_dim = out_dim
    return TowerParams(unigram_table=unigram, bigram_table=bigram, weights=weights, biases=biases)


def init_model(config: ModelConfig, seed: int) -> DualEncoderModel:
    """Seeded uniform [-0.05, 0.05] weights, zero biases; no shared parameters.

    The returned model carries the generator onward, so training draws
    (shuffles, task choices, dropout) continue the same seeded stream.
    """
    rng = np.random.default_rng(seed)
    buckets = config.featurizer.hash_buckets
    source = _init_tower(config.source, buckets, rng)
    target = _init_tower(config.target, buckets, rng)
    # Identity calibration at init (confidence = sigmoid(score)); training
    # bends the per-source scale and shift away from that starting point.
    d = config.source.output_dim
    head = ConfidenceHead(
        scale_weights=rng.uniform(-HEAD_INIT_SCALE, HEAD_INIT_SCALE, size=2 * d).astype(np.float32),
        scale_bias=np.ones(1, dtype=np.float32),
        shift_weights=rng.uniform(-HEAD_INIT_SCALE, HEAD_INIT_SCALE, size=2 * d).astype(np.float32),
        shift_bias=np.zeros(1, dtype=np.float32),
        dropout_rate=config.dropout_rate,
    )
    return DualEncoderModel(config=config, source=source, target=target, head=head, rng=rng)


# ---------------------------------------------------------------------------
# Forward passes
# ---------------------------------------------------------------------------

def input_embedding(f: FeatureIds, params: TowerParams) -> np.ndarray:
    """Sum unigram and bigram embedding rows, scaled by 1/sqrt(token_count)."""
    if f.token_count < 1:
        raise EmptySentence("token_count must be >= 1")
    total = params.unigram_table[f.unigram_ids].sum(axis=0)
    if len(f.bigram_ids):
        total = total + params.bigram_table[f.bigram_ids].sum(axis=0)
    return total / np.sqrt(f.token_count)


def forward(psi: np.ndarray, params: TowerParams, cfg: TowerConfig) -> np.ndarray:
    """Run the dense stack on one input embedding; returns the sentence embedding."""
    if psi.shape != (cfg.input_dim,):
        raise DimensionMismatch(f"expected input of shape ({cfg.input_dim},), got {psi.shape}")
    outputs: list[np.ndarray] = []
    x = psi
    last = cfg.num_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        if w.shape[0] != x.shape[0] or w.shape[1] != cfg.hidden_dims[i]:
            raise DimensionMismatch(f"layer {i} weight shape {w.shape} inconsistent with config")
        h = x @ w + b
        if i < last:
            h = np.maximum(h, 0)
        src = cfg.residual_source(i)
        if src >= 0:
            h = h + outputs[src]
        outputs.append(h)
        x = h
    return x


def score(u: np.ndarray, v: np.ndarray) -> float:
    """Dot-product compatibility score of two sentence embeddings."""
    if u.shape != v.shape:
        raise DimensionMismatch(f"embedding shapes differ: {u.shape} vs {v.shape}")
    return float(u @ v)


def encode_sentence(text: str, side: Literal["source", "target"], model: DualEncoderModel) -> np.ndarray:
    params, cfg = model.tower(side)
    f = featurize_text(text, model.featurizer)
    return forward(input_embedding(f, params), params, cfg)


def encode_corpus(
    sentences: Sequence[str],
    side: Literal["source", "target"],
    model: DualEncoderModel,
) -> np.ndarray:
    """Encode sentences into a [n, output_dim] matrix, row i for sentence i.

    Sentences are evaluated independently, so the result cannot depend on any
    internal batching.  Per-sentence failures are re-raised with the index.
    """
    if len(sentences) == 0:
        raise EmptyCorpus("encode_corpus requires at least one sentence")
    params, cfg = model.tower(side)
    out = np.empty((len(sentences), cfg.output_dim), dtype=params.weights[0].dtype)
    for i, text in enumerate(sentences):
        try:
            f = featurize_text(text, model.featurizer)
            out[i] = forward(input_embedding(f, params), params, cfg)
        except MiningError as e:
            raise type(e)(f"sentence {i}: {e}") from e
    return out


# ---------------------------------------------------------------------------
# Batched forward with cache, and the matching backward (training path)
# ---------------------------------------------------------------------------

@dataclass
class TowerForwardCache:
    feats: list[FeatureIds]
    inv_sqrt: np.ndarray        # [K]
    psi: np.ndarray             # [K, input_dim]
    preacts: list[np.ndarray]   # pre-activation per layer
    outputs: list[np.ndarray]   # post-activation + residual per layer


@dataclass
class EmbeddingGrad:
    """Sparse embedding-table gradient: touched rows only, ids unique."""

    ids: np.ndarray   # unique row ids
    rows: np.ndarray  # [len(ids), input_dim]

    def densify(self, num_rows: int) -> np.ndarray:
        dense = np.zeros((num_rows, self.rows.shape[1]), dtype=self.rows.dtype)
        dense[self.ids] = self.rows
        return dense


@dataclass
class TowerGrads:
    unigram: EmbeddingGrad
    bigram: EmbeddingGrad
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def batch_input_embeddings(
    feats: Sequence[FeatureIds], params: TowerParams
) -> tuple[np.ndarray, np.ndarray]:
    """Input embeddings for a batch; returns (psi [K, d], inv_sqrt [K])."""
    k = len(feats)
    d = params.unigram_table.shape[1]
    psi = np.zeros((k, d), dtype=params.unigram_table.dtype)
    inv_sqrt = np.empty(k, dtype=psi.dtype)
    for i, f in enumerate(feats):
        if f.token_count < 1:
            raise EmptySentence(f"sentence {i}: token_count must be >= 1")
        row = params.unigram_table[f.unigram_ids].sum(axis=0)
        if len(f.bigram_ids):
            row = row + params.bigram_table[f.bigram_ids].sum(axis=0)
        inv_sqrt[i] = 1.0 / np.sqrt(f.token_count)
        psi[i] = row * inv_sqrt[i]
    return psi, inv_sqrt


def forward_batch(
    feats: Sequence[FeatureIds], params: TowerParams, cfg: TowerConfig
) -> tuple[np.ndarray, TowerForwardCache]:
    """Batched tower forward keeping every intermediate needed for backward."""
    psi, inv_sqrt = batch_input_embeddings(feats, params)
    preacts, outputs = [], []
    x = psi
    last = cfg.num_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = x @ w + b
        h = np.maximum(z, 0) if i < last else z
        src = cfg.residual_source(i)
        if src >= 0:
            h = h + outputs[src]
        preacts.append(z)
        outputs.append(h)
        x = h
    cache = TowerForwardCache(
        feats=list(feats), inv_sqrt=inv_sqrt, psi=psi, preacts=preacts, outputs=outputs
    )
    return x, cache


def _embedding_grad(
    ids_per_sentence: list[np.ndarray], dpsi_scaled: np.ndarray, input_dim: int
) -> EmbeddingGrad:
    lengths = [len(ids) for ids in ids_per_sentence]
    if sum(lengths) == 0:
        return EmbeddingGrad(
            ids=np.empty(0, dtype=np.int64),
            rows=np.zeros((0, input_dim), dtype=dpsi_scaled.dtype),
        )
    flat_ids = np.concatenate(ids_per_sentence)
    row_of = np.repeat(np.arange(len(ids_per_sentence)), lengths)
    uniq, inverse = np.unique(flat_ids, return_inverse=True)
    acc = np.zeros((len(uniq), input_dim), dtype=dpsi_scaled.dtype)
    np.add.at(acc, inverse, dpsi_scaled[row_of])
    return EmbeddingGrad(ids=uniq, rows=acc)


def backward_tower(
    dout: np.ndarray, cache: TowerForwardCache, params: TowerParams, cfg: TowerConfig
) -> TowerGrads:
    """Backpropagate d(loss)/d(tower output) through dense layers and tables.

    Duplicate feature ids within the batch accumulate additively; untouched
    embedding rows are absent from the sparse gradient entirely.
    """
    last = cfg.num_layers - 1
    gout: list[np.ndarray | None] = [None] * cfg.num_layers
    gout[last] = dout
    dweights = [np.zeros_like(w) for w in params.weights]
    dbiases = [np.zeros_like(b) for b in params.biases]
    dpsi = None
    for i in range(last, -1, -1):
        g = gout[i]
        if g is None:
            continue
        src = cfg.residual_source(i)
        if src >= 0:
            gout[src] = g if gout[src] is None else gout[src] + g
        gpre = g * (cache.preacts[i] > 0) if i < last else g
        x_in = cache.psi if i == 0 else cache.outputs[i - 1]
        dweights[i] = x_in.T @ gpre
        dbiases[i] = gpre.sum(axis=0)
        gin = gpre @ params.weights[i].T
        if i == 0:
            dpsi = gin
        else:
            gout[i - 1] = gin if gout[i - 1] is None else gout[i - 1] + gin
    assert dpsi is not None
    dpsi_scaled = dpsi * cache.inv_sqrt[:, None]
    input_dim = cfg.input_dim
    return TowerGrads(
        unigram=_embedding_grad([f.unigram_ids for f in cache.feats], dpsi_scaled, input_dim),
        bigram=_embedding_grad([f.bigram_ids for f in cache.feats], dpsi_scaled, input_dim),
        weights=dweights,
        biases=dbiases,
    )
