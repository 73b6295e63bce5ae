"""Reconstruction metrics, score-agreement statistics, and synthetic corpora.

The synthetic generator builds a toy "language pair": source sentences are
random token sequences, targets apply a fixed bijective token cipher, so gold
sentence and document alignments are known exactly.  Optional confusable
families (members share a token pool), noise insertions, deletions, and local
reordering control task difficulty.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .encoder import DualEncoderModel, encode_corpus, encode_sentence
from .errors import (
    ConfigInvalid,
    DegenerateVariance,
    EmptyPool,
    KeyMismatch,
    LengthMismatch,
)
from .miner import Document
from .textpipe import normalize


@dataclass(frozen=True)
class EvalResult:
    p_at: dict[int, float]
    num_queries: int


def precision_at_n(
    model: DualEncoderModel,
    eval_pairs: Sequence[tuple[str, str]],
    distractor_pool: Sequence[str],
    ns: Iterable[int],
) -> EvalResult:
    """Fraction of sources whose true target lands in the top N of the pool.

    The true target competes against every distractor; ties count against it,
    and distractors whose normalized text equals the true target are removed
    so the query stays well-defined.
    """
    if len(distractor_pool) == 0:
        raise EmptyPool("distractor pool is empty")
    ns = sorted(set(int(n) for n in ns))
    pool_emb = encode_corpus(list(distractor_pool), "target", model)
    pool_norm = [normalize(t, model.featurizer) for t in distractor_pool]
    ranks = []
    for src, tgt in eval_pairs:
        u = encode_sentence(src, "source", model)
        s_true = float(u @ encode_sentence(tgt, "target", model))
        pool_scores = pool_emb @ u
        tgt_norm = normalize(tgt, model.featurizer)
        dup = np.fromiter((p == tgt_norm for p in pool_norm), dtype=bool, count=len(pool_norm))
        ranks.append(1 + int((pool_scores[~dup] >= s_true).sum()))
    ranks_arr = np.asarray(ranks)
    p_at = {n: float((ranks_arr <= n).mean()) if len(ranks_arr) else 0.0 for n in ns}
    return EvalResult(p_at=p_at, num_queries=len(eval_pairs))


def doc_match_accuracy(predicted: Mapping, gold: Mapping) -> float:
    """Fraction of source docs matched to their gold target doc."""
    if set(predicted) != set(gold):
        raise KeyMismatch("predicted and gold cover different source documents")
    if not gold:
        raise KeyMismatch("empty document maps")
    return sum(1 for k in gold if predicted[k] == gold[k]) / len(gold)


def pearson_r(a: Sequence[float], b: Sequence[float]) -> float:
    """Product-moment correlation of two equal-length samples."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"inputs must be equal-length 1-d, got {x.shape} vs {y.shape}")
    if len(x) < 2:
        raise DegenerateVariance("need at least two samples")
    dx = x - x.mean()
    dy = y - y.mean()
    vx = float(dx @ dx)
    vy = float(dy @ dy)
    if vx == 0.0 or vy == 0.0:
        raise DegenerateVariance("zero variance input")
    return float(dx @ dy) / np.sqrt(vx * vy)


def extreme_agreement(
    confidences: Sequence[float], labels: Sequence[bool], threshold: float = 0.5
) -> float:
    """Accuracy of thresholded confidences against boolean pos/neg labels."""
    if len(confidences) != len(labels):
        raise LengthMismatch(f"{len(confidences)} confidences vs {len(labels)} labels")
    conf = np.asarray(confidences, dtype=np.float64)
    lab = np.asarray(labels, dtype=bool)
    return float(((conf >= threshold) == lab).mean())


# ---------------------------------------------------------------------------
# Synthetic bilingual corpus
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthCorpusConfig:
    seed: int = 0
    num_pairs: int = 1000
    vocab_size: int = 100
    sentence_length_range: tuple[int, int] = (4, 10)
    cipher_seed: int = 7
    # Confusable families: consecutive sentences in groups of family_size draw
    # shared_fraction of their tokens from a small per-family pool.
    family_size: int = 1
    shared_fraction: float = 0.0
    # Documents: when doc_size > 0, consecutive sentences form documents and
    # the target side suffers noise insertions / deletions / local reordering.
    doc_size: int = 0
    noise_rate: float = 0.0
    deletion_rate: float = 0.0
    reorder_rate: float = 0.0

    def __post_init__(self) -> None:
        lo, hi = self.sentence_length_range
        if self.vocab_size < 10:
            raise ConfigInvalid(f"vocab_size must be >= 10, got {self.vocab_size}")
        if self.num_pairs < 1:
            raise ConfigInvalid("num_pairs must be >= 1")
        if lo < 1 or hi < lo:
            raise ConfigInvalid(f"bad sentence_length_range {self.sentence_length_range}")
        if self.family_size < 1:
            raise ConfigInvalid("family_size must be >= 1")
        if not 0.0 <= self.shared_fraction <= 1.0:
            raise ConfigInvalid("shared_fraction must be in [0, 1]")
        for name in ("noise_rate", "deletion_rate", "reorder_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigInvalid(f"{name} must be in [0, 1]")
        if self.doc_size < 0:
            raise ConfigInvalid("doc_size must be >= 0")


@dataclass(frozen=True)
class SynthCorpus:
    pairs: list[tuple[str, str]]
    source_docs: list[Document]
    target_docs: list[Document]
    gold_doc_map: dict[str, str]


def _cipher_sentence(tokens: list[int], cipher: np.ndarray) -> list[int]:
    return [int(cipher[t]) for t in tokens]


def make_synthetic_corpus(cfg: SynthCorpusConfig) -> SynthCorpus:
    """Deterministic cipher bitext plus optional noisy document structure."""
    rng = np.random.default_rng(cfg.seed)
    cipher = np.random.default_rng(cfg.cipher_seed).permutation(cfg.vocab_size)
    lo, hi = cfg.sentence_length_range
    pool_size = max(2, (lo + hi) // 2)

    src_tok: list[list[int]] = []
    family_pool: np.ndarray | None = None
    for i in range(cfg.num_pairs):
        if cfg.family_size > 1 and i % cfg.family_size == 0:
            family_pool = rng.integers(0, cfg.vocab_size, size=pool_size)
        length = int(rng.integers(lo, hi + 1))
        tokens = []
        for _ in range(length):
            if cfg.family_size > 1 and rng.random() < cfg.shared_fraction:
                tokens.append(int(family_pool[rng.integers(0, pool_size)]))
            else:
                tokens.append(int(rng.integers(0, cfg.vocab_size)))
        src_tok.append(tokens)

    def src_text(tokens: list[int]) -> str:
        return " ".join(f"w{t:04d}" for t in tokens)

    def tgt_text(tokens: list[int]) -> str:
        return " ".join(f"q{t:04d}" for t in tokens)

    tgt_tok = [_cipher_sentence(t, cipher) for t in src_tok]
    pairs = [(src_text(s), tgt_text(t)) for s, t in zip(src_tok, tgt_tok)]

    source_docs: list[Document] = []
    target_docs: list[Document] = []
    gold: dict[str, str] = {}
    if cfg.doc_size > 0:
        noise_counter = 0
        num_docs = cfg.num_pairs // cfg.doc_size
        for d in range(num_docs):
            sent_idx = range(d * cfg.doc_size, (d + 1) * cfg.doc_size)
            src_ids = [f"s{i:05d}" for i in sent_idx]
            source_docs.append(
                Document(
                    doc_id=f"sd{d:04d}",
                    sentence_ids=src_ids,
                    texts=[pairs[i][0] for i in sent_idx],
                )
            )
            # target side: delete, reorder tokens locally, then insert noise
            kept = [i for i in sent_idx if rng.random() >= cfg.deletion_rate]
            if not kept:
                kept = [list(sent_idx)[0]]
            entries: list[tuple[str, str]] = []
            for i in kept:
                tokens = list(tgt_tok[i])
                j = 0
                while j < len(tokens) - 1:
                    if rng.random() < cfg.reorder_rate:
                        tokens[j], tokens[j + 1] = tokens[j + 1], tokens[j]
                        j += 2
                    else:
                        j += 1
                entries.append((f"t{i:05d}", tgt_text(tokens)))
            with_noise: list[tuple[str, str]] = []
            for entry in entries:
                if rng.random() < cfg.noise_rate:
                    noise_len = int(rng.integers(lo, hi + 1))
                    noise = [int(rng.integers(0, cfg.vocab_size)) for _ in range(noise_len)]
                    with_noise.append((f"tn{noise_counter:05d}", tgt_text(noise)))
                    noise_counter += 1
                with_noise.append(entry)
            target_docs.append(
                Document(
                    doc_id=f"td{d:04d}",
                    sentence_ids=[sid for sid, _ in with_noise],
                    texts=[text for _, text in with_noise],
                )
            )
            gold[f"sd{d:04d}"] = f"td{d:04d}"
    return SynthCorpus(
        pairs=pairs, source_docs=source_docs, target_docs=target_docs, gold_doc_map=gold
    )
