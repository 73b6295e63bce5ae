"""Text normalization, tokenization, and hashed n-gram featurization.

Raw text goes through three pure stages: ``normalize`` canonicalizes the
string, ``tokenize`` splits it into word and punctuation tokens, and
``featurize`` maps tokens to hashed unigram/bigram ids.  Unigram and bigram
ids live in separate namespaces (the encoder keeps one embedding table per
n-gram order), so both ranges are simply ``[0, hash_buckets)``.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass

import numpy as np

from .errors import ConfigInvalid, EmptySentence

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

# Word-character runs, or single non-word non-space characters (punctuation).
_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def fnv1a_64(data: bytes, seed: int = 0) -> int:
    """Seeded 64-bit FNV-1a hash of a byte string."""
    h = _FNV_OFFSET ^ (seed & _MASK64)
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class FeaturizerConfig:
    hash_buckets: int = 4096
    hash_seed: int = 0
    lowercase: bool = True
    unicode_normalize: bool = True

    def __post_init__(self) -> None:
        if self.hash_buckets < 2 or self.hash_buckets & (self.hash_buckets - 1):
            raise ConfigInvalid(
                f"hash_buckets must be a power of two >= 2, got {self.hash_buckets}"
            )


@dataclass(frozen=True)
class FeatureIds:
    """Hashed feature ids for one sentence.

    ``token_count`` is the number of unigram tokens (the n in the encoder's
    1/sqrt(n) input scaling); bigram_ids always has token_count - 1 entries.
    """

    unigram_ids: np.ndarray
    bigram_ids: np.ndarray
    token_count: int


def normalize(text: str, cfg: FeaturizerConfig) -> str:
    """Canonical-compose, optionally lowercase, and collapse whitespace."""
    if cfg.unicode_normalize:
        text = unicodedata.normalize("NFC", text)
    if cfg.lowercase:
        text = text.lower()
    return " ".join(text.split())


def tokenize(text: str) -> list[str]:
    """Split into word tokens, with each punctuation character on its own."""
    return _TOKEN_RE.findall(text)


def featurize(tokens: list[str], cfg: FeaturizerConfig) -> FeatureIds:
    """Hash tokens into unigram and bigram bucket ids.

    Bigrams are adjacent token pairs joined with "_" before hashing.
    Raises EmptySentence when there are no tokens.
    """
    if not tokens:
        raise EmptySentence("cannot featurize an empty token sequence")
    mask = cfg.hash_buckets - 1
    seed = cfg.hash_seed
    uni = [fnv1a_64(t.encode("utf-8"), seed) & mask for t in tokens]
    bi = [
        fnv1a_64((tokens[i] + "_" + tokens[i + 1]).encode("utf-8"), seed) & mask
        for i in range(len(tokens) - 1)
    ]
    return FeatureIds(
        unigram_ids=np.asarray(uni, dtype=np.int64),
        bigram_ids=np.asarray(bi, dtype=np.int64),
        token_count=len(tokens),
    )


def featurize_text(text: str, cfg: FeaturizerConfig) -> FeatureIds:
    """normalize + tokenize + featurize in one call."""
    return featurize(tokenize(normalize(text, cfg)), cfg)
