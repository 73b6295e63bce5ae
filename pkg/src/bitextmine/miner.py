"""Mining parallel sentences and documents from unpaired corpora.

Retrieval always ranks by raw dot product; the calibrated confidence is
attached afterwards from the source embedding and the score alone.  Document
matching scores a candidate document by summing, over every retrieval event
that landed in it, the match rank, the weighted confidence, and the weighted
sentence-position offset.  A mutual-best-link counting baseline and a
monotone DP sentence aligner round out the toolbox.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import annindex
from .confidence import calibrate_scores, scale_and_shift, sigmoid
from .encoder import DualEncoderModel, encode_corpus
from .errors import ConfigInvalid, DuplicateId, NoCandidates
from .textpipe import FeaturizerConfig, normalize


@dataclass(frozen=True)
class RetrievalEntry:
    source_id: object
    target_id: object
    rank: int          # 0 = best match
    dot_score: float
    confidence: float


@dataclass(frozen=True)
class MinedPair:
    source_id: object
    target_id: object
    confidence: float
    dot_score: float


@dataclass
class Document:
    """An ordered run of sentences; a sentence's position is its index here."""

    doc_id: str
    sentence_ids: list
    texts: list[str]

    def __post_init__(self) -> None:
        if not self.sentence_ids:
            raise ConfigInvalid(f"document {self.doc_id!r} has no sentences")
        if len(self.sentence_ids) != len(self.texts):
            raise ConfigInvalid(f"document {self.doc_id!r}: ids and texts differ in length")
        if len(set(self.sentence_ids)) != len(self.sentence_ids):
            raise DuplicateId(f"document {self.doc_id!r} repeats a sentence id")

    def __len__(self) -> int:
        return len(self.sentence_ids)


@dataclass(frozen=True)
class DocMatchConfig:
    retrieval_depth: int = 10
    w1: float = 5.0
    w2: float = -2.0
    # Positions enter the offset term as raw 0-based indices by default; set
    # this to divide them by (len(doc) - 1) first.
    normalized_positions: bool = False

    def __post_init__(self) -> None:
        if self.retrieval_depth < 1:
            raise ConfigInvalid("retrieval_depth must be >= 1")


# ---------------------------------------------------------------------------
# Sentence-level retrieval and mining
# ---------------------------------------------------------------------------

def retrieve(
    sources: Sequence[tuple[object, str]],
    index: annindex.ExactIndex | annindex.PartitionedIndex,
    model: DualEncoderModel,
    n: int,
) -> list[list[RetrievalEntry]]:
    """Top-n targets per source, ranked by dot product, with confidences.

    Confidence needs only the source embedding and the score, so targets are
    never re-inspected and the ranking is untouched by the head.
    """
    u = encode_corpus([text for _, text in sources], "source", model)
    hits = annindex.search_batch(index, u, n)
    out: list[list[RetrievalEntry]] = []
    for (source_id, _), row, row_hits in zip(sources, u, hits):
        scale, shift = scale_and_shift(row, model.head)
        entries = [
            RetrievalEntry(
                source_id=source_id,
                target_id=tid,
                rank=r,
                dot_score=s,
                confidence=float(sigmoid(scale * s + shift)),
            )
            for r, (tid, s) in enumerate(row_hits)
        ]
        out.append(entries)
    return out


def mine_sentence_pairs(
    retrievals: Sequence[Sequence[RetrievalEntry]],
    source_texts: Mapping[object, str],
    target_texts: Mapping[object, str],
    featurizer: FeaturizerConfig,
    threshold: float = 0.5,
) -> list[MinedPair]:
    """Keep each source's best match when confident enough and not identical.

    A pair whose two sides normalize to the same string is dropped no matter
    how confident the model is.  Output is sorted by descending confidence.
    """
    mined: list[MinedPair] = []
    for entries in retrievals:
        if not entries:
            continue
        best = entries[0]
        if best.confidence < threshold:
            continue
        src = normalize(source_texts[best.source_id], featurizer)
        tgt = normalize(target_texts[best.target_id], featurizer)
        if src == tgt:
            continue
        mined.append(
            MinedPair(
                source_id=best.source_id,
                target_id=best.target_id,
                confidence=best.confidence,
                dot_score=best.dot_score,
            )
        )
    mined.sort(key=lambda p: (-p.confidence, str(p.source_id)))
    return mined


# ---------------------------------------------------------------------------
# Document matching
# ---------------------------------------------------------------------------

def _positions(doc: Document, normalized: bool) -> dict:
    denom = max(1, len(doc) - 1)
    return {
        sid: (i / denom if normalized else float(i))
        for i, sid in enumerate(doc.sentence_ids)
    }


def doc_score(
    source_doc: Document,
    candidate_doc: Document,
    retrievals: Sequence[Sequence[RetrievalEntry]],
    cfg: DocMatchConfig,
) -> float:
    """Sum of -rank + w1*confidence + w2*|position delta| over retrieval events
    that landed in the candidate document.

    `retrievals` is aligned with source_doc's sentences.  Every event counts;
    several sources hitting the same target each contribute their own term.
    """
    target_pos = _positions(candidate_doc, cfg.normalized_positions)
    denom = max(1, len(source_doc) - 1)
    total = 0.0
    for src_idx, entries in enumerate(retrievals):
        pos_x = src_idx / denom if cfg.normalized_positions else float(src_idx)
        for e in entries:
            pos_y = target_pos.get(e.target_id)
            if pos_y is None:
                continue
            total += -e.rank + cfg.w1 * e.confidence + cfg.w2 * abs(pos_x - pos_y)
    return total


def target_owner_map(target_docs: Sequence[Document]) -> dict:
    """sentence id -> (owning doc index, position); ids must be globally unique."""
    owners: dict = {}
    for di, doc in enumerate(target_docs):
        for pos, sid in enumerate(doc.sentence_ids):
            if sid in owners:
                raise DuplicateId(f"target sentence id {sid!r} appears in two documents")
            owners[sid] = (di, pos)
    return owners


def retrieve_for_docs(
    docs: Sequence[Document],
    index: annindex.ExactIndex | annindex.PartitionedIndex,
    model: DualEncoderModel,
    n: int,
) -> dict:
    """Batch-retrieve for every sentence of every document; keyed by sentence id."""
    sentences = [(sid, text) for doc in docs for sid, text in zip(doc.sentence_ids, doc.texts)]
    results = retrieve(sentences, index, model, n)
    return {sid: entries for (sid, _), entries in zip(sentences, results)}


def score_candidates(
    source_doc: Document,
    retrievals_by_sid: Mapping,
    target_docs: Sequence[Document],
    owners: Mapping,
    cfg: DocMatchConfig,
) -> dict[str, float]:
    """Candidate target docs of one source doc, scored; empty when no target
    of any retrieval belongs to a known document."""
    doc_retrievals = [retrievals_by_sid[sid] for sid in source_doc.sentence_ids]
    candidates = {
        owners[e.target_id][0]
        for entries in doc_retrievals
        for e in entries
        if e.target_id in owners
    }
    return {
        target_docs[di].doc_id: doc_score(source_doc, target_docs[di], doc_retrievals, cfg)
        for di in sorted(candidates)
    }


def best_by_score(scores: Mapping[str, float]) -> tuple[str, float]:
    """Highest-scoring entry; equal scores go to the ascending id."""
    best_id = None
    best = None
    for key in sorted(scores):
        s = scores[key]
        if best is None or s > best:
            best_id, best = key, s
    return best_id, best


def match_documents(
    source_docs: Sequence[Document],
    target_docs: Sequence[Document],
    model: DualEncoderModel,
    index: annindex.ExactIndex | annindex.PartitionedIndex,
    cfg: DocMatchConfig = DocMatchConfig(),
) -> dict[str, tuple[str, float]]:
    """Best-scoring target document per source document (ties: ascending id)."""
    owners = target_owner_map(target_docs)
    retrievals_by_sid = retrieve_for_docs(source_docs, index, model, cfg.retrieval_depth)
    matches: dict[str, tuple[str, float]] = {}
    for doc in source_docs:
        scores = score_candidates(doc, retrievals_by_sid, target_docs, owners, cfg)
        if not scores:
            raise NoCandidates(f"no candidate documents for {doc.doc_id!r}")
        matches[doc.doc_id] = best_by_score(scores)
    return matches


def mutual_link_counts(
    source_doc: Document,
    retrievals_by_sid: Mapping,
    reverse_best: Mapping,
    owners: Mapping,
    target_docs: Sequence[Document],
) -> dict[str, int]:
    """Count mutual best-match sentence links from one source doc per target doc."""
    counts: dict[str, int] = {}
    for sid in source_doc.sentence_ids:
        entries = retrievals_by_sid.get(sid) or []
        if not entries:
            continue
        best_tid = entries[0].target_id
        if reverse_best.get(best_tid) != sid:
            continue
        owner = owners.get(best_tid)
        if owner is None:
            continue
        doc_id = target_docs[owner[0]].doc_id
        counts[doc_id] = counts.get(doc_id, 0) + 1
    return counts


def alignment_count_baseline(
    source_docs: Sequence[Document],
    target_docs: Sequence[Document],
    retrievals_by_sid: Mapping,
    reverse_best: Mapping,
) -> dict[str, str]:
    """Match each source doc to the target doc holding the most mutual links.

    A link counts only when the source's best target also picks that source
    back as its own best match.  Raises NoCandidates for a document with no
    mutual links anywhere.
    """
    owners = target_owner_map(target_docs)
    matches: dict[str, str] = {}
    for doc in source_docs:
        counts = mutual_link_counts(doc, retrievals_by_sid, reverse_best, owners, target_docs)
        if not counts:
            raise NoCandidates(f"no mutual links for {doc.doc_id!r}")
        matches[doc.doc_id] = best_by_score(counts)[0]
    return matches


def best_source_per_target(
    target_docs: Sequence[Document],
    source_index: annindex.ExactIndex | annindex.PartitionedIndex,
    model: DualEncoderModel,
) -> dict:
    """Each target sentence's single best source sentence id (reverse direction)."""
    sentences = [(sid, text) for doc in target_docs for sid, text in zip(doc.sentence_ids, doc.texts)]
    v = encode_corpus([text for _, text in sentences], "target", model)
    hits = annindex.search_batch(source_index, v, 1)
    return {sid: row[0][0] for (sid, _), row in zip(sentences, hits) if row}


# ---------------------------------------------------------------------------
# Within-document alignment
# ---------------------------------------------------------------------------

def dp_align(
    source_doc: Document,
    target_doc: Document,
    model: DualEncoderModel,
    min_confidence: float = 0.5,
) -> list[MinedPair]:
    """Monotone 1-1 alignment maximizing total confidence; skips cost nothing.

    Pairs under `min_confidence` are excluded from the output after the DP.
    """
    u = encode_corpus(source_doc.texts, "source", model)
    v = encode_corpus(target_doc.texts, "target", model)
    scores = u @ v.T
    conf = np.vstack([calibrate_scores(u[i], scores[i], model.head) for i in range(len(u))])
    m, n = conf.shape
    table = np.zeros((m + 1, n + 1), dtype=np.float64)
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            table[i, j] = max(
                table[i - 1, j],
                table[i, j - 1],
                table[i - 1, j - 1] + conf[i - 1, j - 1],
            )
    pairs: list[MinedPair] = []
    i, j = m, n
    while i > 0 and j > 0:
        if table[i, j] == table[i - 1, j - 1] + conf[i - 1, j - 1]:
            if conf[i - 1, j - 1] >= min_confidence:
                pairs.append(
                    MinedPair(
                        source_id=source_doc.sentence_ids[i - 1],
                        target_id=target_doc.sentence_ids[j - 1],
                        confidence=float(conf[i - 1, j - 1]),
                        dot_score=float(scores[i - 1, j - 1]),
                    )
                )
            i -= 1
            j -= 1
        elif table[i, j] == table[i - 1, j]:
            i -= 1
        else:
            j -= 1
    pairs.reverse()
    return pairs
