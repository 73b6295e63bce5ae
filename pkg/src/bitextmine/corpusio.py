"""Text file formats: parallel corpora, document corpora, flat configs.

Parallel corpus files are UTF-8 TSV with exactly one tab per line and no
empty side.  Document corpus files carry ``doc_id<TAB>sentence_index<TAB>
text`` with 0-based contiguous indices per document.  Config files are flat
``key=value`` lines whose keys mirror the config dataclass field names.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ParseError
from .miner import Document, MinedPair


def read_parallel_corpus(path: str | Path) -> list[tuple[str, str]]:
    pairs: list[tuple[str, str]] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise ParseError(f"{path}: line {lineno}: expected exactly one tab, got {len(cols) - 1}")
            src, tgt = cols
            if not src or not tgt:
                raise ParseError(f"{path}: line {lineno}: empty side")
            pairs.append((src, tgt))
    return pairs


def write_parallel_corpus(pairs: Iterable[tuple[str, str]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for src, tgt in pairs:
            f.write(f"{src}\t{tgt}\n")


def read_documents(path: str | Path) -> list[Document]:
    """Load documents; sentence ids are synthesized as "<doc_id>:<index>"."""
    order: list[str] = []
    rows: dict[str, list[tuple[int, str]]] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise ParseError(f"{path}: line {lineno}: expected doc_id<TAB>index<TAB>text")
            doc_id, idx_str, text = cols
            try:
                idx = int(idx_str)
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: sentence index {idx_str!r} not an integer")
            if not doc_id or not text:
                raise ParseError(f"{path}: line {lineno}: empty doc id or text")
            if doc_id not in rows:
                order.append(doc_id)
                rows[doc_id] = []
            rows[doc_id].append((idx, text))
    docs = []
    for doc_id in order:
        entries = sorted(rows[doc_id])
        indices = [i for i, _ in entries]
        if indices != list(range(len(entries))):
            raise ParseError(f"{path}: document {doc_id!r}: sentence indices not contiguous from 0")
        docs.append(
            Document(
                doc_id=doc_id,
                sentence_ids=[f"{doc_id}:{i}" for i, _ in entries],
                texts=[t for _, t in entries],
            )
        )
    return docs


def write_documents(docs: Sequence[Document], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for doc in docs:
            for idx, text in enumerate(doc.texts):
                f.write(f"{doc.doc_id}\t{idx}\t{text}\n")


def write_mined_pairs(pairs: Sequence[MinedPair], path: str | Path) -> None:
    """TSV rows: source_id, target_id, dot_score, confidence."""
    with open(path, "w", encoding="utf-8") as f:
        for p in pairs:
            f.write(f"{p.source_id}\t{p.target_id}\t{p.dot_score:.6f}\t{p.confidence:.6f}\n")


def read_doc_map(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) < 2:
                raise ParseError(f"{path}: line {lineno}: expected source_doc<TAB>target_doc")
            out[cols[0]] = cols[1]
    return out


def write_doc_map(matches: Mapping[str, tuple[str, float]], path: str | Path) -> None:
    """TSV rows: source_doc_id, target_doc_id, score."""
    with open(path, "w", encoding="utf-8") as f:
        for src_doc in sorted(matches):
            tgt_doc, score = matches[src_doc]
            f.write(f"{src_doc}\t{tgt_doc}\t{score:.6f}\n")


# ---------------------------------------------------------------------------
# Flat key=value config files
# ---------------------------------------------------------------------------

def read_config(path: str | Path) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ParseError(f"{path}: line {lineno}: expected key=value")
            key, _, value = stripped.partition("=")
            key = key.strip()
            value = value.strip()
            if not key:
                raise ParseError(f"{path}: line {lineno}: empty key")
            if key in values:
                raise ParseError(f"{path}: line {lineno}: duplicate key {key!r}")
            values[key] = value
    return values


class ConfigReader:
    """Typed access over a parsed key=value mapping, tracking unknown keys."""

    def __init__(self, values: Mapping[str, str], origin: str) -> None:
        self.values = dict(values)
        self.origin = origin
        self.seen: set[str] = set()

    def _raw(self, key: str, default):
        self.seen.add(key)
        if key in self.values:
            return self.values[key]
        return default

    def get_int(self, key: str, default: int) -> int:
        raw = self._raw(key, default)
        try:
            return int(raw)
        except (TypeError, ValueError):
            raise ParseError(f"{self.origin}: key {key!r}: expected integer, got {raw!r}")

    def get_float(self, key: str, default: float) -> float:
        raw = self._raw(key, default)
        try:
            return float(raw)
        except (TypeError, ValueError):
            raise ParseError(f"{self.origin}: key {key!r}: expected number, got {raw!r}")

    def get_bool(self, key: str, default: bool) -> bool:
        raw = self._raw(key, default)
        if isinstance(raw, bool):
            return raw
        if raw in ("true", "1", "yes"):
            return True
        if raw in ("false", "0", "no"):
            return False
        raise ParseError(f"{self.origin}: key {key!r}: expected true/false, got {raw!r}")

    def get_int_list(self, key: str, default: Sequence[int]) -> tuple[int, ...]:
        raw = self._raw(key, None)
        if raw is None:
            return tuple(default)
        try:
            return tuple(int(part) for part in str(raw).split(",") if part.strip())
        except ValueError:
            raise ParseError(f"{self.origin}: key {key!r}: expected comma-separated integers")

    def reject_unknown(self) -> None:
        unknown = set(self.values) - self.seen
        if unknown:
            raise ParseError(f"{self.origin}: unknown keys: {', '.join(sorted(unknown))}")
