"""One binary convention for every on-disk artifact.

Layout building blocks: 4-byte magic, u32 format version, little-endian
scalars, and tensors stored as a u32 ndim, u32 dims, then raw little-endian
float32 data in row-major order.  Checkpoints additionally carry the
featurizer and tower configs, the step counter, and the exact PCG64 state so
a reloaded model continues the same deterministic stream.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .confidence import ConfidenceHead
from .encoder import DualEncoderModel, ModelConfig, TowerConfig, TowerParams
from .errors import ConfigInvalid, CorruptFile, VersionMismatch
from .textpipe import FeaturizerConfig

CHECKPOINT_MAGIC = b"BXM1"
EMBEDDINGS_MAGIC = b"BXE1"
FORMAT_VERSION = 1


class _Writer:
    def __init__(self) -> None:
        self.buf = bytearray()

    def u8(self, v: int) -> None:
        self.buf += struct.pack("<B", v)

    def u32(self, v: int) -> None:
        self.buf += struct.pack("<I", v)

    def u64(self, v: int) -> None:
        self.buf += struct.pack("<Q", v)

    def i64(self, v: int) -> None:
        self.buf += struct.pack("<q", v)

    def f64(self, v: float) -> None:
        self.buf += struct.pack("<d", v)

    def u128(self, v: int) -> None:
        self.buf += v.to_bytes(16, "little")

    def tensor(self, a: np.ndarray) -> None:
        self.u32(a.ndim)
        for dim in a.shape:
            self.u32(dim)
        self.buf += np.ascontiguousarray(a, dtype="<f4").tobytes()


class _Reader:
    def __init__(self, data: bytes, name: str) -> None:
        self.data = data
        self.pos = 0
        self.name = name

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptFile(f"{self.name}: truncated (needed {n} bytes at offset {self.pos})")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def i64(self) -> int:
        return struct.unpack("<q", self.take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def u128(self) -> int:
        return int.from_bytes(self.take(16), "little")

    def tensor(self) -> np.ndarray:
        ndim = self.u32()
        if ndim > 8:
            raise CorruptFile(f"{self.name}: implausible tensor rank {ndim}")
        shape = tuple(self.u32() for _ in range(ndim))
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw = self.take(4 * count)
        return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()

    def done(self) -> None:
        if self.pos != len(self.data):
            raise CorruptFile(f"{self.name}: {len(self.data) - self.pos} trailing bytes")


def _check_header(r: _Reader, magic: bytes) -> None:
    got = r.take(4)
    if got != magic:
        raise CorruptFile(f"{r.name}: bad magic {got!r}, expected {magic!r}")
    version = r.u32()
    if version > FORMAT_VERSION:
        raise VersionMismatch(f"{r.name}: format version {version} > supported {FORMAT_VERSION}")


def _write_tower_config(w: _Writer, cfg: TowerConfig) -> None:
    w.u32(cfg.input_dim)
    w.u32(cfg.residual_skip)
    w.u32(cfg.num_layers)
    for dim in cfg.hidden_dims:
        w.u32(dim)


def _read_tower_config(r: _Reader) -> TowerConfig:
    input_dim = r.u32()
    skip = r.u32()
    n = r.u32()
    if n == 0 or n > 1024:
        raise CorruptFile(f"{r.name}: implausible layer count {n}")
    dims = tuple(r.u32() for _ in range(n))
    return TowerConfig(input_dim=input_dim, hidden_dims=dims, residual_skip=skip)


def _write_tower_params(w: _Writer, p: TowerParams) -> None:
    w.tensor(p.unigram_table)
    w.tensor(p.bigram_table)
    for wt, b in zip(p.weights, p.biases):
        w.tensor(wt)
        w.tensor(b)


def _read_tower_params(r: _Reader, cfg: TowerConfig, buckets: int) -> TowerParams:
    uni = r.tensor()
    bi = r.tensor()
    if uni.shape != (buckets, cfg.input_dim) or bi.shape != (buckets, cfg.input_dim):
        raise CorruptFile(f"{r.name}: embedding table shape mismatch")
    weights, biases = [], []
    in_dim = cfg.input_dim
    for out_dim in cfg.hidden_dims:
        wt = r.tensor()
        b = r.tensor()
        if wt.shape != (in_dim, out_dim) or b.shape != (out_dim,):
            raise CorruptFile(f"{r.name}: layer tensor shape mismatch")
        weights.append(wt)
        biases.append(b)
        in_dim = out_dim
    return TowerParams(unigram_table=uni, bigram_table=bi, weights=weights, biases=biases)


def write_checkpoint(model: DualEncoderModel, path: str | Path) -> None:
    state = model.rng.bit_generator.state
    if state.get("bit_generator") != "PCG64":
        raise ConfigInvalid("checkpointing requires a PCG64-backed generator")
    w = _Writer()
    w.buf += CHECKPOINT_MAGIC
    w.u32(FORMAT_VERSION)
    fz = model.featurizer
    w.u64(fz.hash_buckets)
    w.i64(fz.hash_seed)
    w.u8(int(fz.lowercase))
    w.u8(int(fz.unicode_normalize))
    _write_tower_config(w, model.config.source)
    _write_tower_config(w, model.config.target)
    w.f64(model.config.dropout_rate)
    _write_tower_params(w, model.source)
    _write_tower_params(w, model.target)
    w.tensor(model.head.scale_weights)
    w.tensor(model.head.scale_bias)
    w.tensor(model.head.shift_weights)
    w.tensor(model.head.shift_bias)
    w.u64(model.step)
    w.u128(state["state"]["state"])
    w.u128(state["state"]["inc"])
    w.u8(int(state["has_uint32"]))
    w.u32(state["uinteger"])
    Path(path).write_bytes(bytes(w.buf))


def read_checkpoint(path: str | Path) -> DualEncoderModel:
    name = str(path)
    r = _Reader(Path(path).read_bytes(), name)
    _check_header(r, CHECKPOINT_MAGIC)
    fz = FeaturizerConfig(
        hash_buckets=r.u64(),
        hash_seed=r.i64(),
        lowercase=bool(r.u8()),
        unicode_normalize=bool(r.u8()),
    )
    source_cfg = _read_tower_config(r)
    target_cfg = _read_tower_config(r)
    dropout = r.f64()
    config = ModelConfig(featurizer=fz, source=source_cfg, target=target_cfg, dropout_rate=dropout)
    source = _read_tower_params(r, source_cfg, fz.hash_buckets)
    target = _read_tower_params(r, target_cfg, fz.hash_buckets)
    d = source_cfg.output_dim
    head = ConfidenceHead(
        scale_weights=r.tensor(),
        scale_bias=r.tensor(),
        shift_weights=r.tensor(),
        shift_bias=r.tensor(),
        dropout_rate=dropout,
    )
    if head.scale_weights.shape != (2 * d,) or head.scale_bias.shape != (1,):
        raise CorruptFile(f"{name}: confidence head shape mismatch")
    step = r.u64()
    rng_state = r.u128()
    rng_inc = r.u128()
    has_uint32 = r.u8()
    uinteger = r.u32()
    r.done()
    bitgen = np.random.PCG64()
    bitgen.state = {
        "bit_generator": "PCG64",
        "state": {"state": rng_state, "inc": rng_inc},
        "has_uint32": has_uint32,
        "uinteger": uinteger,
    }
    return DualEncoderModel(
        config=config,
        source=source,
        target=target,
        head=head,
        step=step,
        rng=np.random.Generator(bitgen),
    )


def write_embeddings(matrix: np.ndarray, path: str | Path) -> None:
    if matrix.ndim != 2:
        raise ConfigInvalid("embedding file stores a 2-d matrix")
    w = _Writer()
    w.buf += EMBEDDINGS_MAGIC
    w.u32(FORMAT_VERSION)
    w.tensor(matrix)
    Path(path).write_bytes(bytes(w.buf))


def read_embeddings(path: str | Path) -> np.ndarray:
    r = _Reader(Path(path).read_bytes(), str(path))
    _check_header(r, EMBEDDINGS_MAGIC)
    m = r.tensor()
    if m.ndim != 2:
        raise CorruptFile(f"{r.name}: expected a 2-d matrix, got rank {m.ndim}")
    r.done()
    return m
