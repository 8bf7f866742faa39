"""Text-embedding providers.

The transformer that produces tweet embeddings runs outside this package.
Its output reaches us as an embedding file keyed by a 64-bit FNV-1a hash of
the UTF-8 text, so tweets and profile texts share a single store. A
deterministic ``hash_test`` mode generates unit vectors from the text bytes
for tests and synthetic experiments.

File layout (little-endian)::

    b"TWEMB1\\0\\0"      magic, 8 bytes
    u32 dim
    u32 comment length, then UTF-8 comment
    u64 record count
    count x (u64 key, dim x float32)
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .datamodel import AccountProfile
from .errors import BadMagic, DimMismatch, EmbeddingMiss, TruncatedFile

EMBED_DIM = 768
MAGIC = b"TWEMB1\0\0"

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & _MASK64
    return h


def text_key(text: str) -> int:
    return fnv1a_64(text.encode("utf-8"))


def profile_text(profile: AccountProfile) -> str:
    return f"{profile.screen_name} {profile.display_name} {profile.description}"


def hash_vector(text: str, dim: int = EMBED_DIM, seed: int = 0) -> np.ndarray:
    """Unit-norm pseudo-random vector determined by ``(seed, text)``."""
    rng = np.random.default_rng([seed, text_key(text)])
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def signal_injection_encode(text: str, class_direction, strength: float, dim: int = EMBED_DIM,
                            seed: int = 0) -> np.ndarray:
    """Hash vector plus ``strength`` times the unit class direction, renormalised."""
    base = hash_vector(text, dim, seed)
    if strength == 0:
        return base
    return _unit(base + strength * _unit(class_direction))


class EmbeddingStore:
    """Immutable mapping from text to a ``dim``-dimensional embedding.

    ``source="file"`` serves stored vectors and raises :class:`EmbeddingMiss`
    for unknown texts; ``source="hash_test"`` computes :func:`hash_vector`.
    """

    def __init__(self, dim: int = EMBED_DIM, entries: Mapping[int, np.ndarray] | None = None,
                 source: str = "file", seed: int = 0, comment: str = ""):
        if source not in ("file", "hash_test"):
            raise ValueError(f"unknown embedding source {source!r}")
        self.dim = dim
        self.source = source
        self.seed = seed
        self.comment = comment
        self._entries: dict[int, np.ndarray] = {}
        for key, vec in (entries or {}).items():
            vec = np.asarray(vec, dtype=np.float32)
            if vec.shape != (dim,):
                raise DimMismatch(f"vector for key {key} has shape {vec.shape}, expected ({dim},)")
            vec.setflags(write=False)
            self._entries[int(key)] = vec

    @classmethod
    def hash_test(cls, dim: int = EMBED_DIM, seed: int = 0) -> "EmbeddingStore":
        return cls(dim=dim, source="hash_test", seed=seed)

    @classmethod
    def from_texts(cls, vectors: Mapping[str, np.ndarray], dim: int = EMBED_DIM, comment: str = "") -> "EmbeddingStore":
        return cls(dim=dim, entries={text_key(t): v for t, v in vectors.items()}, comment=comment)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, text: str) -> bool:
        return self.source == "hash_test" or text_key(text) in self._entries

    def keys(self):
        return self._entries.keys()

    def vector(self, key: int) -> np.ndarray:
        return self._entries[key]

    def encode_text(self, text: str) -> np.ndarray:
        if self.source == "hash_test":
            return hash_vector(text, self.dim, self.seed)
        key = text_key(text)
        try:
            return self._entries[key]
        except KeyError:
            raise EmbeddingMiss(f"no embedding for text with key {key:#018x}") from None

    def encode_profile(self, profile: AccountProfile) -> np.ndarray:
        return self.encode_text(profile_text(profile))

    def encode_many(self, texts: Iterable[str]) -> np.ndarray:
        texts = list(texts)
        out = np.empty((len(texts), self.dim), dtype=np.float32)
        for i, t in enumerate(texts):
            out[i] = self.encode_text(t)
        return out

    def signal_injection_encode(self, text: str, class_direction, strength: float) -> np.ndarray:
        if self.source != "hash_test":
            raise ValueError("signal injection needs a hash_test store")
        return signal_injection_encode(text, class_direction, strength, self.dim, self.seed)


def write_embedding_file(path, entries: Mapping[int, np.ndarray], dim: int = EMBED_DIM, comment: str = "") -> Path:
    path = Path(path)
    note = comment.encode("utf-8")
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", dim, len(note)))
        fh.write(note)
        fh.write(struct.pack("<Q", len(entries)))
        for key in sorted(entries):
            vec = np.asarray(entries[key], dtype="<f4")
            if vec.shape != (dim,):
                raise DimMismatch(f"vector for key {key} has shape {vec.shape}, expected ({dim},)")
            fh.write(struct.pack("<Q", key))
            fh.write(vec.tobytes())
    return path


def save_embedding_store(store: EmbeddingStore, path) -> Path:
    return write_embedding_file(path, store._entries, store.dim, store.comment)


def load_embedding_store(path, dim: int | None = EMBED_DIM) -> EmbeddingStore:
    """Read an embedding file; ``dim=None`` accepts whatever dimension is declared."""
    blob = Path(path).read_bytes()
    if blob[:8] != MAGIC:
        raise BadMagic(f"{path}: not an embedding file")
    header = 8 + 8
    if len(blob) < header:
        raise TruncatedFile(f"{path}: header cut short")
    file_dim, note_len = struct.unpack_from("<II", blob, 8)
    if dim is not None and file_dim != dim:
        raise DimMismatch(f"{path}: dimension {file_dim}, expected {dim}")
    pos = header + note_len
    if len(blob) < pos + 8:
        raise TruncatedFile(f"{path}: header cut short")
    comment = blob[header:pos].decode("utf-8")
    (count,) = struct.unpack_from("<Q", blob, pos)
    pos += 8
    record = 8 + 4 * file_dim
    if len(blob) - pos < count * record:
        raise TruncatedFile(f"{path}: declares {count} records, holds {(len(blob) - pos) // record}")
    body = np.frombuffer(blob, dtype=np.dtype([("key", "<u8"), ("vec", "<f4", (file_dim,))]),
                         count=count, offset=pos)
    entries = {int(k): v for k, v in zip(body["key"], body["vec"])}
    return EmbeddingStore(dim=file_dim, entries=entries, source="file", comment=comment)
