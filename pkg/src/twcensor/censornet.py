"""User-level censorship classifier.

Each tweet embedding (optionally joined with a 64-d projection of five
per-tweet counts) is collapsed across the user's tweets by one of five
aggregators; the user vector (optionally joined with a profile embedding)
goes through a three-layer MLP with a sigmoid output.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .encoder import fnv1a_64
from .errors import CorruptCheckpoint, ProfileMissing, ShapeMismatch, VersionMismatch
from .nn import (
    AttentionPool,
    BatchNorm1d,
    BiLSTM,
    Conv1dSame,
    Dense,
    Dropout,
    MaskedMaxPool,
    MaskedMeanPool,
    ReLU,
    Sigmoid,
)

AGGREGATORS = ("mean", "max", "attention", "conv", "bilstm")
META_FEATURES = ("retweet_count", "like_count", "follower_count_at_post",
                 "friend_count_at_post", "statuses_count_at_post")


@dataclass(frozen=True)
class ModelConfig:
    aggregator: str = "conv"
    use_meta: bool = False
    use_profile: bool = False
    max_tweets: int = 50
    embed_dim: int = 768
    meta_in: int = 5
    meta_hidden: int = 64
    conv_filters: int = 128
    conv_kernels: tuple[int, ...] = (3, 5, 7)
    lstm_hidden: int = 384
    head: tuple[int, ...] = (512, 128)
    dropout: float = 0.3
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        if self.aggregator not in AGGREGATORS:
            raise ValueError(f"aggregator must be one of {AGGREGATORS}, got {self.aggregator!r}")

    @property
    def d_r(self) -> int:
        return self.embed_dim + (self.meta_hidden if self.use_meta else 0)

    @property
    def d_agg(self) -> int:
        if self.aggregator == "conv":
            return self.conv_filters * len(self.conv_kernels)
        if self.aggregator == "bilstm":
            return 2 * self.lstm_hidden
        return self.d_r

    @property
    def d_in(self) -> int:
        return self.d_agg + (self.embed_dim if self.use_profile else 0)

    @property
    def variant(self) -> str:
        name = {"mean": "Mean", "max": "Max", "attention": "Attention", "conv": "Conv", "bilstm": "BiLSTM"}
        parts = [name[self.aggregator]]
        if self.use_meta:
            parts.append("Meta")
        if self.use_profile:
            parts.append("Profile")
        return " + ".join(parts)

    def to_lines(self) -> list[str]:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = int(v)
            out.append(f"{f.name}={v}")
        out.append("meta_features=" + ",".join(META_FEATURES))
        return out

    @classmethod
    def from_mapping(cls, kv: dict[str, str]) -> "ModelConfig":
        kwargs = {}
        for f in fields(cls):
            if f.name not in kv:
                continue
            raw = kv[f.name]
            default = f.default
            if isinstance(default, bool):
                kwargs[f.name] = raw.strip().lower() in ("1", "true", "yes")
            elif isinstance(default, tuple):
                kwargs[f.name] = tuple(int(x) for x in raw.split(",") if x)
            elif isinstance(default, int):
                kwargs[f.name] = int(raw)
            elif isinstance(default, float):
                kwargs[f.name] = float(raw)
            else:
                kwargs[f.name] = raw
        return cls(**kwargs)


@dataclass
class UserExample:
    """Model input for one account: up to ``max_tweets`` tweets plus an optional profile vector."""

    account_id: int
    label: int
    embeddings: np.ndarray        # [n, embed_dim]
    meta: np.ndarray              # [n, 5]
    profile: np.ndarray | None = None

    @property
    def n_tweets(self) -> int:
        return len(self.embeddings)


@dataclass
class UserBatch:
    account_ids: np.ndarray
    labels: np.ndarray
    embeddings: np.ndarray        # [B, L, E], zero padded
    meta: np.ndarray              # [B, L, 5], zero padded
    mask: np.ndarray              # [B, L]
    profile: np.ndarray | None    # [B, E]

    def __len__(self) -> int:
        return len(self.account_ids)


def make_batch(users: Sequence[UserExample], dtype=np.float32, need_profile: bool = False) -> UserBatch:
    lengths = np.array([u.n_tweets for u in users])
    L = int(lengths.max())
    B = len(users)
    E = users[0].embeddings.shape[1]
    emb = np.zeros((B, L, E), dtype=dtype)
    meta = np.zeros((B, L, users[0].meta.shape[1]), dtype=dtype)
    for i, u in enumerate(users):
        emb[i, : u.n_tweets] = u.embeddings
        meta[i, : u.n_tweets] = u.meta
    profile = None
    if need_profile:
        missing = [u.account_id for u in users if u.profile is None]
        if missing:
            raise ProfileMissing(f"profile vector missing for accounts {missing[:5]}")
        profile = np.stack([u.profile for u in users]).astype(dtype)
    return UserBatch(
        account_ids=np.array([u.account_id for u in users]),
        labels=np.array([u.label for u in users], dtype=dtype),
        embeddings=emb,
        meta=meta,
        mask=np.arange(L)[None, :] < lengths[:, None],
        profile=profile,
    )


class ConvAggregator:
    """Parallel same-convolutions, each followed by ReLU and masked max-pool over time."""

    def __init__(self, d_in, filters, kernels, rng, dtype):
        self.convs = [Conv1dSame(d_in, filters, k, rng=rng, dtype=dtype) for k in kernels]
        self.relus = [ReLU() for _ in kernels]
        self.pools = [MaskedMaxPool() for _ in kernels]
        self.filters = filters

    def layers(self):
        return {f"conv{c.kernel}": c for c in self.convs}

    def forward(self, x, mask, training=False):
        outs = []
        for conv, relu, pool in zip(self.convs, self.relus, self.pools):
            outs.append(pool.forward(relu.forward(conv.forward(x)), mask))
        return np.concatenate(outs, axis=1)

    def backward(self, dout):
        dx = None
        for j, (conv, relu, pool) in enumerate(zip(self.convs, self.relus, self.pools)):
            part = dout[:, j * self.filters: (j + 1) * self.filters]
            g = conv.backward(relu.backward(pool.backward(part)))
            dx = g if dx is None else dx + g
        return dx


class TwCensorNet:
    """The classifier with explicit forward and backward passes."""

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        c = config
        self.layers: dict[str, object] = {}
        if c.use_meta:
            self.meta_bn1 = BatchNorm1d(c.meta_in, c.bn_momentum, c.bn_eps, dtype)
            self.meta_dense = Dense(c.meta_in, c.meta_hidden, rng=rng, dtype=dtype)
            self.meta_relu = ReLU()
            self.meta_bn2 = BatchNorm1d(c.meta_hidden, c.bn_momentum, c.bn_eps, dtype)
            self.layers.update(meta_bn1=self.meta_bn1, meta_dense=self.meta_dense, meta_bn2=self.meta_bn2)

        if c.aggregator == "mean":
            self.agg = MaskedMeanPool()
        elif c.aggregator == "max":
            self.agg = MaskedMaxPool()
        elif c.aggregator == "attention":
            self.agg = AttentionPool(c.d_r, rng=rng, dtype=dtype)
            self.layers["attention"] = self.agg
        elif c.aggregator == "conv":
            self.agg = ConvAggregator(c.d_r, c.conv_filters, c.conv_kernels, rng, dtype)
            self.layers.update(self.agg.layers())
        else:
            self.agg = BiLSTM(c.d_r, c.lstm_hidden, rng=rng, dtype=dtype)
            self.layers["bilstm"] = self.agg

        sizes = (c.d_in,) + tuple(c.head)
        self.hidden = []
        for j in range(len(c.head)):
            dense = Dense(sizes[j], sizes[j + 1], rng=rng, dtype=dtype)
            self.layers[f"head{j}"] = dense
            self.hidden.append((dense, ReLU(), Dropout(c.dropout)))
        self.out = Dense(sizes[-1], 1, rng=rng, dtype=dtype)
        self.layers["out"] = self.out
        self.sigmoid = Sigmoid()

    # -- parameter access ---------------------------------------------------------

    def params(self) -> dict[str, np.ndarray]:
        return {f"{ln}.{pn}": p for ln, layer in self.layers.items() for pn, p in layer.params.items()}

    def grads(self) -> dict[str, np.ndarray]:
        return {f"{ln}.{pn}": g for ln, layer in self.layers.items() for pn, g in layer.grads.items()}

    def state(self) -> dict[str, np.ndarray]:
        """Non-trainable arrays (batch-norm running statistics)."""
        out = {}
        if self.config.use_meta:
            for ln in ("meta_bn1", "meta_bn2"):
                for k, v in self.layers[ln].state().items():
                    out[f"{ln}.{k}"] = v
        return out

    def set_state(self, arrays: dict[str, np.ndarray]):
        for name, value in arrays.items():
            ln, k = name.split(".", 1)
            setattr(self.layers[ln], k, np.array(value, dtype=self.dtype))

    def tensors(self) -> dict[str, np.ndarray]:
        return {**self.params(), **self.state()}

    def zero_grad(self):
        for layer in self.layers.values():
            layer.zero_grad()

    # -- forward / backward ---------------------------------------------------------

    def represent(self, batch: UserBatch, training: bool = False) -> np.ndarray:
        """Per-tweet representations ``[B, L, d_r]``, zero at padded positions."""
        emb = batch.embeddings.astype(self.dtype, copy=False)
        if emb.shape[2] != self.config.embed_dim:
            raise ShapeMismatch(f"embeddings have dim {emb.shape[2]}, model expects {self.config.embed_dim}")
        if not self.config.use_meta:
            return emb
        idx = np.nonzero(batch.mask)
        self._meta_idx = idx
        rows = batch.meta[idx].astype(self.dtype, copy=False)
        z = self.meta_bn1.forward(rows, training)
        z = self.meta_relu.forward(self.meta_dense.forward(z))
        z = self.meta_bn2.forward(z, training)
        m_hat = np.zeros(emb.shape[:2] + (self.config.meta_hidden,), dtype=self.dtype)
        m_hat[idx] = z
        return np.concatenate([emb, m_hat], axis=2)

    def aggregate(self, reps: np.ndarray, mask: np.ndarray, training: bool = False) -> np.ndarray:
        return self.agg.forward(reps, mask)

    def forward(self, batch: UserBatch, training: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        """Scores in (0, 1), one per user. ``training`` enables dropout and batch statistics."""
        c = self.config
        reps = self.represent(batch, training)
        u = self.aggregate(reps, batch.mask, training)
        if c.use_profile:
            if batch.profile is None:
                raise ProfileMissing("model uses profile features but the batch has none")
            u = np.concatenate([u, batch.profile.astype(self.dtype, copy=False)], axis=1)
        if training and rng is None:
            rng = np.random.default_rng()
        for dense, relu, drop in self.hidden:
            u = drop.forward(relu.forward(dense.forward(u)), training, rng)
        return self.sigmoid.forward(self.out.forward(u))[:, 0]

    def backward(self, dscores: np.ndarray) -> None:
        """Backpropagate d(loss)/d(score); gradients land in :meth:`grads`."""
        c = self.config
        self.zero_grad()
        d = self.out.backward(self.sigmoid.backward(dscores[:, None].astype(self.dtype)))
        for dense, relu, drop in reversed(self.hidden):
            d = dense.backward(relu.backward(drop.backward(d)))
        d_agg = d[:, : c.d_agg]
        dreps = self.agg.backward(d_agg)
        if c.use_meta:
            dm = dreps[..., c.embed_dim:][self._meta_idx]
            dm = self.meta_bn2.backward(dm)
            dm = self.meta_dense.backward(self.meta_relu.backward(dm))
            self.meta_bn1.backward(dm)

    def predict(self, users: Sequence[UserExample], batch_size: int = 64) -> np.ndarray:
        """Evaluation-mode scores for a list of users."""
        out = []
        for s in range(0, len(users), batch_size):
            batch = make_batch(users[s: s + batch_size], self.dtype, self.config.use_profile)
            out.append(self.forward(batch, training=False))
        return np.concatenate(out) if out else np.zeros(0, dtype=self.dtype)


def predict_user(tweets: UserExample, model: TwCensorNet) -> float:
    return float(model.predict([tweets])[0])


@dataclass(frozen=True)
class PredictionRecord:
    account_id: int
    score: float
    threshold: float
    decision: int


@dataclass
class ModelCheckpoint:
    model: TwCensorNet
    threshold: float = 0.5
    metadata: dict[str, str] = field(default_factory=dict)

    @property
    def config(self) -> ModelConfig:
        return self.model.config

    def predict(self, users: Sequence[UserExample]) -> list[PredictionRecord]:
        scores = self.model.predict(users)
        return [
            PredictionRecord(u.account_id, float(s), self.threshold, int(s > self.threshold))
            for u, s in zip(users, scores)
        ]


# -- checkpoint file -----------------------------------------------------------------

CHECKPOINT_MAGIC = b"TWCN1\0"
CHECKPOINT_VERSION = 1


def _config_block(ckpt: ModelCheckpoint) -> bytes:
    lines = ckpt.config.to_lines() + [f"threshold={ckpt.threshold!r}"]
    lines += [f"meta.{k}={v}" for k, v in sorted(ckpt.metadata.items())]
    return ("\n".join(lines) + "\n").encode("utf-8")


def checkpoint_bytes(ckpt: ModelCheckpoint) -> bytes:
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION)]
    block = _config_block(ckpt)
    parts += [struct.pack("<I", len(block)), block]
    tensors = ckpt.model.tensors()
    parts.append(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        raw_name = name.encode("utf-8")
        parts += [struct.pack("<I", len(raw_name)), raw_name, struct.pack("<B", arr.ndim)]
        parts += [struct.pack(f"<{arr.ndim}I", *arr.shape), arr.tobytes()]
    body = b"".join(parts)
    return body + struct.pack("<Q", fnv1a_64(body))


def save_checkpoint(ckpt: ModelCheckpoint, path) -> Path:
    """Write a checkpoint; tensors are stored as float32."""
    path = Path(path)
    path.write_bytes(checkpoint_bytes(ckpt))
    return path


def _read(blob: bytes, pos: int, fmt: str):
    size = struct.calcsize(fmt)
    if pos + size > len(blob):
        raise CorruptCheckpoint("checkpoint truncated")
    return struct.unpack_from(fmt, blob, pos), pos + size


def parse_checkpoint(blob: bytes, dtype=np.float32) -> ModelCheckpoint:
    if blob[:6] != CHECKPOINT_MAGIC:
        raise CorruptCheckpoint("not a checkpoint file")
    (version,), pos = _read(blob, 6, "<I")
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch(f"checkpoint version {version}, supported {CHECKPOINT_VERSION}")
    if len(blob) < pos + 8:
        raise CorruptCheckpoint("checkpoint truncated")
    (stored,) = struct.unpack_from("<Q", blob, len(blob) - 8)
    body = blob[:-8]
    if fnv1a_64(body) != stored:
        raise CorruptCheckpoint("checksum mismatch")

    (n_block,), pos = _read(body, pos, "<I")
    block = body[pos: pos + n_block].decode("utf-8")
    pos += n_block
    kv = dict(line.split("=", 1) for line in block.splitlines() if "=" in line)
    config = ModelConfig.from_mapping(kv)
    threshold = float(kv.get("threshold", 0.5))
    metadata = {k[5:]: v for k, v in kv.items() if k.startswith("meta.")}

    model = TwCensorNet(config, seed=0, dtype=dtype)
    expected = model.tensors()
    (count,), pos = _read(body, pos, "<I")
    seen = set()
    state = {}
    for _ in range(count):
        (n_name,), pos = _read(body, pos, "<I")
        name = body[pos: pos + n_name].decode("utf-8")
        pos += n_name
        (rank,), pos = _read(body, pos, "<B")
        shape, pos = _read(body, pos, f"<{rank}I")
        size = int(np.prod(shape)) * 4
        if pos + size > len(body):
            raise CorruptCheckpoint(f"tensor {name} truncated")
        arr = np.frombuffer(body, dtype="<f4", count=size // 4, offset=pos).reshape(shape)
        pos += size
        if name not in expected:
            raise CorruptCheckpoint(f"unexpected tensor {name}")
        if tuple(shape) != expected[name].shape:
            raise CorruptCheckpoint(f"tensor {name} has shape {tuple(shape)}, config implies {expected[name].shape}")
        if name in model.state():
            state[name] = arr
        else:
            expected[name][...] = arr
        seen.add(name)
    if seen != set(expected):
        raise CorruptCheckpoint(f"missing tensors: {sorted(set(expected) - seen)}")
    if pos != len(body):
        raise CorruptCheckpoint("trailing bytes after tensors")
    model.set_state(state)
    return ModelCheckpoint(model=model, threshold=threshold, metadata=metadata)


def load_checkpoint(path, dtype=np.float32) -> ModelCheckpoint:
    return parse_checkpoint(Path(path).read_bytes(), dtype)
