"""Transformer encoder over byte tokens, exposing per-layer pooled states.

Each layer applies multi-head scaled dot-product attention and a two-layer
feed-forward block, both with residual connections. Pad positions are masked
out of the attention keys and out of the mean-pool, so short packets are not
diluted by padding. The pooled state after every layer (and after the
embedding) is exposed: the detector's smoothness score walks that sequence,
and the classifier head reads the final one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionMismatch
from ..ingest.dataset import PAD_TOKEN, VOCAB_SIZE
from .tensor import Tensor, contiguous, embedding, scaled_masked_softmax

_MASK_VALUE = -1e9


@dataclass
class EncoderLayerParams:
    wq: np.ndarray  # (d, d)
    wk: np.ndarray
    wv: np.ndarray
    w1: np.ndarray  # (d_ff, d)
    b1: np.ndarray
    w2: np.ndarray  # (d, d_ff)
    b2: np.ndarray


@dataclass
class EncoderParams:
    embedding: np.ndarray  # (VOCAB_SIZE, d)
    layers: list[EncoderLayerParams]
    heads: int
    max_len: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.d % self.heads != 0:
            raise DimensionMismatch("model width must be divisible by head count")

    @property
    def d(self) -> int:
        return self.embedding.shape[1]

    @property
    def n_layers(self) -> int:
        return len(self.layers)


@dataclass
class EncoderOutputs:
    pooled: np.ndarray          # (n_layers + 1, d) or (batch, n_layers + 1, d)
    final: np.ndarray           # (d,) or (batch, d)
    attention: list[np.ndarray] | None = None  # per layer (batch, heads, j, j)


def positional_encoding(max_len: int, d: int, dtype=np.float32) -> np.ndarray:
    """Fixed sinusoidal position table; no learned parameters."""
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    dim = np.arange(d, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * (dim // 2) / d)
    table = np.where(dim % 2 == 0, np.sin(angle), np.cos(angle))
    return table.astype(dtype)


def _layer_tensors(layer: EncoderLayerParams) -> dict[str, Tensor]:
    return {name: Tensor(getattr(layer, name))
            for name in ("wq", "wk", "wv", "w1", "b1", "w2", "b2")}


def encoder_tensors(params: EncoderParams) -> dict[str, Tensor]:
    tensors = {"embedding": Tensor(params.embedding)}
    for l, layer in enumerate(params.layers):
        for name, t in _layer_tensors(layer).items():
            tensors[f"layer{l}.{name}"] = t
    return tensors


def _masked_mean(x: Tensor, mask: np.ndarray, counts: np.ndarray) -> Tensor:
    weights = (mask / counts[:, None]).astype(x.dtype)[:, :, None]
    return (x * Tensor(weights)).sum(axis=1)


def encode(tensors: dict[str, Tensor], tokens: np.ndarray, n_layers: int,
           heads: int, pe: np.ndarray, collect_attention: bool = False):
    """Forward pass on a (batch, j) token matrix.

    Returns (pooled per-layer states as Tensors, final pooled Tensor,
    attention arrays or None).
    """
    tokens = np.asarray(tokens)
    batch, j = tokens.shape
    d = tensors["embedding"].shape[1]
    dk = d // heads
    dtype = tensors["embedding"].dtype

    valid = tokens != PAD_TOKEN
    # A fully padded row would make softmax and pooling degenerate; treat its
    # first position as real so the forward pass stays total.
    empty = ~valid.any(axis=1)
    if empty.any():
        valid = valid.copy()
        valid[empty, 0] = True
    mask = valid.astype(dtype)
    counts = mask.sum(axis=1)
    key_mask = ((1.0 - mask) * _MASK_VALUE).astype(dtype)[:, None, None, :]

    x = embedding(tensors["embedding"], tokens) + Tensor(pe[:j])
    pooled = [_masked_mean(x, mask, counts)]
    attention = [] if collect_attention else None

    scale = float(1.0 / np.sqrt(dk))  # python float: keeps the graph dtype
    for l in range(n_layers):
        def heads_view(t: Tensor) -> Tensor:
            return contiguous(t.reshape(batch, j, heads, dk).transpose(0, 2, 1, 3))

        q = heads_view(x @ tensors[f"layer{l}.wq"].T)
        k = heads_view(x @ tensors[f"layer{l}.wk"].T)
        v = heads_view(x @ tensors[f"layer{l}.wv"].T)
        attn = scaled_masked_softmax(q @ k.transpose(0, 1, 3, 2), scale, key_mask)
        if attention is not None:
            attention.append(attn.data)
        context = (attn @ v).transpose(0, 2, 1, 3).reshape(batch, j, d)
        x = x + context

        hidden = (x @ tensors[f"layer{l}.w1"].T + tensors[f"layer{l}.b1"]).relu()
        x = x + (hidden @ tensors[f"layer{l}.w2"].T + tensors[f"layer{l}.b2"])
        pooled.append(_masked_mean(x, mask, counts))

    return pooled, pooled[-1], attention


def encoder_forward_batch(params: EncoderParams, token_rows: np.ndarray,
                          collect_attention: bool = False,
                          batch_size: int = 256) -> EncoderOutputs:
    token_rows = np.asarray(token_rows)
    if token_rows.ndim != 2:
        raise DimensionMismatch("token matrix must be (n, j)")
    if token_rows.shape[1] > params.max_len:
        raise DimensionMismatch(
            f"sequence length {token_rows.shape[1]} exceeds maximum {params.max_len}"
        )
    tensors = encoder_tensors(params)
    pe = positional_encoding(params.max_len, params.d, dtype=params.embedding.dtype)
    pooled_chunks, attn_chunks = [], []
    for start in range(0, token_rows.shape[0], batch_size):
        pooled, _, attn = encode(tensors, token_rows[start:start + batch_size],
                                 params.n_layers, params.heads, pe,
                                 collect_attention)
        pooled_chunks.append(np.stack([p.data for p in pooled], axis=1))
        if collect_attention:
            attn_chunks.append(attn)
    pooled_all = np.concatenate(pooled_chunks, axis=0)  # (n, L + 1, d)
    attention = None
    if collect_attention:
        attention = [np.concatenate([c[l] for c in attn_chunks], axis=0)
                     for l in range(params.n_layers)]
    return EncoderOutputs(pooled=pooled_all, final=pooled_all[:, -1, :],
                          attention=attention)


def encoder_forward(params: EncoderParams, sample,
                    collect_attention: bool = False) -> EncoderOutputs:
    """Per-layer pooled states F_0..F_L and final embedding for one sample."""
    tokens = np.asarray(getattr(sample, "tokens", sample))
    out = encoder_forward_batch(params, tokens[None, :], collect_attention)
    attention = None
    if collect_attention:
        attention = [a[0] for a in out.attention]
    return EncoderOutputs(pooled=out.pooled[0], final=out.final[0],
                          attention=attention)


def init_encoder_params(d: int, n_layers: int, heads: int, max_len: int,
                        rng: np.random.Generator, ff_mult: int = 2,
                        n_labels: int = 0, dtype=np.float32) -> dict[str, Tensor]:
    """Seeded uniform init; includes a softmax head when n_labels > 0."""
    if d % heads != 0:
        raise DimensionMismatch("model width must be divisible by head count")

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype),
                      requires_grad=True)

    d_ff = ff_mult * d
    params = {"embedding": uniform((VOCAB_SIZE, d), d)}
    for l in range(n_layers):
        params[f"layer{l}.wq"] = uniform((d, d), d)
        params[f"layer{l}.wk"] = uniform((d, d), d)
        params[f"layer{l}.wv"] = uniform((d, d), d)
        params[f"layer{l}.w1"] = uniform((d_ff, d), d)
        params[f"layer{l}.b1"] = uniform((d_ff,), d)
        params[f"layer{l}.w2"] = uniform((d, d_ff), d_ff)
        params[f"layer{l}.b2"] = uniform((d,), d_ff)
    if n_labels > 0:
        params["head_w"] = uniform((n_labels, d), d)
        params["head_b"] = uniform((n_labels,), d)
    return params


def export_encoder(params: dict[str, Tensor], n_layers: int, heads: int,
                   max_len: int, meta: dict | None = None) -> EncoderParams:
    layers = []
    for l in range(n_layers):
        layers.append(EncoderLayerParams(
            **{name: params[f"layer{l}.{name}"].data.copy()
               for name in ("wq", "wk", "wv", "w1", "b1", "w2", "b2")}))
    return EncoderParams(embedding=params["embedding"].data.copy(), layers=layers,
                         heads=heads, max_len=max_len, meta=dict(meta or {}))
