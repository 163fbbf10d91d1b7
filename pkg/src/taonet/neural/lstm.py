"""Recurrent feature extractor: gated cell plus byte-token embedding.

The cell follows the classic gate equations (input/forget/output gates,
candidate cell state, elementwise cell update, tanh-squashed hidden state).
A packet sample is scanned token by token from a zero state; the final
hidden state is the feature vector used by the detector downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionMismatch
from ..ingest.dataset import VOCAB_SIZE
from .tensor import Tensor, concat, embedding

GATE_NAMES = ("i", "f", "o", "c")


@dataclass
class LstmParams:
    """Gate weights of shape (d, d + d_in) and biases of length d."""

    w_i: np.ndarray
    w_f: np.ndarray
    w_o: np.ndarray
    w_c: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray

    def __post_init__(self):
        shapes = {self.w_i.shape, self.w_f.shape, self.w_o.shape, self.w_c.shape}
        if len(shapes) != 1:
            raise DimensionMismatch("gate weight matrices must share one shape")
        d = self.w_i.shape[0]
        for b in (self.b_i, self.b_f, self.b_o, self.b_c):
            if b.shape != (d,):
                raise DimensionMismatch("gate bias length must equal hidden size")

    @property
    def d(self) -> int:
        return self.w_i.shape[0]

    @property
    def d_in(self) -> int:
        return self.w_i.shape[1] - self.w_i.shape[0]


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray


@dataclass
class FeatureExtractor:
    """Trained detector-stage parameters: token embedding + recurrent cell."""

    embedding: np.ndarray  # (VOCAB_SIZE, d_in)
    cell: LstmParams
    meta: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.cell.d


def _step(params: dict[str, Tensor], h: Tensor, c: Tensor, x: Tensor):
    """One cell update; `h`, `c`, `x` may carry a leading batch axis."""
    hx = concat([h, x], axis=-1)
    i = (hx @ params["w_i"].T + params["b_i"]).sigmoid()
    f = (hx @ params["w_f"].T + params["b_f"]).sigmoid()
    o = (hx @ params["w_o"].T + params["b_o"]).sigmoid()
    c_tilde = (hx @ params["w_c"].T + params["b_c"]).tanh()
    c_new = f * c + i * c_tilde
    h_new = o * c_new.tanh()
    return h_new, c_new


def _cell_tensors(cell: LstmParams) -> dict[str, Tensor]:
    return {
        f"{kind}_{g}": Tensor(getattr(cell, f"{kind}_{g}"))
        for g in GATE_NAMES
        for kind in ("w", "b")
    }


def lstm_step(params: LstmParams, state: LstmState, x: np.ndarray) -> LstmState:
    """Advance the cell by one input vector (or batch of vectors)."""
    x = np.asarray(x)
    if x.shape[-1] != params.d_in:
        raise DimensionMismatch(
            f"input size {x.shape[-1]} != expected {params.d_in}"
        )
    if state.h.shape[-1] != params.d or state.c.shape[-1] != params.d:
        raise DimensionMismatch(
            f"state size {state.h.shape[-1]} != hidden size {params.d}"
        )
    h, c = _step(_cell_tensors(params), Tensor(state.h), Tensor(state.c), Tensor(x))
    return LstmState(h=h.data, c=c.data)


def scan_tokens(params: dict[str, Tensor], tokens: np.ndarray) -> Tensor:
    """Run the cell over a (batch, steps) token matrix; returns final h."""
    batch, steps = tokens.shape
    x = embedding(params["embedding"], tokens)  # (batch, steps, d_in)
    d = params["w_i"].shape[0]
    dtype = params["w_i"].dtype
    h = Tensor(np.zeros((batch, d), dtype=dtype))
    c = Tensor(np.zeros((batch, d), dtype=dtype))
    for t in range(steps):
        h, c = _step(params, h, c, x[:, t, :])
    return h


def extractor_tensors(extractor: FeatureExtractor) -> dict[str, Tensor]:
    params = _cell_tensors(extractor.cell)
    params["embedding"] = Tensor(extractor.embedding)
    return params


def extract_features(extractor: FeatureExtractor, token_rows: np.ndarray,
                     batch_size: int = 256) -> np.ndarray:
    """Feature vectors (final hidden states) for a (n, j) token matrix."""
    token_rows = np.asarray(token_rows)
    if token_rows.ndim != 2 or token_rows.shape[1] < 1:
        raise DimensionMismatch("token matrix must be (n, j) with j >= 1")
    params = extractor_tensors(extractor)
    chunks = []
    for start in range(0, token_rows.shape[0], batch_size):
        h = scan_tokens(params, token_rows[start:start + batch_size])
        chunks.append(h.data)
    return np.concatenate(chunks, axis=0)


def extract_feature(extractor: FeatureExtractor, sample) -> np.ndarray:
    """Feature vector for one sample (anything with a `.tokens` array)."""
    tokens = np.asarray(getattr(sample, "tokens", sample))
    return extract_features(extractor, tokens[None, :])[0]


def init_extractor_params(d: int, d_in: int, rng: np.random.Generator,
                          n_labels: int = 0, dtype=np.float32) -> dict[str, Tensor]:
    """Seeded uniform init; includes a sigmoid head when n_labels > 0."""

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype),
                      requires_grad=True)

    params = {"embedding": uniform((VOCAB_SIZE, d_in), d_in)}
    for g in GATE_NAMES:
        params[f"w_{g}"] = uniform((d, d + d_in), d + d_in)
        params[f"b_{g}"] = uniform((d,), d + d_in)
    if n_labels > 0:
        params["head_w"] = uniform((n_labels, d), d)
        params["head_b"] = uniform((n_labels,), d)
    return params


def export_extractor(params: dict[str, Tensor], meta: dict | None = None) -> FeatureExtractor:
    """Freeze trainable tensors into a FeatureExtractor (head discarded)."""
    cell = LstmParams(
        **{f"w_{g}": params[f"w_{g}"].data.copy() for g in GATE_NAMES},
        **{f"b_{g}": params[f"b_{g}"].data.copy() for g in GATE_NAMES},
    )
    return FeatureExtractor(embedding=params["embedding"].data.copy(), cell=cell,
                            meta=dict(meta or {}))
