"""Deterministic training loops for the two network stages.

Stage one (detector features) trains the recurrent extractor with a
one-vs-rest sigmoid head and binary cross-entropy on logits, Adam at 2e-5
for 20 epochs. Stage two (classifier) trains the encoder plus softmax head
with cross-entropy, AdamW at 2e-5 for 30 epochs. Everything is a pure
function of (dataset, config): repeated runs are bitwise identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyTrainingSet
from . import encoder as enc
from . import lstm
from .optim import Adam, AdamW
from .tensor import bce_with_logits, cross_entropy


@dataclass
class ExtractorTrainConfig:
    d: int = 64
    d_in: int = 32
    epochs: int = 20
    lr: float = 2e-5
    batch_size: int = 32
    seed: int = 42


@dataclass
class ClassifierTrainConfig:
    d: int = 64
    n_layers: int = 4
    heads: int = 4
    ff_mult: int = 2
    epochs: int = 30
    lr: float = 2e-5
    weight_decay: float = 0.01
    batch_size: int = 32
    seed: int = 42


@dataclass
class TrainingMeta:
    seed: int
    epochs: int
    epoch_losses: list[float] = field(default_factory=list)


def _train_matrix(dataset):
    """(token matrix, integer labels, label order) for the train split."""
    samples = dataset.split("train")
    if not samples:
        raise EmptyTrainingSet("train split is empty")
    labels = list(dataset.label_space.id_labels)
    index = {label: i for i, label in enumerate(labels)}
    tokens = np.stack([np.asarray(s.tokens, dtype=np.int64) for s in samples])
    targets = np.array([index[s.label] for s in samples], dtype=np.int64)
    return tokens, targets, labels


def _run_epochs(tokens, targets, params, optimizer, loss_of_batch, epochs,
                batch_size, rng) -> list[float]:
    n = tokens.shape[0]
    epoch_losses = []
    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            optimizer.zero_grad()
            loss = loss_of_batch(tokens[idx], targets[idx])
            loss.backward()
            optimizer.step()
            total += float(loss.data) * idx.shape[0]
        epoch_losses.append(total / n)
    return epoch_losses


def train_feature_extractor(dataset, config: ExtractorTrainConfig | None = None):
    """Train the detector-stage extractor; the sigmoid head is discarded."""
    config = config or ExtractorTrainConfig()
    tokens, targets, labels = _train_matrix(dataset)
    rng = np.random.Generator(np.random.PCG64(config.seed))
    params = lstm.init_extractor_params(config.d, config.d_in, rng,
                                        n_labels=len(labels))
    optimizer = Adam(params, lr=config.lr)
    onehot = np.zeros((targets.shape[0], len(labels)), dtype=np.float32)
    onehot[np.arange(targets.shape[0]), targets] = 1.0

    def loss_of_batch(batch_tokens, batch_idx_targets):
        h = lstm.scan_tokens(params, batch_tokens)
        logits = h @ params["head_w"].T + params["head_b"]
        return bce_with_logits(logits, onehot_rows(batch_idx_targets))

    def onehot_rows(batch_targets):
        rows = np.zeros((batch_targets.shape[0], len(labels)), dtype=np.float32)
        rows[np.arange(batch_targets.shape[0]), batch_targets] = 1.0
        return rows

    losses = _run_epochs(tokens, targets, params, optimizer, loss_of_batch,
                         config.epochs, config.batch_size, rng)
    meta = TrainingMeta(seed=config.seed, epochs=config.epochs, epoch_losses=losses)
    extractor = lstm.export_extractor(params, meta={"seed": config.seed,
                                                    "epochs": config.epochs,
                                                    "epoch_losses": losses})
    return extractor, meta


def train_classifier(dataset, config: ClassifierTrainConfig | None = None):
    """Train the encoder and softmax head over the ID label set."""
    config = config or ClassifierTrainConfig()
    tokens, targets, labels = _train_matrix(dataset)
    max_len = tokens.shape[1]
    rng = np.random.Generator(np.random.PCG64(config.seed))
    params = enc.init_encoder_params(config.d, config.n_layers, config.heads,
                                     max_len, rng, ff_mult=config.ff_mult,
                                     n_labels=len(labels))
    optimizer = AdamW(params, lr=config.lr, weight_decay=config.weight_decay)
    pe = enc.positional_encoding(max_len, config.d)

    def loss_of_batch(batch_tokens, batch_targets):
        _, final, _ = enc.encode(params, batch_tokens, config.n_layers,
                                 config.heads, pe)
        logits = final @ params["head_w"].T + params["head_b"]
        return cross_entropy(logits, batch_targets)

    losses = _run_epochs(tokens, targets, params, optimizer, loss_of_batch,
                         config.epochs, config.batch_size, rng)
    meta = TrainingMeta(seed=config.seed, epochs=config.epochs, epoch_losses=losses)
    encoder = enc.export_encoder(params, config.n_layers, config.heads, max_len,
                                 meta={"seed": config.seed, "epochs": config.epochs,
                                       "epoch_losses": losses})
    head_w = params["head_w"].data.copy()
    head_b = params["head_b"].data.copy()
    return encoder, (head_w, head_b, labels), meta
