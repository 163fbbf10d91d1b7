"""Stage two, ID branch: softmax classification over the known label set."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotFitted
from .neural.encoder import EncoderParams, encoder_forward_batch


@dataclass
class ClassifierHead:
    w: np.ndarray                # (|labels|, d)
    b: np.ndarray                # (|labels|,)
    labels: tuple[str, ...]      # ordered; argmax ties break to the earliest

    def __post_init__(self):
        self.labels = tuple(self.labels)
        if self.w.shape[0] != len(self.labels) or self.b.shape != (self.w.shape[0],):
            raise DimensionMismatch("head shape must match the label count")


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def predict_distributions(encoder: EncoderParams, head: ClassifierHead,
                          token_rows: np.ndarray) -> np.ndarray:
    if encoder is None or head is None:
        raise NotFitted("classifier used before training")
    final = encoder_forward_batch(encoder, token_rows).final
    logits = final.astype(np.float64) @ head.w.T.astype(np.float64) + head.b
    return _softmax(logits)


def predict_distribution(encoder: EncoderParams, head: ClassifierHead,
                         sample) -> np.ndarray:
    """Probability vector over the ID labels for one sample."""
    tokens = np.asarray(getattr(sample, "tokens", sample))
    return predict_distributions(encoder, head, tokens[None, :])[0]


def label_from_distribution(head: ClassifierHead,
                            probabilities: np.ndarray) -> tuple[str, float]:
    index = int(np.argmax(probabilities))  # argmax returns the first maximum
    return head.labels[index], float(probabilities[index])


def predict_label(encoder: EncoderParams, head: ClassifierHead,
                  sample) -> tuple[str, float]:
    """(label, confidence); deterministic tie-break by label order."""
    return label_from_distribution(head, predict_distribution(encoder, head, sample))
