"""Dataset model and the JSONL wire format.

One JSON object per line: {"id": str, "tokens": [int], "label": str|null,
"split": "train"|"valid"|"test"}. Token values live in [0, 256] where 256 is
the pad token; every sample in a dataset shares one token length.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import InsufficientSamples, SchemaViolation

PAD_TOKEN = 256
VOCAB_SIZE = 257
SPLIT_NAMES = ("train", "valid", "test")


@dataclass
class TrafficSample:
    id: str
    tokens: np.ndarray  # uint16, fixed length, values in [0, 256]
    label: str | None = None
    origin: str = "jsonl"  # pcap | jsonl | synthetic

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.uint16)


@dataclass(frozen=True)
class LabelSpace:
    """Ordered label sets; order is significant for prompts and heads."""

    id_labels: tuple[str, ...] = ()
    ood_labels: tuple[str, ...] = ()
    extended_labels: tuple[str, ...] = ()

    def __post_init__(self):
        overlap = set(self.id_labels) & set(self.ood_labels)
        if overlap:
            raise ValueError(f"labels cannot be both ID and OOD: {sorted(overlap)}")

    def with_extended(self, extended) -> "LabelSpace":
        return LabelSpace(self.id_labels, self.ood_labels, tuple(extended))


@dataclass
class Dataset:
    samples: list[TrafficSample]
    label_space: LabelSpace
    splits: dict[str, str] = field(default_factory=dict)  # sample id -> split

    def split(self, name: str) -> list[TrafficSample]:
        return [s for s in self.samples if self.splits.get(s.id) == name]

    def sample_by_id(self, sample_id: str) -> TrafficSample:
        for s in self.samples:
            if s.id == sample_id:
                return s
        raise KeyError(sample_id)

    @property
    def token_length(self) -> int:
        return int(self.samples[0].tokens.shape[0]) if self.samples else 0


def derive_label_space(samples, splits) -> LabelSpace:
    """ID labels are the train-split labels; eval-only labels are OOD."""
    id_labels = sorted({s.label for s in samples
                        if s.label is not None and splits.get(s.id) == "train"})
    others = sorted({s.label for s in samples
                     if s.label is not None and s.label not in id_labels})
    return LabelSpace(tuple(id_labels), tuple(others))


def _check_line(obj, line_number: int, expect_length: int | None) -> None:
    for key in ("id", "tokens", "label", "split"):
        if key not in obj:
            raise SchemaViolation(f"missing field '{key}'", line_number)
    if not isinstance(obj["id"], str) or not obj["id"]:
        raise SchemaViolation("id must be a non-empty string", line_number)
    if obj["split"] not in SPLIT_NAMES:
        raise SchemaViolation(f"unknown split '{obj['split']}'", line_number)
    if obj["label"] is not None and not isinstance(obj["label"], str):
        raise SchemaViolation("label must be a string or null", line_number)
    tokens = obj["tokens"]
    if not isinstance(tokens, list) or not tokens:
        raise SchemaViolation("tokens must be a non-empty list", line_number)
    for value in tokens:
        if not isinstance(value, int) or not 0 <= value <= PAD_TOKEN:
            raise SchemaViolation(f"token value {value} outside [0, {PAD_TOKEN}]",
                                  line_number)
    if expect_length is not None and len(tokens) != expect_length:
        raise SchemaViolation(
            f"token length {len(tokens)} != dataset length {expect_length}",
            line_number)


def load_dataset(path) -> Dataset:
    samples: list[TrafficSample] = []
    splits: dict[str, str] = {}
    expect_length: int | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaViolation(f"invalid JSON: {exc}", line_number) from exc
            _check_line(obj, line_number, expect_length)
            if obj["id"] in splits:
                raise SchemaViolation(f"duplicate sample id '{obj['id']}'",
                                      line_number)
            expect_length = expect_length or len(obj["tokens"])
            samples.append(TrafficSample(id=obj["id"], tokens=obj["tokens"],
                                         label=obj["label"], origin="jsonl"))
            splits[obj["id"]] = obj["split"]
    return Dataset(samples=samples, label_space=derive_label_space(samples, splits),
                   splits=splits)


def write_dataset(dataset: Dataset, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for s in dataset.samples:
            obj = {"id": s.id, "tokens": [int(t) for t in s.tokens],
                   "label": s.label, "split": dataset.splits.get(s.id)}
            fh.write(json.dumps(obj) + "\n")


def _allocate(n: int, ratios) -> list[int]:
    """Largest-remainder apportionment of n items over the ratios."""
    raw = [n * r for r in ratios]
    counts = [math.floor(x) for x in raw]
    remainder = n - sum(counts)
    order = sorted(range(len(ratios)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:remainder]:
        counts[i] += 1
    # Stratification: every split with a positive ratio gets at least one
    # sample when the class is large enough to afford it.
    positive = [i for i, r in enumerate(ratios) if r > 0]
    if n >= len(positive):
        for i in positive:
            while counts[i] == 0:
                donor = max(positive, key=lambda k: counts[k])
                counts[donor] -= 1
                counts[i] += 1
    return counts


def split_dataset(dataset: Dataset, ratios, seed: int,
                  id_labels=None) -> Dataset:
    """Re-assign splits: stratified within ID, OOD only into valid/test."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")
    if any(s.label is None for s in dataset.samples):
        raise ValueError("split_dataset requires every sample to be labeled")
    id_set = set(id_labels if id_labels is not None
                 else dataset.label_space.id_labels)
    rng = np.random.Generator(np.random.PCG64(seed))

    by_label: dict[str, list[str]] = {}
    for s in dataset.samples:
        by_label.setdefault(s.label, []).append(s.id)

    new_splits: dict[str, str] = {}
    for label in sorted(by_label):
        ids = by_label[label]
        order = rng.permutation(len(ids))
        if label in id_set:
            table = SPLIT_NAMES
            use_ratios = ratios
            needed = sum(1 for r in ratios if r > 0)
        else:
            eval_total = ratios[1] + ratios[2]
            if eval_total <= 0:
                raise ValueError("OOD samples need a positive valid+test share")
            table = SPLIT_NAMES[1:]
            use_ratios = (ratios[1] / eval_total, ratios[2] / eval_total)
            needed = sum(1 for r in use_ratios if r > 0)
        if len(ids) < needed:
            raise InsufficientSamples(
                f"class '{label}' has {len(ids)} samples, needs >= {needed}")
        counts = _allocate(len(ids), use_ratios)
        cursor = 0
        for split_name, count in zip(table, counts):
            for k in order[cursor:cursor + count]:
                new_splits[ids[k]] = split_name
            cursor += count
    return Dataset(samples=dataset.samples, label_space=dataset.label_space,
                   splits=new_splits)
