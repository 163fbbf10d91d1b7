import json

import numpy as np
import pytest

from taonet.errors import InsufficientSamples, SchemaViolation
from taonet.ingest import (
    Dataset,
    LabelSpace,
    TrafficSample,
    load_dataset,
    split_dataset,
    write_dataset,
)
from taonet.ingest.dataset import derive_label_space


def make_dataset(n_per_label, splits_by_label, length=8):
    samples, splits = [], {}
    counter = 0
    for label, count in n_per_label.items():
        for _ in range(count):
            sid = f"s{counter:03d}"
            samples.append(TrafficSample(id=sid, tokens=[counter % 257] * length,
                                         label=label))
            splits[sid] = splits_by_label[label]
            counter += 1
    return Dataset(samples=samples,
                   label_space=derive_label_space(samples, splits),
                   splits=splits)


def test_roundtrip(tmp_path):
    ds = make_dataset({"a": 2, "b": 1}, {"a": "train", "b": "valid"})
    path = tmp_path / "ds.jsonl"
    write_dataset(ds, path)
    loaded = load_dataset(path)
    assert [s.id for s in loaded.samples] == [s.id for s in ds.samples]
    assert [s.label for s in loaded.samples] == [s.label for s in ds.samples]
    assert all(np.array_equal(x.tokens, y.tokens)
               for x, y in zip(loaded.samples, ds.samples))
    assert loaded.splits == ds.splits
    assert loaded.label_space == ds.label_space
    # a second write is byte-identical
    path2 = tmp_path / "ds2.jsonl"
    write_dataset(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_token_out_of_range_names_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    lines = [
        {"id": "a", "tokens": [1, 2], "label": "x", "split": "train"},
        {"id": "b", "tokens": [1, 300], "label": "x", "split": "train"},
    ]
    path.write_text("\n".join(json.dumps(l) for l in lines))
    with pytest.raises(SchemaViolation, match="line 2"):
        load_dataset(path)


def test_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    ds = load_dataset(path)
    assert ds.samples == []


@pytest.mark.parametrize("line, message", [
    ({"id": "a", "tokens": [1], "label": None}, "missing field 'split'"),
    ({"id": "a", "tokens": [1], "label": None, "split": "dev"}, "unknown split"),
    ({"id": "a", "tokens": [], "label": None, "split": "test"}, "non-empty"),
    ({"id": "", "tokens": [1], "label": None, "split": "test"}, "non-empty string"),
])
def test_schema_violations(tmp_path, line, message):
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps(line))
    with pytest.raises(SchemaViolation, match=message):
        load_dataset(path)


def test_duplicate_id(tmp_path):
    path = tmp_path / "dup.jsonl"
    row = {"id": "a", "tokens": [1], "label": None, "split": "test"}
    path.write_text(json.dumps(row) + "\n" + json.dumps(row))
    with pytest.raises(SchemaViolation, match="duplicate"):
        load_dataset(path)


def test_nonuniform_length(tmp_path):
    path = tmp_path / "len.jsonl"
    rows = [{"id": "a", "tokens": [1, 2], "label": None, "split": "test"},
            {"id": "b", "tokens": [1], "label": None, "split": "test"}]
    path.write_text("\n".join(json.dumps(r) for r in rows))
    with pytest.raises(SchemaViolation, match="length"):
        load_dataset(path)


def test_label_space_disjoint():
    with pytest.raises(ValueError):
        LabelSpace(("a", "b"), ("b",))


def test_split_801010():
    ds = make_dataset({"only": 10}, {"only": "train"})
    out = split_dataset(ds, (0.8, 0.1, 0.1), seed=1, id_labels=["only"])
    counts = {name: len(out.split(name)) for name in ("train", "valid", "test")}
    assert counts == {"train": 8, "valid": 1, "test": 1}


def test_split_keeps_ood_out_of_train():
    ds = make_dataset({"a": 20, "b": 20, "odd": 10},
                      {"a": "train", "b": "train", "odd": "valid"})
    out = split_dataset(ds, (0.6, 0.2, 0.2), seed=3, id_labels=["a", "b"])
    assert all(out.splits[s.id] != "train"
               for s in out.samples if s.label == "odd")
    assert any(out.splits[s.id] == "valid" for s in out.samples if s.label == "odd")
    assert any(out.splits[s.id] == "test" for s in out.samples if s.label == "odd")


def test_split_deterministic():
    ds = make_dataset({"a": 30, "b": 12}, {"a": "train", "b": "valid"})
    one = split_dataset(ds, (0.5, 0.25, 0.25), seed=9, id_labels=["a"])
    two = split_dataset(ds, (0.5, 0.25, 0.25), seed=9, id_labels=["a"])
    assert one.splits == two.splits


def test_split_insufficient():
    ds = make_dataset({"a": 2}, {"a": "train"})
    with pytest.raises(InsufficientSamples):
        split_dataset(ds, (0.8, 0.1, 0.1), seed=0, id_labels=["a"])


def test_split_requires_labels():
    sample = TrafficSample(id="x", tokens=[1], label=None)
    ds = Dataset(samples=[sample], label_space=LabelSpace(), splits={"x": "test"})
    with pytest.raises(ValueError):
        split_dataset(ds, (0.8, 0.1, 0.1), seed=0)


def test_split_ratio_validation():
    ds = make_dataset({"a": 4}, {"a": "train"})
    with pytest.raises(ValueError):
        split_dataset(ds, (0.5, 0.2, 0.2), seed=0)
