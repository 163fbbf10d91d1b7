import json

import pytest

from taonet.errors import InvalidSpec
from taonet.ingest import default_spec, generate_synthetic, write_dataset


def small_spec(**top_level):
    spec = {
        "j": 48,
        "classes": [
            {"name": "id-a", "role": "id", "transport": "tcp", "dst_port": 80,
             "payload": {"kind": "uniform", "low": 0, "high": 255},
             "length": {"kind": "uniform", "low": 10, "high": 30}},
            {"name": "id-b", "role": "id", "transport": "udp", "dst_port": 53,
             "payload": {"kind": "text"},
             "length": {"kind": "fixed", "value": 16}},
            {"name": "ood-x", "role": "ood", "transport": "tcp", "dst_port": 9999,
             "payload": {"kind": "choice", "values": [1, 2, 3]},
             "length": {"kind": "uniform", "low": 5, "high": 9}},
        ],
    }
    spec.update(top_level)
    return spec


def test_determinism_byte_identical(tmp_path):
    spec = small_spec()
    a = generate_synthetic(spec, 50, seed=11)
    b = generate_synthetic(spec, 50, seed=11)
    pa, pb = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_dataset(a, pa)
    write_dataset(b, pb)
    assert pa.read_bytes() == pb.read_bytes()
    c = generate_synthetic(spec, 50, seed=12)
    pc = tmp_path / "c.jsonl"
    write_dataset(c, pc)
    assert pa.read_bytes() != pc.read_bytes()


def test_train_has_no_ood():
    ds = generate_synthetic(small_spec(), 100, seed=0)
    ood = set(ds.label_space.ood_labels)
    assert ood == {"ood-x"}
    assert all(s.label not in ood for s in ds.split("train"))


def test_seventy_thirty_mix():
    # 2 ID classes, 35% test per class -> 70 ID test samples -> split of 100
    spec = small_spec(valid_fraction=0.2, test_fraction=0.35)
    ds = generate_synthetic(spec, 100, seed=0)
    test = ds.split("test")
    ood = set(ds.label_space.ood_labels)
    n_ood = sum(1 for s in test if s.label in ood)
    assert len(test) == 100
    assert (len(test) - n_ood, n_ood) == (70, 30)


def test_eval_splits_mix_both_kinds():
    ds = generate_synthetic(small_spec(), 100, seed=0)
    ood = set(ds.label_space.ood_labels)
    for name in ("valid", "test"):
        labels = {s.label in ood for s in ds.split(name)}
        assert labels == {True, False}


def test_token_length_follows_spec():
    ds = generate_synthetic(small_spec(j=32), 20, seed=0)
    assert all(s.tokens.shape == (32,) for s in ds.samples)
    assert all(s.origin == "synthetic" for s in ds.samples)


def test_ood_counts_follow_mix_rule():
    spec = small_spec()
    n = 100
    ds = generate_synthetic(spec, n, seed=0)
    id_valid = sum(1 for s in ds.split("valid")
                   if s.label in set(ds.label_space.id_labels))
    ood_valid = len(ds.split("valid")) - id_valid
    assert ood_valid == (3 * id_valid) // 7


@pytest.mark.parametrize("mutate, message", [
    (lambda s: s.update(classes=[]), "no classes"),
    (lambda s: s["classes"].pop(0), ">= 2 ID"),
    (lambda s: s["classes"].pop(), ">= 1 OOD"),
    (lambda s: s["classes"][0].update(payload={"kind": "uniform", "low": 9, "high": 2}),
     "degenerate"),
    (lambda s: s["classes"][0].update(payload={"kind": "choice", "values": []}),
     "degenerate"),
    (lambda s: s["classes"][2].update(payload={"kind": "choice", "values": [1],
                                               "weights": [1, 2]}), "weights"),
    (lambda s: s["classes"][0].update(length={"kind": "uniform", "low": 30, "high": 10}),
     "degenerate"),
    (lambda s: s.update(valid_fraction=0.0), "valid_fraction"),
    (lambda s: s.update(valid_fraction=0.6, test_fraction=0.5), "sum below 1"),
])
def test_invalid_specs(mutate, message):
    spec = small_spec()
    mutate(spec)
    with pytest.raises(InvalidSpec, match=message):
        generate_synthetic(spec, 10, seed=0)


def test_packaged_spec_is_valid():
    spec = default_spec()
    assert json.dumps(spec)  # serializable
    ds = generate_synthetic(spec, 20, seed=42)
    assert set(ds.label_space.id_labels) == {"alpha-stream", "beta-chat", "gamma-mail"}
    assert set(ds.label_space.ood_labels) == {"delta-voip", "epsilon-sync"}
