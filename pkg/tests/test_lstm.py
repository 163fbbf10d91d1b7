import numpy as np
import pytest

from taonet.errors import DimensionMismatch
from taonet.ingest import TrafficSample
from taonet.neural.lstm import (
    FeatureExtractor,
    LstmParams,
    LstmState,
    extract_feature,
    extract_features,
    lstm_step,
)


def zero_params(d=3, d_in=2):
    shape = (d, d + d_in)
    return LstmParams(w_i=np.zeros(shape, np.float32), w_f=np.zeros(shape, np.float32),
                      w_o=np.zeros(shape, np.float32), w_c=np.zeros(shape, np.float32),
                      b_i=np.zeros(d, np.float32), b_f=np.zeros(d, np.float32),
                      b_o=np.zeros(d, np.float32), b_c=np.zeros(d, np.float32))


def random_params(d, d_in, seed=0, scale=0.5):
    rng = np.random.default_rng(seed)

    def arr(*shape):
        return rng.normal(scale=scale, size=shape).astype(np.float32)

    return LstmParams(w_i=arr(d, d + d_in), w_f=arr(d, d + d_in),
                      w_o=arr(d, d + d_in), w_c=arr(d, d + d_in),
                      b_i=arr(d), b_f=arr(d), b_o=arr(d), b_c=arr(d))


def scalar_sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def oracle_step(params, h, c, x):
    """Straight-line re-evaluation of the gate equations."""
    hx = np.concatenate([h, x])
    i = scalar_sigmoid(params.w_i @ hx + params.b_i)
    f = scalar_sigmoid(params.w_f @ hx + params.b_f)
    o = scalar_sigmoid(params.w_o @ hx + params.b_o)
    c_tilde = np.tanh(params.w_c @ hx + params.b_c)
    c_new = f * c + i * c_tilde
    return o * np.tanh(c_new), c_new, (i, f, o, c_tilde)


def test_zero_params_zero_state():
    params = zero_params()
    state = lstm_step(params, LstmState(h=np.zeros(3), c=np.zeros(3)),
                      np.array([0.3, -0.7]))
    assert np.allclose(state.h, 0.0)
    assert np.allclose(state.c, 0.0)


def test_saturated_gates():
    # near-infinite gate biases: i = f = o ~ 1, candidate 0 -> c1 ~ c0, h1 ~ tanh(c0)
    params = zero_params(d=2, d_in=1)
    params.b_i[:] = 50.0
    params.b_f[:] = 50.0
    params.b_o[:] = 50.0
    c0 = np.ones(2, dtype=np.float64)
    state = lstm_step(params, LstmState(h=np.zeros(2), c=c0), np.array([0.9]))
    # scalar hand evaluation: c = sigmoid(50)*1 + sigmoid(50)*tanh(0)
    expected_c = scalar_sigmoid(50.0) * 1.0
    expected_h = scalar_sigmoid(50.0) * np.tanh(expected_c)
    assert np.allclose(state.c, expected_c, atol=1e-6)
    assert np.allclose(state.h, expected_h, atol=1e-6)
    assert np.allclose(state.h, np.tanh(1.0), atol=1e-3)


def test_dimension_mismatch():
    params = zero_params(d=3, d_in=2)
    with pytest.raises(DimensionMismatch):
        lstm_step(params, LstmState(h=np.zeros(4), c=np.zeros(4)), np.zeros(2))
    with pytest.raises(DimensionMismatch):
        lstm_step(params, LstmState(h=np.zeros(3), c=np.zeros(3)), np.zeros(5))


def test_gate_weight_shape_validation():
    with pytest.raises(DimensionMismatch):
        LstmParams(w_i=np.zeros((2, 4)), w_f=np.zeros((2, 5)),
                   w_o=np.zeros((2, 4)), w_c=np.zeros((2, 4)),
                   b_i=np.zeros(2), b_f=np.zeros(2), b_o=np.zeros(2),
                   b_c=np.zeros(2))


def test_step_matches_oracle_and_ranges():
    params = random_params(d=4, d_in=3, seed=5)
    rng = np.random.default_rng(6)
    h = np.zeros(4)
    c = np.zeros(4)
    for _ in range(10):
        x = rng.normal(size=3)
        state = lstm_step(params, LstmState(h=h, c=c), x)
        expected_h, expected_c, gates = oracle_step(params, h, c, x)
        assert np.allclose(state.h, expected_h, atol=1e-6)
        assert np.allclose(state.c, expected_c, atol=1e-6)
        i, f, o, c_tilde = gates
        for gate in (i, f, o):
            assert np.all((gate > 0) & (gate < 1))
        assert np.all((c_tilde > -1) & (c_tilde < 1))
        assert np.all(np.abs(state.h) < 1)
        h, c = state.h, state.c


def test_extract_feature_zero_params():
    d, d_in = 3, 2
    extractor = FeatureExtractor(embedding=np.zeros((257, d_in), np.float32),
                                 cell=zero_params(d, d_in))
    sample = TrafficSample(id="s", tokens=[5, 6, 256])
    assert np.allclose(extract_feature(extractor, sample), 0.0)


def test_extract_feature_matches_scan_oracle():
    d, d_in = 2, 2
    params = random_params(d, d_in, seed=9)
    rng = np.random.default_rng(10)
    emb = rng.normal(scale=0.3, size=(257, d_in)).astype(np.float32)
    extractor = FeatureExtractor(embedding=emb, cell=params)
    tokens = [17, 256, 3]
    phi = extract_feature(extractor, TrafficSample(id="s", tokens=tokens))

    h = np.zeros(d)
    c = np.zeros(d)
    for t in tokens:
        h, c, _ = oracle_step(params, h, c, emb[t].astype(np.float64))
    assert np.allclose(phi, h, atol=1e-5)


def test_extract_feature_deterministic():
    params = random_params(3, 2, seed=1)
    extractor = FeatureExtractor(
        embedding=np.random.default_rng(2).normal(size=(257, 2)).astype(np.float32),
        cell=params)
    sample = TrafficSample(id="s", tokens=[1, 2, 3, 4])
    a = extract_feature(extractor, sample)
    b = extract_feature(extractor, sample)
    assert np.array_equal(a, b)


def test_extract_features_batch_matches_single():
    params = random_params(4, 3, seed=3)
    emb = np.random.default_rng(4).normal(size=(257, 3)).astype(np.float32)
    extractor = FeatureExtractor(embedding=emb, cell=params)
    rows = np.random.default_rng(5).integers(0, 257, size=(7, 11))
    batch = extract_features(extractor, rows)
    for i in range(7):
        single = extract_feature(extractor, rows[i])
        assert np.allclose(batch[i], single, atol=1e-6)
