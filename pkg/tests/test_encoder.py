import numpy as np
import pytest

from taonet.errors import DimensionMismatch
from taonet.ingest import PAD_TOKEN, TrafficSample
from taonet.neural.encoder import (
    EncoderLayerParams,
    EncoderParams,
    encoder_forward,
    encoder_forward_batch,
    positional_encoding,
)


def random_encoder(d=4, layers=1, heads=1, max_len=4, seed=0, vocab=257):
    rng = np.random.default_rng(seed)

    def arr(*shape):
        return rng.normal(scale=0.4, size=shape).astype(np.float32)

    layer_list = [EncoderLayerParams(wq=arr(d, d), wk=arr(d, d), wv=arr(d, d),
                                     w1=arr(2 * d, d), b1=arr(2 * d),
                                     w2=arr(d, 2 * d), b2=arr(d))
                  for _ in range(layers)]
    return EncoderParams(embedding=arr(vocab, d), layers=layer_list, heads=heads,
                         max_len=max_len)


def dense_oracle(params: EncoderParams, tokens):
    """Straight-line dense re-computation of the whole forward pass."""
    tokens = np.asarray(tokens)
    d = params.d
    heads = params.heads
    dk = d // heads
    pe = positional_encoding(params.max_len, d).astype(np.float64)
    valid = tokens != PAD_TOKEN
    if not valid.any():
        valid = valid.copy()
        valid[0] = True
    x = params.embedding.astype(np.float64)[tokens] + pe[:len(tokens)]

    def pool(state):
        return state[valid].mean(axis=0)

    pooled = [pool(x)]
    for layer in params.layers:
        j = len(tokens)
        context = np.zeros_like(x)
        for h in range(heads):
            sl = slice(h * dk, (h + 1) * dk)
            q = x @ layer.wq.T.astype(np.float64)
            k = x @ layer.wk.T.astype(np.float64)
            v = x @ layer.wv.T.astype(np.float64)
            scores = q[:, sl] @ k[:, sl].T / np.sqrt(dk)
            scores[:, ~valid] = -1e9
            e = np.exp(scores - scores.max(axis=1, keepdims=True))
            attn = e / e.sum(axis=1, keepdims=True)
            context[:, sl] = attn @ v[:, sl]
        x = x + context
        hidden = np.maximum(x @ layer.w1.T.astype(np.float64)
                            + layer.b1.astype(np.float64), 0.0)
        x = x + hidden @ layer.w2.T.astype(np.float64) + layer.b2.astype(np.float64)
        pooled.append(pool(x))
    return np.stack(pooled)


def test_length_one_attention():
    params = random_encoder(d=4, layers=1, heads=2, max_len=1)
    out = encoder_forward(params, np.array([7]), collect_attention=True)
    attn = out.attention[0]  # (heads, 1, 1)
    assert np.allclose(attn, 1.0)
    # attention output equals the V row itself when there is one position
    pe = positional_encoding(1, 4)
    x = params.embedding[7] + pe[0]
    v = x @ params.layers[0].wv.T
    context = np.concatenate([attn[h, 0, 0] * v[2 * h:2 * h + 2] for h in range(2)])
    assert np.allclose(context, v, atol=1e-6)


def test_attention_rows_sum_to_one():
    params = random_encoder(d=8, layers=2, heads=2, max_len=6, seed=3)
    rows = np.random.default_rng(4).integers(0, 257, size=(5, 6))
    out = encoder_forward_batch(params, rows, collect_attention=True)
    for layer_attn in out.attention:
        sums = layer_attn.sum(axis=-1)
        assert np.allclose(sums, 1.0, atol=1e-6)
        assert np.all(layer_attn >= 0)


def test_matches_dense_oracle():
    params = random_encoder(d=4, layers=1, heads=1, max_len=2, seed=11)
    tokens = np.array([3, 250])
    out = encoder_forward(params, tokens)
    expected = dense_oracle(params, tokens)
    assert out.pooled.shape == (2, 4)
    assert np.allclose(out.pooled, expected, atol=1e-5)
    assert np.allclose(out.final, expected[-1], atol=1e-5)


def test_matches_dense_oracle_multihead_deep():
    params = random_encoder(d=8, layers=3, heads=2, max_len=5, seed=12)
    tokens = np.array([1, 2, 3, 4, 5])
    out = encoder_forward(params, tokens)
    expected = dense_oracle(params, tokens)
    assert np.allclose(out.pooled, expected, atol=1e-4)


def test_pad_positions_masked():
    params = random_encoder(d=4, layers=2, heads=1, max_len=6, seed=13)
    tokens = np.array([9, 8, 7, PAD_TOKEN, PAD_TOKEN, PAD_TOKEN])
    out = encoder_forward(params, tokens, collect_attention=True)
    for attn in out.attention:
        assert np.allclose(attn[:, :, 3:], 0.0, atol=1e-6)
    expected = dense_oracle(params, tokens)
    assert np.allclose(out.pooled, expected, atol=1e-5)


def test_all_pad_guard():
    params = random_encoder(d=4, layers=1, heads=1, max_len=3, seed=14)
    out = encoder_forward(params, np.array([PAD_TOKEN] * 3))
    assert np.all(np.isfinite(out.final))


def test_sample_object_accepted():
    params = random_encoder(d=4, layers=1, heads=1, max_len=4)
    sample = TrafficSample(id="s", tokens=[1, 2, 3, PAD_TOKEN])
    out = encoder_forward(params, sample)
    assert out.final.shape == (4,)


def test_too_long_sequence_rejected():
    params = random_encoder(max_len=4)
    with pytest.raises(DimensionMismatch):
        encoder_forward(params, np.arange(5))


def test_head_divisibility_enforced():
    with pytest.raises(DimensionMismatch):
        random_encoder(d=6, heads=4)
