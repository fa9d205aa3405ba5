import pytest
import torch

from omnicd.config import ModelConfig
from omnicd.encoders import ImageEncoder, TextEncoder, tokenize, tokenize_batch
from omnicd.exceptions import DataError, NumericError, ShapeError
from omnicd.layers import Attention

from conftest import tiny_config


def vocab_id(word, cfg):
    return cfg.text_vocab.index(word) + 2


def test_desk_embedding_shape():
    cfg = ModelConfig.desk(encoder_depth=2)
    enc = ImageEncoder(cfg).eval()
    out = enc(torch.rand(1, 3, 128, 128))
    assert out.shape == (1, 64, 16, 16)


@pytest.mark.parametrize("size,patch", [(32, 16), (64, 16), (64, 8), (96, 16)])
def test_downsample_ratio(size, patch):
    cfg = tiny_config(input_size=size, patch_size=patch, psp_bins=(1, 2))
    out = ImageEncoder(cfg)(torch.rand(2, 3, size, size))
    assert out.shape[-1] * 8 == size and out.shape[-2] * 8 == size
    assert torch.isfinite(out).all()


def test_encoder_is_deterministic_and_siamese(tiny):
    enc = ImageEncoder(tiny).eval()
    img = torch.rand(1, 3, 32, 32)
    a = enc(img)
    b = enc(img.clone())
    assert torch.equal(a, b)
    both = enc(torch.cat([img, img]))
    assert torch.equal(both[0], both[1])


def test_encoder_errors(tiny):
    enc = ImageEncoder(tiny)
    with pytest.raises(ShapeError):
        enc(torch.rand(1, 3, 64, 64))
    bad = torch.rand(1, 3, 32, 32)
    bad[0, 0, 0, 0] = float("nan")
    with pytest.raises(NumericError):
        enc(bad)


def test_tokenize_template():
    cfg = ModelConfig.desk()
    ids = tokenize("Identify changes in buildings in the image.", cfg)
    words = ["identify", "changes", "in", "buildings", "in", "the", "image", "."]
    assert ids == [vocab_id(w, cfg) for w in words]
    assert all(i < cfg.vocab_size for i in ids)


def test_tokenize_lowercases_and_unknown():
    cfg = ModelConfig.desk()
    ids = tokenize("buildings BUILDINGS Buildings", cfg)
    assert len(set(ids)) == 1 and len(ids) == 3
    assert tokenize("zeppelins", cfg) == [1]


def test_tokenize_errors_and_truncation():
    cfg = ModelConfig.desk(text_max_len=4)
    with pytest.raises(DataError):
        tokenize("   ", cfg)
    with pytest.raises(DataError):
        tokenize("", cfg)
    assert len(tokenize("Identify changes in buildings in the image.", cfg)) == 4


def masked_mean_loop(feats, pad):
    rows = []
    for b in range(feats.shape[0]):
        acc = torch.zeros(feats.shape[-1], dtype=feats.dtype)
        n = 0
        for t in range(feats.shape[1]):
            if not pad[b, t]:
                acc += feats[b, t]
                n += 1
        rows.append(acc / n)
    return torch.stack(rows)


def test_pooled_ignores_padding(tiny):
    enc = TextEncoder(tiny).double().eval()
    ids, pad = tokenize_batch(["identify changes in buildings"], tiny)
    padded = torch.cat([ids, torch.zeros(1, 5, dtype=torch.long)], dim=1)
    pad2 = padded == 0
    feats1, pooled1 = enc(ids, pad)
    feats2, pooled2 = enc(padded, pad2)
    assert torch.allclose(pooled1, pooled2, atol=1e-12)
    assert torch.allclose(feats1, feats2[:, :4], atol=1e-12)
    assert torch.all(feats2[:, 4:] == 0)


def test_pooled_is_masked_mean_of_projected_tokens(tiny):
    enc = TextEncoder(tiny).double().eval()
    ids, pad = tokenize_batch(["identify changes in buildings", "bare land"], tiny)
    feats, pooled = enc(ids, pad)
    # projection is affine, so mean of projections equals projection of the mean
    assert torch.allclose(pooled, masked_mean_loop(feats, pad), atol=1e-12)


def test_single_token_pooled_equals_token(tiny):
    enc = TextEncoder(tiny).double().eval()
    ids, pad = tokenize_batch(["buildings"], tiny)
    feats, pooled = enc(ids, pad)
    assert torch.allclose(pooled[0], feats[0, 0], atol=1e-12)


def test_full_text_width_pools_to_256():
    cfg = ModelConfig.full(text_depth=1)
    enc = TextEncoder(cfg).eval()
    assert enc.word_emb.embedding_dim == 768
    ids, pad = tokenize_batch(["Identify changes in buildings in the image."], cfg)
    feats, pooled = enc(ids, pad)
    assert pooled.shape == (1, 256) and feats.shape[-1] == 256


def loop_softmax(logits):
    out = torch.empty_like(logits)
    for idx in torch.cartesian_prod(*[torch.arange(n) for n in logits.shape[:-1]]):
        row = logits[tuple(idx)]
        e = torch.exp(row - row.max())
        out[tuple(idx)] = e / e.sum()
    return out


def test_attention_rows_sum_to_one():
    torch.manual_seed(3)
    attn = Attention(8, 2, internal_dim=4).double()
    attn.keep_weights = True
    q, k = torch.randn(2, 3, 8, dtype=torch.double), torch.randn(2, 5, 8, dtype=torch.double)
    attn(q, k, k)
    w = attn.last_weights
    assert torch.allclose(w.sum(-1), torch.ones(2, 2, 3, dtype=torch.double), atol=1e-12)
    qh = attn._heads(attn.q_proj(q))
    kh = attn._heads(attn.k_proj(k))
    logits = qh @ kh.transpose(-1, -2) / qh.shape[-1] ** 0.5
    assert torch.allclose(w, loop_softmax(logits), atol=1e-12)


def test_every_encoder_attention_normalised():
    cfg = ModelConfig.desk(encoder_depth=2)
    enc = ImageEncoder(cfg).eval()
    layers = [m for m in enc.modules() if isinstance(m, Attention)]
    for m in layers:
        m.keep_weights = True
    enc(torch.rand(1, 3, 128, 128))
    for m in layers:
        assert (m.last_weights.sum(-1) - 1).abs().max() < 1e-5
