import pytest
import torch

from omnicd.detector import Detector, PyramidPooling, branch_widths, change_features, filter_by_roi
from omnicd.exceptions import ConfigError, ShapeError

from conftest import tiny_config


def test_change_features_basics():
    a = torch.randn(2, 8, 4, 4)
    assert torch.all(change_features(a, a) == 0)
    v = torch.randn(2, 8, 4, 4)
    assert torch.equal(change_features(torch.zeros_like(v), v), v.abs())


def test_change_features_symmetric_loop_oracle():
    a = torch.randn(1, 3, 4, 4, dtype=torch.double)
    b = torch.randn(1, 3, 4, 4, dtype=torch.double)
    out = change_features(a, b)
    assert torch.equal(out, change_features(b, a))
    for idx in torch.cartesian_prod(*[torch.arange(n) for n in a.shape]):
        i = tuple(idx)
        assert float(out[i]) == abs(float(a[i]) - float(b[i]))
    assert (out >= 0).all()


def test_change_features_shape_mismatch():
    with pytest.raises(ShapeError):
        change_features(torch.zeros(1, 2, 4, 4), torch.zeros(1, 2, 2, 2))


def test_pyramid_bins_on_full_grid():
    psp = PyramidPooling(16, (1, 2, 3, 6))
    pooled = psp.pooled(torch.randn(1, 16, 64, 64))
    assert [p.shape[-1] for p in pooled] == [1, 2, 3, 6]


def test_constant_input_pools_to_constant():
    psp = PyramidPooling(8, (1, 2, 3, 6))
    for p in psp.pooled(torch.full((1, 8, 12, 12), 2.5)):
        assert torch.allclose(p, torch.full_like(p, 2.5))


def test_branch_widths():
    assert branch_widths(64, 4) == [16, 16, 16, 16]
    assert branch_widths(10, 4) == [4, 2, 2, 2]
    psp = PyramidPooling(10, (1, 2, 3, 6))
    assert psp.fuse[0].in_channels == 20


def test_psp_preserves_shape_random_configs():
    g = torch.Generator().manual_seed(7)
    for _ in range(20):
        side = int(torch.randint(6, 20, (1,), generator=g))
        ch = int(torch.randint(2, 12, (1,), generator=g))
        k = int(torch.randint(1, min(ch, 4) + 1, (1,), generator=g))
        bins = sorted(set(int(x) for x in torch.randint(1, side + 1, (k,), generator=g)))
        psp = PyramidPooling(ch, bins)
        out = psp(torch.randn(2, ch, side, side))
        assert out.shape == (2, ch, side, side)


def test_too_few_channels():
    with pytest.raises(ConfigError):
        PyramidPooling(3, (1, 2, 3, 6))


def test_bin_larger_than_feature():
    psp = PyramidPooling(4, (1, 8))
    with pytest.raises(ConfigError):
        psp(torch.randn(1, 4, 4, 4))


def detector():
    return Detector(tiny_config()).eval()


def test_detect_roi_identity_and_annihilation():
    det = detector()
    feat = torch.rand(2, 16, 4, 4)
    raw, filt = det(feat, torch.ones(2, 32, 32))
    assert raw.shape == (2, 32, 32)
    assert torch.equal(raw, filt)
    raw0, filt0 = det(feat, torch.zeros(2, 32, 32))
    assert torch.all(filt0 == 0)
    assert torch.equal(raw0, raw)


def test_detect_filter_is_product():
    det = detector().double()
    feat = torch.rand(1, 16, 4, 4, dtype=torch.double)
    roi = torch.rand(1, 32, 32, dtype=torch.double)
    with torch.no_grad():
        raw, filt = det(feat, roi)
    for i in range(32):
        for j in range(32):
            assert float(filt[0, i, j]) == float(raw[0, i, j]) * float(roi[0, i, j])
    assert torch.all(filt <= raw) and torch.all(filt <= roi)


def test_detect_monotone_in_roi():
    raw = torch.rand(1, 8, 8)
    roi = torch.rand(1, 8, 8)
    higher = (roi + torch.rand(1, 8, 8) * (1 - roi))
    assert torch.all(filter_by_roi(raw, higher) >= filter_by_roi(raw, roi))


def test_detect_shape_errors():
    det = detector()
    with pytest.raises(ShapeError):
        det(torch.rand(1, 16, 4, 4), torch.ones(1, 16, 16))


def test_identical_embeddings_feed_zero_features():
    det = detector()
    emb = torch.randn(1, 16, 4, 4)
    feat = change_features(emb, emb.clone())
    assert torch.all(feat == 0)
    raw, _ = det(feat, torch.ones(1, 32, 32))
    other = change_features(emb * 3, emb * 3)
    assert torch.equal(raw, det(other, torch.ones(1, 32, 32))[0])
