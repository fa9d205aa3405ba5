import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from omnicd.config import ModelConfig
from omnicd.datakit.synth import make_scene
from omnicd.encoders import ImageEncoder
from omnicd.exceptions import DataError, ShapeError, UsageError
from omnicd.prompting import (DensePrompt, aggregate_confidence, check_reference_mask,
                              confidence_from_embeddings, descriptor_maps, downsample_mask,
                              render_prompt, split_words)


@pytest.mark.parametrize("change,text", [
    ("buildings", "Identify changes in buildings in the image."),
    (("water bodies", "bare land"), "Identify changes in water bodies to bare land in the image."),
    ({"vegetation", "buildings"}, "Identify changes in buildings and vegetation in the image."),
    (frozenset({"roads"}), "Identify changes in roads in the image."),
])
def test_render_prompt_templates(change, text):
    assert render_prompt(change) == text


def test_render_prompt_errors():
    with pytest.raises(UsageError):
        render_prompt("spaceships")
    with pytest.raises(UsageError):
        render_prompt(("buildings",))
    with pytest.raises(UsageError):
        render_prompt(set())


def test_split_words():
    assert split_words("Identify changes in Bare Land.") == ["identify", "changes", "in", "bare", "land", "."]


def test_downsample_mask_samples_cell_centres():
    mask = torch.zeros(16, 16)
    mask[4, 12] = 1
    assert downsample_mask(mask).tolist() == [[0, 1], [0, 0]]
    with pytest.raises(ShapeError):
        downsample_mask(torch.zeros(10, 16))


def confidence_loop(ref, cells, test):
    c, h, w = ref.shape
    maps = []
    for i in range(h):
        for j in range(w):
            if not cells[i, j]:
                continue
            d = ref[:, i, j]
            sims = torch.empty(h, w, dtype=ref.dtype)
            for y in range(h):
                for x in range(w):
                    t = test[:, y, x]
                    sims[y, x] = (d @ t) / (d.norm() * t.norm())
            lo, hi = sims.min(), sims.max()
            maps.append((sims - lo) / (hi - lo))
    return torch.stack(maps)


def test_descriptor_maps_loop_oracle():
    g = torch.Generator().manual_seed(4)
    ref = torch.randn(6, 4, 4, generator=g, dtype=torch.double)
    test = torch.randn(6, 4, 4, generator=g, dtype=torch.double)
    cells = torch.zeros(4, 4, dtype=torch.bool)
    cells[1, 2] = cells[3, 0] = True
    maps = descriptor_maps(ref, cells, test)
    assert torch.allclose(maps, confidence_loop(ref, cells, test), atol=1e-12)
    assert maps.min() == 0 and maps.max() == 1


def test_constant_similarity_gives_zero_map():
    ref = torch.ones(3, 2, 2)
    maps = descriptor_maps(ref, torch.ones(2, 2, dtype=torch.bool), ref.clone())
    assert torch.all(maps == 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_aggregation_is_order_invariant(seed):
    g = torch.Generator().manual_seed(seed)
    maps = torch.rand(5, 3, 3, generator=g, dtype=torch.double)
    perm = torch.randperm(5, generator=g)
    for how in ("mean", "max"):
        assert torch.equal(aggregate_confidence(maps, how), aggregate_confidence(maps[perm], how))


def test_aggregation_unknown():
    with pytest.raises(UsageError):
        aggregate_confidence(torch.rand(2, 2, 2), "median")


def test_empty_reference_mask():
    with pytest.raises(DataError):
        descriptor_maps(torch.randn(2, 2, 2), torch.zeros(2, 2, dtype=torch.bool), torch.randn(2, 2, 2))
    with pytest.raises(DataError):
        check_reference_mask(torch.zeros(4, 4))
    with pytest.raises(DataError):
        check_reference_mask(torch.full((4, 4), 2))
    # a blob smaller than a cell misses every centre pixel
    mask = torch.zeros(16, 16)
    mask[0, 0] = 1
    with pytest.raises(DataError):
        confidence_from_embeddings(torch.randn(2, 2, 2), mask, torch.randn(2, 2, 2))


def self_retrieval_gap(seed):
    torch.manual_seed(seed)
    cfg = ModelConfig.desk(encoder_depth=2)
    enc = ImageEncoder(cfg).eval()
    scene = make_scene(np.random.default_rng(seed), 128)
    img = torch.from_numpy(scene.image1)
    shape = next(s for s in scene.shapes if 1 in s.epochs)
    mask = torch.from_numpy(shape.footprint(128)).float()
    with torch.no_grad():
        emb = enc(img[None])[0]
    conf = confidence_from_embeddings(emb, mask, emb)
    cells = downsample_mask(mask) > 0
    return float(conf[cells].mean()), float(conf[~cells].mean())


def test_self_retrieval_single_seed():
    obj, bg = self_retrieval_gap(0)
    assert obj > bg


def test_dense_prompt_shape_and_zero():
    dp = DensePrompt(16)
    assert dp(torch.rand(2, 4, 4)).shape == (2, 16, 4, 4)
    assert torch.all(dp(torch.zeros(4, 4)) == 0)
    with pytest.raises(ShapeError):
        dp(torch.rand(1, 1, 4, 4))
