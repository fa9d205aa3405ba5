import pytest

from omnicd.config import ModelConfig, coerce_config
from omnicd.exceptions import ConfigError


def test_desk_defaults():
    cfg = ModelConfig.desk()
    assert cfg.input_size == 128 and cfg.embed_dim == 64
    assert cfg.grid_size == 16
    assert cfg.cross_attn_dim == 32
    assert cfg.psp_bins == (1, 2, 3, 6)
    assert cfg.lambdas == (0.1, 0.1, 0.1)
    assert cfg.decoder_layers == 2 and cfg.decoder_heads == 8 and cfg.decoder_mlp_dim == 2048


def test_full_shapes():
    cfg = ModelConfig.full()
    assert (cfg.input_size, cfg.embed_dim, cfg.grid_size, cfg.cross_attn_dim) == (512, 256, 64, 128)


@pytest.mark.parametrize("overrides", [
    dict(input_size=100),
    dict(input_size=136),  # divisible by 8, not by 16
    dict(embed_dim=60),
    dict(psp_bins=(1, 3, 2)),
    dict(psp_bins=(1, 2, 32)),
    dict(psp_bins=(0, 2)),
    dict(lambdas=(0.1, 0.1)),
])
def test_invalid_configs(overrides):
    with pytest.raises(ConfigError):
        ModelConfig(**overrides)


def test_json_round_trip():
    cfg = ModelConfig.desk(embed_dim=32, psp_bins=[1, 2, 4])
    again = ModelConfig.from_json(cfg.to_json())
    assert again == cfg
    assert coerce_config(cfg.to_dict()) == cfg
    assert coerce_config("full") == ModelConfig.full()


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"nope": 1})
