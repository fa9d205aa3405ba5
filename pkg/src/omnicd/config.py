"""Model hyperparameters.

``ModelConfig.desk()`` is the CPU-sized default used by the CLI and the test
suite; ``ModelConfig.full()`` gives the full-scale shapes (512 px input,
256-channel embeddings, 64x64 grid) with a shallow encoder.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from .exceptions import ConfigError
from .prompting import default_vocabulary


@dataclass(frozen=True)
class ModelConfig:
    input_size: int = 128
    patch_size: int = 16
    embed_dim: int = 64

    # image encoder (patch transformer)
    encoder_width: int = 128
    encoder_depth: int = 4
    encoder_heads: int = 4
    window_size: int = 4
    global_attention_every: int = 2

    # text encoder
    text_vocab: tuple[str, ...] = field(default_factory=default_vocabulary)
    text_max_len: int = 32
    text_width: int = 64
    text_depth: int = 2
    text_heads: int = 4
    max_prompt_tokens: int = 20

    # guider
    decoder_layers: int = 2
    decoder_heads: int = 8
    decoder_mlp_dim: int = 2048
    cross_attn_dim: int | None = None
    dropout: float = 0.1

    # detector
    psp_bins: tuple[int, ...] = (1, 2, 3, 6)

    # style branch
    style_channels: tuple[int, ...] = (16, 32, 64)
    style_kernels: tuple[int, ...] = (7, 3, 3)
    recon_channels: tuple[int, int, int] = (48, 32, 32)

    lambdas: tuple[float, float, float] = (0.1, 0.1, 0.1)

    def __post_init__(self):
        # normalise list inputs coming from JSON
        for name in ("text_vocab", "psp_bins", "style_channels", "style_kernels",
                     "recon_channels", "lambdas"):
            value = getattr(self, name)
            if not isinstance(value, tuple):
                object.__setattr__(self, name, tuple(value))
        if self.cross_attn_dim is None:
            object.__setattr__(self, "cross_attn_dim", self.embed_dim // 2)
        self.validate()

    @property
    def grid_size(self) -> int:
        """Side of the image embedding grid (input_size / 8)."""
        return self.input_size // 8

    @property
    def vocab_size(self) -> int:
        # ids 0 and 1 are reserved for padding and unknown tokens
        return len(self.text_vocab) + 2

    def validate(self) -> None:
        s = self.input_size
        if s <= 0 or s % 8 or s % self.patch_size:
            raise ConfigError(
                f"input_size={s} must be divisible by 8 and by patch_size={self.patch_size}")
        if self.patch_size not in (8, 16):
            # patch 16 is upsampled 2x to reach the 1/8 grid; patch 8 needs no upsampling
            raise ConfigError(f"patch_size must be 8 or 16, got {self.patch_size}")
        d = self.embed_dim
        if d % 2 or d % self.decoder_heads:
            raise ConfigError(
                f"embed_dim={d} must be even and divisible by decoder_heads={self.decoder_heads}")
        if d % 8 or d < 16:
            # the mask head normalises over d/8 channels; one channel would collapse to the bias
            raise ConfigError(f"embed_dim={d} must be a multiple of 8 and at least 16")
        if self.cross_attn_dim % self.decoder_heads:
            raise ConfigError("cross_attn_dim must be divisible by decoder_heads")
        if self.encoder_width % self.encoder_heads:
            raise ConfigError("encoder_width must be divisible by encoder_heads")
        if self.text_width % self.text_heads:
            raise ConfigError("text_width must be divisible by text_heads")
        if self.global_attention_every < 1 or self.window_size < 1:
            raise ConfigError("global_attention_every and window_size must be >= 1")
        bins = self.psp_bins
        if not bins or any(b <= 0 for b in bins) or any(
                b2 <= b1 for b1, b2 in zip(bins, bins[1:])):
            raise ConfigError(f"psp_bins must be strictly increasing positive integers: {bins}")
        if bins[-1] > self.grid_size:
            raise ConfigError(
                f"psp bin {bins[-1]} exceeds embedding side {self.grid_size}")
        if len(self.style_channels) != len(self.style_kernels) or not self.style_channels:
            raise ConfigError("style_channels and style_kernels must have the same non-zero length")
        if len(self.recon_channels) != 3:
            raise ConfigError("recon_channels needs exactly three entries (1/8 -> 1/4 -> 1/2 -> 1)")
        if len(self.lambdas) != 3 or any(l < 0 for l in self.lambdas):
            raise ConfigError(f"lambdas must be three non-negative weights: {self.lambdas}")
        if self.max_prompt_tokens < 1 or self.text_max_len < 1:
            raise ConfigError("max_prompt_tokens and text_max_len must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if len(set(self.text_vocab)) != len(self.text_vocab):
            raise ConfigError("text_vocab contains duplicates")

    # -- construction helpers -------------------------------------------------

    @classmethod
    def desk(cls, **overrides) -> "ModelConfig":
        return cls(**overrides)

    @classmethod
    def full(cls, **overrides) -> "ModelConfig":
        params = dict(
            input_size=512, embed_dim=256, encoder_width=256, encoder_depth=4,
            encoder_heads=8, window_size=14, global_attention_every=2,
            text_width=768, text_heads=12, text_depth=2, text_max_len=512,
            style_channels=(32, 64, 128), recon_channels=(128, 64, 32),
        )
        params.update(overrides)
        return cls(**params)

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for key, value in out.items():
            if isinstance(value, tuple):
                out[key] = list(value)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(data)


def coerce_config(config: "ModelConfig | dict | str | None") -> ModelConfig:
    """Accept a ModelConfig, a dict, a JSON path/string or None (desk default)."""
    if config is None:
        return ModelConfig.desk()
    if isinstance(config, ModelConfig):
        return config
    if isinstance(config, dict):
        return ModelConfig.from_dict(config)
    if isinstance(config, str):
        if config in ("desk", "full"):
            return getattr(ModelConfig, config)()
        text = config
        if not config.lstrip().startswith("{"):
            with open(config, encoding="utf-8") as fh:
                text = fh.read()
        return ModelConfig.from_json(text)
    raise ConfigError(f"cannot build a ModelConfig from {type(config).__name__}")

