"""Shared-weight image encoder and prompt text encoder."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .config import ModelConfig
from .exceptions import DataError, ShapeError
from .layers import Attention, LayerNorm2d, MLP, check_finite, sincos_2d
from .prompting import split_words

PAD_ID = 0
UNK_ID = 1


@dataclass
class PromptTokens:
    """Prompt vectors handed to the guider.

    tokens: (B, T, d). padding_mask: (B, T), True marks padded positions.
    When ``has_output_token`` is set the learnable output token sits at index 0.
    """

    tokens: torch.Tensor
    padding_mask: torch.Tensor
    has_output_token: bool = False

    @property
    def token_count(self) -> torch.Tensor:
        return (~self.padding_mask).sum(dim=1)


def tokenize(text: str, config: ModelConfig) -> list[int]:
    """Lowercase, split on whitespace/punctuation, look up ``config.text_vocab``.

    Ids 0 and 1 are padding and unknown; vocabulary entries start at 2.
    Sequences longer than ``text_max_len`` are truncated from the right.
    """
    if not isinstance(text, str) or not text.strip():
        raise DataError("prompt text is empty")
    lookup = {w: i + 2 for i, w in enumerate(config.text_vocab)}
    ids = [lookup.get(w, UNK_ID) for w in split_words(text)]
    return ids[: config.text_max_len]


def tokenize_batch(texts, config: ModelConfig):
    """Tokenize and right-pad to the longest sequence. Returns (ids, padding_mask)."""
    seqs = [tokenize(t, config) for t in texts]
    longest = max(len(s) for s in seqs)
    ids = torch.full((len(seqs), longest), PAD_ID, dtype=torch.long)
    for row, seq in enumerate(seqs):
        ids[row, : len(seq)] = torch.tensor(seq, dtype=torch.long)
    return ids, ids == PAD_ID


class _Block(nn.Module):
    """Pre-norm transformer block; windowed when ``window`` > 0."""

    def __init__(self, dim, heads, window=0, mlp_ratio=4):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = MLP(dim, dim * mlp_ratio, dim, 2, act=nn.GELU)
        self.window = window

    def forward(self, x):
        # x: (B, H, W, C)
        b, h, w, c = x.shape
        y = self.norm1(x)
        if self.window:
            y = self._window_attention(y)
        else:
            y = y.reshape(b, h * w, c)
            y = self.attn(y, y, y).reshape(b, h, w, c)
        x = x + y
        return x + self.mlp(self.norm2(x))

    def _window_attention(self, y):
        b, h, w, c = y.shape
        ws = self.window
        ph, pw = (-h) % ws, (-w) % ws
        if ph or pw:
            y = F.pad(y, (0, 0, 0, pw, 0, ph))
        hp, wp = h + ph, w + pw
        win = y.reshape(b, hp // ws, ws, wp // ws, ws, c).permute(0, 1, 3, 2, 4, 5)
        win = win.reshape(-1, ws * ws, c)
        win = self.attn(win, win, win)
        win = win.reshape(b, hp // ws, wp // ws, ws, ws, c).permute(0, 1, 3, 2, 4, 5)
        return win.reshape(b, hp, wp, c)[:, :h, :w]


class ImageEncoder(nn.Module):
    """Patch transformer followed by a 1x1 conv -> LN -> 3x3 conv -> LN neck.

    With 16-pixel patches a learned 2x transposed convolution precedes the
    neck so the output grid is always input_size / 8.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        width = config.encoder_width
        self.patch_embed = nn.Conv2d(3, width, config.patch_size, stride=config.patch_size)
        tokens = config.input_size // config.patch_size
        self.register_buffer("pos", sincos_2d(width, tokens, tokens).permute(1, 2, 0), persistent=False)
        every = config.global_attention_every
        self.blocks = nn.ModuleList(
            _Block(width, config.encoder_heads,
                   window=0 if (i + 1) % every == 0 else config.window_size)
            for i in range(config.encoder_depth)
        )
        self.norm = nn.LayerNorm(width)
        if config.patch_size == 16:
            self.upsample = nn.ConvTranspose2d(width, width, kernel_size=2, stride=2)
        else:
            self.upsample = nn.Identity()
        d = config.embed_dim
        self.neck = nn.Sequential(
            nn.Conv2d(width, d, kernel_size=1, bias=False),
            LayerNorm2d(d),
            nn.Conv2d(d, d, kernel_size=3, padding=1, bias=False),
            LayerNorm2d(d),
        )

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        s = self.config.input_size
        if images.dim() != 4 or images.shape[1] != 3 or images.shape[-2:] != (s, s):
            raise ShapeError(f"expected images of shape (B, 3, {s}, {s}), got {tuple(images.shape)}")
        check_finite(images, "image encoder input")
        x = self.patch_embed(images).permute(0, 2, 3, 1)
        x = x + self.pos.to(x.dtype)
        for block in self.blocks:
            x = block(x)
        x = self.norm(x).permute(0, 3, 1, 2)
        return self.neck(self.upsample(x))


class TextEncoder(nn.Module):
    """Bidirectional self-attention over word + learned positional embeddings."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        tw = config.text_width
        self.word_emb = nn.Embedding(config.vocab_size, tw, padding_idx=PAD_ID)
        self.pos_emb = nn.Embedding(config.text_max_len, tw)
        self.layers = nn.ModuleList(_TextLayer(tw, config.text_heads) for _ in range(config.text_depth))
        self.norm = nn.LayerNorm(tw)
        self.proj = nn.Linear(tw, config.embed_dim)

    def forward(self, ids: torch.Tensor, padding_mask: torch.Tensor):
        """Returns (per-token projected features (B, T, d), pooled (B, d))."""
        positions = torch.arange(ids.shape[1], device=ids.device)
        x = self.word_emb(ids) + self.pos_emb(positions)[None]
        for layer in self.layers:
            x = layer(x, padding_mask)
        x = self.norm(x)
        keep = (~padding_mask).to(x.dtype)[..., None]
        pooled = (x * keep).sum(1) / keep.sum(1).clamp_min(1.0)
        return self.proj(x) * keep, self.proj(pooled)


class _TextLayer(nn.Module):
    def __init__(self, dim, heads):
        super().__init__()
        self.attn = Attention(dim, heads)
        self.norm1 = nn.LayerNorm(dim)
        self.mlp = MLP(dim, dim * 4, dim, 2, act=nn.GELU)
        self.norm2 = nn.LayerNorm(dim)

    def forward(self, x, padding_mask):
        x = self.norm1(x + self.attn(x, x, x, key_padding_mask=padding_mask))
        return self.norm2(x + self.mlp(x))
