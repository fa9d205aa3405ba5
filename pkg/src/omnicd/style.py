"""Style branch: global style vectors and AdaIN-driven image reconstruction."""

from __future__ import annotations

import logging

import torch
import torch.nn.functional as F
from torch import nn

from .config import ModelConfig
from .exceptions import ShapeError
from .layers import resize

log = logging.getLogger(__name__)

ADAIN_EPS = 1e-5


class StyleEncoder(nn.Module):
    """Conv -> ReLU -> avg-pool blocks, global average pool, two linear layers."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        blocks = []
        in_ch = 3
        for out_ch, k in zip(config.style_channels, config.style_kernels):
            blocks += [nn.Conv2d(in_ch, out_ch, k, padding=k // 2), nn.ReLU(), nn.AvgPool2d(2)]
            in_ch = out_ch
        self.blocks = nn.Sequential(*blocks)
        d = config.embed_dim
        self.fc = nn.Sequential(nn.Linear(in_ch, d), nn.ReLU(), nn.Linear(d, d))

    def forward(self, images):
        s = self.config.input_size
        if images.dim() != 4 or images.shape[1:] != (3, s, s):
            raise ShapeError(f"expected images of shape (B, 3, {s}, {s}), got {tuple(images.shape)}")
        return self.fc(self.blocks(images).mean(dim=(2, 3)))


def split_style(style: torch.Tensor):
    """(mean half, pre-softplus scale half) of a style vector."""
    half = style.shape[-1] // 2
    return style[..., :half], style[..., half:]


def channel_stats(x: torch.Tensor):
    """Per-channel spatial mean and (population) std of (B, C, H, W)."""
    mean = x.mean(dim=(-2, -1))
    std = (x - mean[..., None, None]).pow(2).mean(dim=(-2, -1)).sqrt()
    return mean, std


def adain(content: torch.Tensor, mean: torch.Tensor, std: torch.Tensor,
          eps: float = ADAIN_EPS) -> torch.Tensor:
    """Give every channel of ``content`` the target spatial mean and std.

    content: (B, C, H, W) or (C, H, W); mean, std: (B, C) or (C,).
    Channels whose own std is below ``eps`` are treated as constant and map
    to the target mean.
    """
    squeeze = content.dim() == 3
    if squeeze:
        content, mean, std = content[None], mean[None], std[None]
    if mean.shape != content.shape[:2] or std.shape != content.shape[:2]:
        raise ShapeError(
            f"style statistics {tuple(mean.shape)} do not match content channels {tuple(content.shape[:2])}")
    mu, sigma = channel_stats(content)
    degenerate = sigma < eps
    if degenerate.any():
        log.warning("adain: %d constant channel(s); output set to the style mean",
                    int(degenerate.sum()))
    safe = torch.where(degenerate, torch.ones_like(sigma), sigma)
    normed = (content - mu[..., None, None]) / safe[..., None, None]
    normed = torch.where(degenerate[..., None, None], torch.zeros_like(normed), normed)
    out = std[..., None, None] * normed + mean[..., None, None]
    return out[0] if squeeze else out


def adain_style(content: torch.Tensor, style: torch.Tensor, eps: float = ADAIN_EPS):
    """AdaIN driven directly by a style vector whose halves match the content channels."""
    mean, raw = split_style(style)
    return adain(content, mean, F.softplus(raw), eps)


class _DecodeBlock(nn.Module):
    def __init__(self, in_ch, content_ch, out_ch, style_half):
        super().__init__()
        self.content_proj = nn.Conv2d(content_ch, out_ch, kernel_size=1)
        self.fuse = nn.Conv2d(in_ch + out_ch, out_ch, kernel_size=3, padding=1)
        self.style_mean = nn.Linear(style_half, out_ch)
        self.style_scale = nn.Linear(style_half, out_ch)

    def forward(self, x, content, style):
        size = (x.shape[-2] * 2, x.shape[-1] * 2)
        x = resize(x, size)
        c = resize(self.content_proj(content), size)
        x = self.fuse(torch.cat([x, c], dim=1))
        mean, raw = split_style(style)
        x = adain(x, self.style_mean(mean), F.softplus(self.style_scale(raw)))
        return F.relu(x)


class ReconstructionDecoder(nn.Module):
    """Three cascaded x2 blocks (S/8 -> S/4 -> S/2 -> S), then a sigmoid RGB conv."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        d = config.embed_dim
        chans = config.recon_channels
        ins = (d,) + tuple(chans[:-1])
        self.blocks = nn.ModuleList(
            _DecodeBlock(i, d, o, d // 2) for i, o in zip(ins, chans))
        self.to_rgb = nn.Conv2d(chans[-1], 3, kernel_size=3, padding=1)

    def forward(self, content, style, return_stages=False):
        g = self.config.grid_size
        if content.shape[1:] != (self.config.embed_dim, g, g):
            raise ShapeError(f"content shape {tuple(content.shape)} does not match config")
        if style.shape != (content.shape[0], self.config.embed_dim):
            raise ShapeError(f"style shape {tuple(style.shape)} does not match content batch")
        x = content
        stages = []
        for block in self.blocks:
            x = block(x, content, style)
            stages.append(x)
        out = torch.sigmoid(self.to_rgb(x))
        return (out, stages) if return_stages else out
