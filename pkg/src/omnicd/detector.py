"""Class-agnostic change head: |difference| -> pyramid pooling -> ROI filtering."""

from __future__ import annotations

import torch
from torch import nn

from .config import ModelConfig
from .exceptions import ConfigError, ShapeError
from .layers import check_finite, resize


def change_features(emb1: torch.Tensor, emb2: torch.Tensor) -> torch.Tensor:
    if emb1.shape != emb2.shape:
        raise ShapeError(f"temporal embeddings differ: {tuple(emb1.shape)} vs {tuple(emb2.shape)}")
    return (emb1 - emb2).abs()


def branch_widths(channels: int, n_bins: int) -> list[int]:
    """channels // n_bins per branch, remainder to the first branch."""
    base = channels // n_bins
    widths = [base] * n_bins
    widths[0] += channels - base * n_bins
    return widths


class PyramidPooling(nn.Module):
    def __init__(self, channels: int, bins=(1, 2, 3, 6)):
        super().__init__()
        self.bins = tuple(bins)
        if channels < len(self.bins):
            raise ConfigError(f"{channels} channels cannot feed {len(self.bins)} pyramid branches")
        self.branches = nn.ModuleList(
            nn.Sequential(
                nn.AdaptiveAvgPool2d(b),
                nn.Conv2d(channels, width, kernel_size=1),
                nn.ReLU(),
            )
            for b, width in zip(self.bins, branch_widths(channels, len(self.bins)))
        )
        self.fuse = nn.Sequential(
            nn.Conv2d(2 * channels, channels, kernel_size=3, padding=1),
            nn.ReLU(),
        )

    def pooled(self, feat):
        """The raw pooled grids, before the 1x1 convolutions (for inspection)."""
        return [branch[0](feat) for branch in self.branches]

    def forward(self, feat):
        h, w = feat.shape[-2:]
        if self.bins[-1] > min(h, w):
            raise ConfigError(f"pyramid bin {self.bins[-1]} exceeds feature size {h}x{w}")
        outs = [feat] + [resize(branch(feat), (h, w)) for branch in self.branches]
        return self.fuse(torch.cat(outs, dim=1))


class Detector(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        d = config.embed_dim
        self.psp = PyramidPooling(d, config.psp_bins)
        self.head = nn.Sequential(
            nn.Conv2d(d, d // 2, kernel_size=3, padding=1),
            nn.ReLU(),
            nn.Conv2d(d // 2, 1, kernel_size=1),
        )

    def logits(self, feat):
        low = self.head(self.psp(feat))
        return resize(low, (self.config.input_size,) * 2)[:, 0]

    def forward(self, feat: torch.Tensor, roi: torch.Tensor):
        """Returns (raw_prob, filtered_prob), both (B, S, S)."""
        if roi.shape[-2:] != (self.config.input_size,) * 2 or roi.shape[0] != feat.shape[0]:
            raise ShapeError(f"roi shape {tuple(roi.shape)} does not match the input size")
        raw = torch.sigmoid(check_finite(self.logits(feat), "detector"))
        return raw, filter_by_roi(raw, roi)


def filter_by_roi(raw_prob: torch.Tensor, roi: torch.Tensor) -> torch.Tensor:
    if raw_prob.shape != roi.shape:
        raise ShapeError(f"probability map {tuple(raw_prob.shape)} vs roi {tuple(roi.shape)}")
    return raw_prob * roi
