"""Building blocks shared by the encoders, guider and detector."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from .exceptions import NumericError


def check_finite(tensor: torch.Tensor, where: str) -> torch.Tensor:
    if not torch.isfinite(tensor).all():
        raise NumericError(f"non-finite activation in {where}", component=where)
    return tensor


class LayerNorm2d(nn.Module):
    """Layer norm over the channel axis of a (B, C, H, W) tensor."""

    def __init__(self, channels: int, eps: float = 1e-6):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.eps = eps

    def forward(self, x):
        mean = x.mean(1, keepdim=True)
        var = (x - mean).pow(2).mean(1, keepdim=True)
        x = (x - mean) / torch.sqrt(var + self.eps)
        return self.weight[:, None, None] * x + self.bias[:, None, None]


class MLP(nn.Module):
    def __init__(self, in_dim, hidden_dim, out_dim, num_layers, act=nn.ReLU):
        super().__init__()
        dims = [in_dim] + [hidden_dim] * (num_layers - 1) + [out_dim]
        self.layers = nn.ModuleList(nn.Linear(a, b) for a, b in zip(dims, dims[1:]))
        self.act = act()

    def forward(self, x):
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = self.act(x)
        return x


class Attention(nn.Module):
    """Multi-head attention with an optional reduced internal width.

    Softmax is computed explicitly so the weights of the last call can be
    inspected (``keep_weights = True``).
    """

    def __init__(self, dim: int, num_heads: int, internal_dim: int | None = None,
                 kv_dim: int | None = None):
        super().__init__()
        internal_dim = internal_dim or dim
        kv_dim = kv_dim or dim
        if internal_dim % num_heads:
            raise ValueError("internal_dim must be divisible by num_heads")
        self.num_heads = num_heads
        self.q_proj = nn.Linear(dim, internal_dim)
        self.k_proj = nn.Linear(kv_dim, internal_dim)
        self.v_proj = nn.Linear(kv_dim, internal_dim)
        self.out_proj = nn.Linear(internal_dim, dim)
        self.keep_weights = False
        self.last_weights = None

    def _heads(self, x):
        b, n, c = x.shape
        return x.reshape(b, n, self.num_heads, c // self.num_heads).transpose(1, 2)

    def forward(self, q, k, v, key_padding_mask=None):
        q = self._heads(self.q_proj(q))
        k = self._heads(self.k_proj(k))
        v = self._heads(self.v_proj(v))
        logits = q @ k.transpose(-1, -2) / math.sqrt(q.shape[-1])
        if key_padding_mask is not None:
            logits = logits.masked_fill(key_padding_mask[:, None, None, :], float("-inf"))
        weights = logits.softmax(dim=-1)
        if self.keep_weights:
            self.last_weights = weights.detach()
        out = (weights @ v).transpose(1, 2)
        return self.out_proj(out.reshape(out.shape[0], out.shape[1], -1))


def sincos_2d(dim: int, height: int, width: int, temperature: float = 10000.0,
              dtype=torch.float32) -> torch.Tensor:
    """Fixed 2-D sinusoidal positional encoding of shape (dim, height, width)."""
    quarter = max(1, math.ceil(dim / 4))
    omega = 1.0 / temperature ** (torch.arange(quarter, dtype=torch.float64) / quarter)
    ys = torch.arange(height, dtype=torch.float64)[:, None] * omega[None]
    xs = torch.arange(width, dtype=torch.float64)[:, None] * omega[None]
    y_enc = torch.cat([ys.sin(), ys.cos()], dim=1)  # (H, 2q)
    x_enc = torch.cat([xs.sin(), xs.cos()], dim=1)  # (W, 2q)
    pe = torch.cat([
        y_enc[:, None, :].expand(height, width, -1),
        x_enc[None, :, :].expand(height, width, -1),
    ], dim=-1)[..., :dim]
    return pe.permute(2, 0, 1).contiguous().to(dtype)


def resize(x, size, mode="bilinear"):
    if mode == "nearest":
        return F.interpolate(x, size=size, mode="nearest")
    return F.interpolate(x, size=size, mode=mode, align_corners=False)
