"""Prompt-conditioned guider producing the ROI attention map."""

from __future__ import annotations

import torch
from torch import nn

from .config import ModelConfig
from .encoders import PromptTokens
from .exceptions import ShapeError
from .layers import Attention, LayerNorm2d, MLP, check_finite, resize, sincos_2d


class DecoderLayer(nn.Module):
    """Token self-attention, token->image attention, token MLP, image->token attention.

    Every sub-step is residual, followed by layer norm, with dropout on the
    sub-step output. Positional encodings are re-added to the image tokens
    each time they enter an attention.
    """

    def __init__(self, dim, heads, mlp_dim, cross_dim, dropout=0.1):
        super().__init__()
        self.self_attn = Attention(dim, heads)
        self.norm1 = nn.LayerNorm(dim)
        self.token_to_image = Attention(dim, heads, internal_dim=cross_dim)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = MLP(dim, mlp_dim, dim, 2)
        self.norm3 = nn.LayerNorm(dim)
        self.image_to_token = Attention(dim, heads, internal_dim=cross_dim)
        self.norm4 = nn.LayerNorm(dim)
        self.drop = nn.Dropout(dropout)

    def forward(self, tokens, image, token_pe, image_pe, token_mask=None):
        q = tokens + token_pe
        tokens = self.norm1(tokens + self.drop(self.self_attn(q, q, tokens, token_mask)))

        q = tokens + token_pe
        k = image + image_pe
        tokens = self.norm2(tokens + self.drop(self.token_to_image(q, k, image)))

        tokens = self.norm3(tokens + self.drop(self.mlp(tokens)))

        q = tokens + token_pe
        k = image + image_pe
        image = self.norm4(image + self.drop(self.image_to_token(k, q, tokens, token_mask)))
        return check_finite(tokens, "guider tokens"), check_finite(image, "guider image tokens")


class Guider(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        d = config.embed_dim
        g = config.grid_size
        self.output_token = nn.Parameter(torch.randn(1, 1, d) * 0.02)
        self.layers = nn.ModuleList(
            DecoderLayer(d, config.decoder_heads, config.decoder_mlp_dim,
                         config.cross_attn_dim, config.dropout)
            for _ in range(config.decoder_layers)
        )
        self.register_buffer("image_pe", sincos_2d(d, g, g), persistent=False)
        self.upscale = nn.Sequential(
            nn.ConvTranspose2d(d, d // 4, kernel_size=2, stride=2),
            LayerNorm2d(d // 4),
            nn.GELU(),
            nn.ConvTranspose2d(d // 4, d // 8, kernel_size=2, stride=2),
            LayerNorm2d(d // 8),
            nn.GELU(),
        )
        self.register_buffer("up_pe", sincos_2d(d // 8, 4 * g, 4 * g), persistent=False)
        self.final_attn = Attention(d, config.decoder_heads,
                                    internal_dim=config.cross_attn_dim, kv_dim=d // 8)
        self.final_norm = nn.LayerNorm(d)
        self.hyper_mlp = MLP(d, d, d // 8, 3)

    # -- prompt assembly ---------------------------------------------------------

    def assemble(self, sparse: torch.Tensor | None, padding_mask: torch.Tensor | None,
                 batch: int | None = None) -> PromptTokens:
        """Prepend the output token; truncate to ``max_prompt_tokens`` in total.

        ``sparse=None`` gives the output token alone (dense-prompt mode).
        """
        if sparse is None:
            out = self.output_token.expand(batch, -1, -1)
            mask = torch.zeros(batch, 1, dtype=torch.bool, device=out.device)
            return PromptTokens(out, mask, has_output_token=True)
        keep = self.config.max_prompt_tokens - 1
        sparse, padding_mask = sparse[:, :keep], padding_mask[:, :keep]
        out = self.output_token.expand(sparse.shape[0], -1, -1).to(sparse.dtype)
        tokens = torch.cat([out, sparse], dim=1)
        mask = torch.cat([torch.zeros_like(padding_mask[:, :1]), padding_mask], dim=1)
        return PromptTokens(tokens, mask, has_output_token=True)

    # -- decoding ----------------------------------------------------------------

    def decode(self, prompt: PromptTokens, embedding: torch.Tensor):
        """Run the decoder layers. Returns (tokens (B,T,d), image tokens (B,h*w,d))."""
        b, d, h, w = embedding.shape
        if h * w != self.config.grid_size ** 2 or d != self.config.embed_dim:
            raise ShapeError(f"embedding shape {tuple(embedding.shape)} does not match config")
        check_finite(embedding, "guider input")
        image = embedding.flatten(2).transpose(1, 2)
        image_pe = self.image_pe.to(image.dtype).flatten(1).T[None]
        tokens = prompt.tokens
        token_pe = prompt.tokens
        mask = prompt.padding_mask if prompt.padding_mask.any() else None
        for layer in self.layers:
            tokens, image = layer(tokens, image, token_pe, image_pe, mask)
        return tokens, image

    def mask_head(self, tokens, image):
        """Upsample x4, attend once more, dot the output token with every pixel.

        Returns logits at the input resolution (B, S, S).
        """
        b, n, d = image.shape
        g = self.config.grid_size
        grid = image.transpose(1, 2).reshape(b, d, g, g)
        up = self.upscale(grid)
        up_seq = up.flatten(2).transpose(1, 2)
        up_pe = self.up_pe.to(up.dtype).flatten(1).T[None]
        tokens = self.final_norm(tokens + self.final_attn(tokens, up_seq + up_pe, up_seq))
        hyper = self.hyper_mlp(tokens[:, 0])
        low = torch.einsum("bc,bchw->bhw", hyper, up)
        logits = resize(low[:, None], (self.config.input_size,) * 2)[:, 0]
        return check_finite(logits, "mask head")

    def forward(self, prompt: PromptTokens, embedding: torch.Tensor) -> torch.Tensor:
        """Mask logits (B, S, S) for one temporal embedding."""
        tokens, image = self.decode(prompt, embedding)
        return self.mask_head(tokens, image)

    def generate_roi(self, prompt: PromptTokens, emb1: torch.Tensor, emb2: torch.Tensor):
        """Pixel-wise max of the two per-image sigmoid maps. Returns (roi, (map1, map2))."""
        if emb1.shape != emb2.shape:
            raise ShapeError(f"temporal embeddings differ: {tuple(emb1.shape)} vs {tuple(emb2.shape)}")
        b = emb1.shape[0]
        both = PromptTokens(torch.cat([prompt.tokens] * 2), torch.cat([prompt.padding_mask] * 2),
                            prompt.has_output_token)
        probs = torch.sigmoid(self(both, torch.cat([emb1, emb2])))
        map1, map2 = probs[:b], probs[b:]
        return torch.maximum(map1, map2), (map1, map2)
