"""The full network: shared encoders, guider, detector and style branch."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .config import ModelConfig
from .detector import Detector, change_features
from .encoders import ImageEncoder, PromptTokens, TextEncoder, tokenize_batch
from .exceptions import ShapeError
from .guide import Guider
from .objectives import (LossReport, change_detection_loss, content_similarity_loss,
                         reconstruction_loss, separation_loss, total_loss)
from .prompting import DensePrompt, confidence_from_embeddings
from .style import ReconstructionDecoder, StyleEncoder


@dataclass
class ForwardResult:
    emb1: torch.Tensor
    emb2: torch.Tensor
    roi: torch.Tensor
    raw_prob: torch.Tensor
    filtered_prob: torch.Tensor
    style1: torch.Tensor | None = None
    style2: torch.Tensor | None = None
    recon1: torch.Tensor | None = None
    recon2: torch.Tensor | None = None


class OmniCDNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.image_encoder = ImageEncoder(config)
        self.text_encoder = TextEncoder(config)
        self.guider = Guider(config)
        self.detector = Detector(config)
        self.style_encoder = StyleEncoder(config)
        self.reconstructor = ReconstructionDecoder(config)
        self.dense_prompt = DensePrompt(config.embed_dim)

    # -- encoders ------------------------------------------------------------------

    def encode_image(self, images):
        return self.image_encoder(images)

    def encode_text(self, texts) -> tuple[PromptTokens, torch.Tensor]:
        """Prompt tokens (output token first) and the pooled text embedding."""
        ids, pad = tokenize_batch(texts, self.config)
        ids, pad = ids.to(self.guider.output_token.device), pad.to(self.guider.output_token.device)
        feats, pooled = self.text_encoder(ids, pad)
        return self.guider.assemble(feats, pad), pooled

    def encode_style(self, images):
        return self.style_encoder(images)

    def reference_confidence(self, ref_image, ref_mask, test_image, how="mean"):
        """Confidence map (h, w) locating the reference concept in ``test_image``."""
        embs = self.encode_image(torch.stack([ref_image, test_image]))
        return confidence_from_embeddings(embs[0], ref_mask, embs[1], how)

    # -- forward -------------------------------------------------------------------

    def forward(self, img1, img2, texts=None, confidence=None, with_style=True) -> ForwardResult:
        """Run the full pipeline.

        Exactly one of ``texts`` (list of prompt strings) or ``confidence``
        ((B, h, w) reference confidence maps) selects the prompt mode.
        """
        if img1.shape != img2.shape:
            raise ShapeError(f"bi-temporal images differ: {tuple(img1.shape)} vs {tuple(img2.shape)}")
        if (texts is None) == (confidence is None):
            raise ValueError("give exactly one of texts or confidence")
        b = img1.shape[0]
        embs = self.encode_image(torch.cat([img1, img2]))
        emb1, emb2 = embs[:b], embs[b:]
        if texts is not None:
            if len(texts) != b:
                raise ShapeError(f"{len(texts)} prompts for a batch of {b}")
            prompt, _ = self.encode_text(texts)
            g1, g2 = emb1, emb2
        else:
            prompt = self.guider.assemble(None, None, batch=b)
            extra = self.dense_prompt(confidence.to(emb1.dtype))
            g1, g2 = emb1 + extra, emb2 + extra
        roi, _ = self.guider.generate_roi(prompt, g1, g2)
        raw, filtered = self.detector(change_features(emb1, emb2), roi)
        result = ForwardResult(emb1, emb2, roi, raw, filtered)
        if with_style:
            styles = self.encode_style(torch.cat([img1, img2]))
            recon = self.reconstructor(embs, styles)
            result.style1, result.style2 = styles[:b], styles[b:]
            result.recon1, result.recon2 = recon[:b], recon[b:]
        return result

    def losses(self, result: ForwardResult, img1, img2, target, lambdas=None) -> LossReport:
        lambdas = self.config.lambdas if lambdas is None else lambdas
        l_cd = change_detection_loss(result.filtered_prob, target)
        l_sep = (separation_loss(result.emb1, result.style1)
                 + separation_loss(result.emb2, result.style2)) / 2
        l_content = content_similarity_loss(result.emb1, result.emb2, target)
        l_rec = reconstruction_loss(result.recon1, img1, result.recon2, img2)
        return total_loss(l_cd, l_sep, l_content, l_rec, lambdas)
