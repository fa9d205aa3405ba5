"""Multi-task objective: change detection, separation, content similarity, reconstruction."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .exceptions import DataError, NumericError, ShapeError

log = logging.getLogger(__name__)

PROB_CLAMP = 1e-7
DICE_SMOOTH = 1.0
LOSS_COLUMNS = ("step", "l_cd", "l_sep", "l_content", "l_rec", "total")


@dataclass
class LossReport:
    l_cd: torch.Tensor
    l_sep: torch.Tensor
    l_content: torch.Tensor
    l_rec: torch.Tensor
    total: torch.Tensor

    def as_floats(self) -> dict:
        return {k: float(getattr(self, k).detach()) for k in LOSS_COLUMNS[1:]}


def _check_same(a, b, what):
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shape {tuple(a.shape)} vs {tuple(b.shape)}")


def change_detection_loss(prob: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean-pixel BCE plus smoothed Dice (s=1), equally weighted.

    prob, target: (S, S) or (B, S, S). Dice is computed per sample and averaged.
    """
    _check_same(prob, target, "change_detection_loss")
    if not torch.all((target == 0) | (target == 1)):
        raise DataError("change target must be binary {0, 1}")
    target = target.to(prob.dtype)
    p = prob.clamp(PROB_CLAMP, 1 - PROB_CLAMP)
    bce = -(target * p.log() + (1 - target) * (1 - p).log()).mean()
    if p.dim() == 2:
        p, target = p[None], target[None]
    inter = (p * target).sum(dim=(-2, -1))
    denom = p.sum(dim=(-2, -1)) + target.sum(dim=(-2, -1))
    dice = 1 - (2 * inter + DICE_SMOOTH) / (denom + DICE_SMOOTH)
    return bce + dice.mean()


def separation_loss(content: torch.Tensor, style: torch.Tensor) -> torch.Tensor:
    """Squared cosine between globally pooled content and the style vector.

    content: (B, d, h, w); style: (B, d). Zero-norm pairs contribute 0.
    Callers average over the two temporal branches.
    """
    if content.dim() == 3:
        content, style = content[None], style[None]
    pooled = content.mean(dim=(-2, -1))
    _check_same(pooled, style, "separation_loss")
    dot = (pooled * style).sum(-1)
    norms = pooled.norm(dim=-1) * style.norm(dim=-1)
    ok = norms > 0
    cos = dot / torch.where(ok, norms, torch.ones_like(norms))
    return torch.where(ok, cos.pow(2), torch.zeros_like(cos)).mean()


def unchanged_cells(change_mask: torch.Tensor, grid: int) -> torch.Tensor:
    """Boolean (B, grid, grid): a cell is unchanged only if every pixel it covers is."""
    if change_mask.dim() == 2:
        change_mask = change_mask[None]
    factor = change_mask.shape[-1] // grid
    if factor * grid != change_mask.shape[-1]:
        raise ShapeError(f"mask side {change_mask.shape[-1]} not a multiple of grid {grid}")
    changed = F.max_pool2d(change_mask[:, None].to(torch.float32), factor)[:, 0]
    return changed == 0


def _masked_moments(x, keep, count):
    # x: (C, h, w); keep: (h, w) float
    mean = (x * keep).sum(dim=(-2, -1)) / count
    var = ((x - mean[:, None, None]).pow(2) * keep).sum(dim=(-2, -1)) / count
    return mean, torch.sqrt(var + 1e-12)


def content_similarity_loss(content1: torch.Tensor, content2: torch.Tensor,
                            change_mask: torch.Tensor) -> torch.Tensor:
    """Moment matching between the temporal contents over unchanged cells only.

    Per sample: mean over channels of (mean1 - mean2)^2 plus mean over
    channels of (std1 - std2)^2; averaged over the batch.
    """
    _check_same(content1, content2, "content_similarity_loss")
    if content1.dim() == 3:
        content1, content2 = content1[None], content2[None]
    keep = unchanged_cells(change_mask, content1.shape[-1]).to(content1.dtype)
    terms = []
    for c1, c2, k in zip(content1, content2, keep):
        count = k.sum()
        if count == 0:
            log.warning("content_similarity_loss: no unchanged cells; term is 0")
            terms.append(c1.sum() * 0)
            continue
        m1, s1 = _masked_moments(c1, k, count)
        m2, s2 = _masked_moments(c2, k, count)
        terms.append((m1 - m2).pow(2).mean() + (s1 - s2).pow(2).mean())
    return torch.stack(terms).mean()


def reconstruction_loss(recon1, img1, recon2, img2) -> torch.Tensor:
    _check_same(recon1, img1, "reconstruction_loss")
    _check_same(recon2, img2, "reconstruction_loss")
    return ((recon1 - img1).abs().mean() + (recon2 - img2).abs().mean()) / 2


def total_loss(l_cd, l_sep, l_content, l_rec, lambdas=(0.1, 0.1, 0.1)) -> LossReport:
    parts = {"l_cd": l_cd, "l_sep": l_sep, "l_content": l_content, "l_rec": l_rec}
    for name, value in parts.items():
        number = float(value.detach() if torch.is_tensor(value) else value)
        if not math.isfinite(number):
            raise NumericError(f"loss component {name} is not finite ({number})", component=name)
    lam1, lam2, lam3 = lambdas
    total = l_cd + lam1 * l_sep + lam2 * l_content + lam3 * l_rec
    return LossReport(l_cd, l_sep, l_content, l_rec, total)
