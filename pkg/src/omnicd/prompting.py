"""Prompt construction: templated text prompts and reference-image confidence maps."""

from __future__ import annotations

import re

import torch
import torch.nn.functional as F
from torch import nn

from .exceptions import DataError, ShapeError, UsageError

TEMPLATE = "Identify changes in {} in the image."

# Registry order is significant: class sets are rendered in this order.
CLASS_REGISTRY: list[str] = [
    "buildings",
    "water bodies",
    "bare land",
    "vegetation",
    "farmland",
    "roads",
    "landslide",
    "red squares",
    "blue disks",
    "green squares",
    "yellow disks",
]

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def register_class(name: str) -> None:
    """Append a class name to the registry (no-op if already present)."""
    name = name.strip()
    if not name:
        raise UsageError("class name must be non-empty")
    if name not in CLASS_REGISTRY:
        CLASS_REGISTRY.append(name)


def split_words(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def default_vocabulary() -> tuple[str, ...]:
    words: list[str] = []
    for source in [TEMPLATE.replace("{}", " to and ")] + CLASS_REGISTRY:
        for w in split_words(source):
            if w not in words:
                words.append(w)
    return tuple(words)


def _check_class(name: str) -> str:
    if name not in CLASS_REGISTRY:
        raise UsageError(f"unknown class {name!r}; registered: {CLASS_REGISTRY}")
    return name


def render_prompt(change) -> str:
    """Fill the prompt template.

    ``change`` is a class name, a set/frozenset of class names (joined with
    " and " in registry order) or an ordered ``(from_class, to_class)`` tuple.
    """
    if isinstance(change, str):
        phrase = _check_class(change)
    elif isinstance(change, tuple):
        if len(change) != 2:
            raise UsageError("an ordered change pair must have exactly two classes")
        a, b = (_check_class(c) for c in change)
        phrase = f"{a} to {b}"
    elif isinstance(change, (set, frozenset, list)):
        names = {_check_class(c) for c in change}
        if not names:
            raise UsageError("empty class set")
        phrase = " and ".join(c for c in CLASS_REGISTRY if c in names)
    else:
        raise UsageError(f"unsupported change description {change!r}")
    return TEMPLATE.format(phrase)


# -- reference-image prompting -------------------------------------------------

def downsample_mask(mask: torch.Tensor, factor: int = 8) -> torch.Tensor:
    """Nearest-neighbour downsampling, sampling the pixel nearest each cell centre."""
    if mask.shape[-1] % factor or mask.shape[-2] % factor:
        raise ShapeError(f"mask shape {tuple(mask.shape)} not divisible by {factor}")
    return mask[..., factor // 2::factor, factor // 2::factor]


def descriptor_maps(ref_embedding: torch.Tensor, cell_mask: torch.Tensor,
                    test_embedding: torch.Tensor) -> torch.Tensor:
    """Min-max normalised cosine-similarity map per foreground descriptor.

    ref_embedding, test_embedding: (C, h, w). cell_mask: (h, w) boolean.
    Returns (K, h, w) for the K foreground cells of ``cell_mask``.
    """
    if ref_embedding.shape != test_embedding.shape:
        raise ShapeError("reference and test embeddings differ in shape")
    if cell_mask.shape != ref_embedding.shape[1:]:
        raise ShapeError(
            f"cell mask {tuple(cell_mask.shape)} does not match grid {tuple(ref_embedding.shape[1:])}")
    cell_mask = cell_mask.bool()
    if not cell_mask.any():
        raise DataError("reference mask has no foreground cell after downsampling")
    c, h, w = test_embedding.shape
    desc = ref_embedding[:, cell_mask].T
    cells = test_embedding.reshape(c, h * w).T
    cos = F.normalize(desc, dim=1) @ F.normalize(cells, dim=1).T
    lo = cos.min(dim=1, keepdim=True).values
    hi = cos.max(dim=1, keepdim=True).values
    span = hi - lo
    # constant maps carry no localisation signal
    norm = torch.where(span > 0, (cos - lo) / torch.where(span > 0, span, torch.ones_like(span)),
                       torch.zeros_like(cos))
    return norm.reshape(-1, h, w)


def aggregate_confidence(maps: torch.Tensor, how: str = "mean") -> torch.Tensor:
    """Combine (K, h, w) descriptor maps; the result ignores descriptor order bit for bit."""
    if how == "mean":
        # fixed summation order, so permuting descriptors cannot change rounding
        return maps.sort(dim=0).values.mean(dim=0)
    if how == "max":
        return maps.max(dim=0).values
    raise UsageError(f"unknown aggregation {how!r}")


def confidence_from_embeddings(ref_embedding, ref_mask, test_embedding, how="mean"):
    """Confidence map on the embedding grid from a full-resolution reference mask."""
    grid = ref_embedding.shape[-1]
    factor = ref_mask.shape[-1] // grid
    cells = downsample_mask(ref_mask, factor) > 0
    return aggregate_confidence(descriptor_maps(ref_embedding, cells, test_embedding), how)


class DensePrompt(nn.Module):
    """Projects a confidence map to an additive image-embedding term."""

    def __init__(self, embed_dim: int):
        super().__init__()
        self.proj = nn.Conv2d(1, embed_dim, kernel_size=1)
        nn.init.zeros_(self.proj.bias)

    def forward(self, conf: torch.Tensor) -> torch.Tensor:
        if conf.dim() == 2:
            conf = conf[None]
        if conf.dim() != 3:
            raise ShapeError(f"confidence map must be (h, w) or (B, h, w), got {tuple(conf.shape)}")
        return self.proj(conf[:, None])


def check_reference_mask(mask) -> None:
    values = torch.unique(torch.as_tensor(mask))
    if not set(values.tolist()) <= {0, 1}:
        raise DataError("reference mask must be binary {0,1}")
    if not (torch.as_tensor(mask) > 0).any():
        raise DataError("reference mask needs at least one foreground pixel")


__all__ = [
    "TEMPLATE", "CLASS_REGISTRY", "register_class", "render_prompt", "split_words",
    "default_vocabulary", "downsample_mask", "descriptor_maps", "aggregate_confidence",
    "confidence_from_embeddings", "DensePrompt", "check_reference_mask",
]
