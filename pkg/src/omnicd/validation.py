"""Input checks for the estimator API."""

from __future__ import annotations

import numpy as np
import torch

from .exceptions import DataError, ShapeError


def check_pairs(X, size: int | None = None) -> np.ndarray:
    """Return bi-temporal pairs as float32 (n, 2, 3, S, S) in [0, 1].

    Accepts an array of that shape, a single pair (2, 3, S, S), or a
    sequence of (image1, image2) tuples.
    """
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], (list, tuple)):
        X = np.stack([np.stack([np.asarray(a), np.asarray(b)]) for a, b in X])
    X = np.asarray(X.detach().cpu() if torch.is_tensor(X) else X)
    if X.ndim == 4:
        X = X[None]
    if X.ndim != 5 or X.shape[1] != 2 or X.shape[2] != 3 or X.shape[3] != X.shape[4]:
        raise ShapeError(f"expected pairs of shape (n, 2, 3, S, S), got {X.shape}")
    if size is not None and X.shape[-1] != size:
        raise ShapeError(f"image side {X.shape[-1]} does not match model input_size {size}")
    if X.dtype == np.uint8:
        X = X.astype(np.float32) / 255
    X = X.astype(np.float32, copy=False)
    if not np.isfinite(X).all():
        raise DataError("images contain non-finite values")
    if X.min() < 0 or X.max() > 1:
        raise DataError("pixel values must lie in [0, 1]")
    return X


def check_masks(y, n: int, size: int) -> np.ndarray:
    """Return masks as uint8 (n, S, S) in {0, 1}; {0, 255} input is accepted."""
    y = np.asarray(y)
    if y.ndim == 2:
        y = y[None]
    if y.shape != (n, size, size):
        raise ShapeError(f"expected masks of shape {(n, size, size)}, got {y.shape}")
    values = np.unique(y)
    if np.isin(values, (0, 255)).all():
        y = y // 255 if y.dtype.kind in "iu" else y / 255
    elif not np.isin(values, (0, 1)).all():
        raise DataError(f"masks must be binary, found values {values[:8].tolist()}")
    return y.astype(np.uint8)


def check_prompts(prompts, n: int) -> list[str]:
    if isinstance(prompts, str):
        prompts = [prompts] * n
    prompts = list(prompts)
    if len(prompts) != n:
        raise ShapeError(f"{len(prompts)} prompts for {n} samples")
    for p in prompts:
        if not isinstance(p, str) or not p.strip():
            raise DataError("every prompt must be a non-empty string")
    return prompts
