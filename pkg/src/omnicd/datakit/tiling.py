"""Bring rasters to the standard square resolution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image


@dataclass
class Tile:
    data: np.ndarray
    row: int
    col: int
    valid_shape: tuple[int, int]

    @property
    def padded(self) -> bool:
        return self.valid_shape != tuple(self.data.shape[:2])


def _resample(grid: np.ndarray, target: int, is_label: bool) -> np.ndarray:
    mode = Image.NEAREST if is_label else Image.BILINEAR
    if grid.ndim == 2:
        channels = [grid]
    else:
        channels = [grid[..., c] for c in range(grid.shape[-1])]
    out = []
    for ch in channels:
        if is_label:
            img = Image.fromarray(ch.astype(np.int32), mode="I")
        else:
            img = Image.fromarray(ch.astype(np.float32), mode="F")
        out.append(np.asarray(img.resize((target, target), mode)))
    res = out[0] if grid.ndim == 2 else np.stack(out, axis=-1)
    if is_label:
        return res.astype(grid.dtype)
    if np.issubdtype(grid.dtype, np.integer):
        info = np.iinfo(grid.dtype)
        return np.clip(np.rint(res), info.min, info.max).astype(grid.dtype)
    return res.astype(grid.dtype)


def resize_standard(grid, target: int = 512, is_label: bool = False) -> list[Tile]:
    """Tile rasters larger than ``target``; resample smaller ones.

    Larger rasters are cut into non-overlapping target x target tiles in
    row-major order; right/bottom remainders are zero-padded and report a
    smaller ``valid_shape``. Rasters no larger than ``target`` on either side
    are resampled (bilinear for images, nearest for labels).
    """
    grid = np.asarray(grid)
    h, w = grid.shape[:2]
    if (h, w) == (target, target):
        return [Tile(grid.copy(), 0, 0, (h, w))]
    if max(h, w) <= target:
        return [Tile(_resample(grid, target, is_label), 0, 0, (target, target))]
    tiles = []
    for r, y in enumerate(range(0, h, target)):
        for c, x in enumerate(range(0, w, target)):
            piece = grid[y:y + target, x:x + target]
            vh, vw = piece.shape[:2]
            if (vh, vw) != (target, target):
                pad = [(0, target - vh), (0, target - vw)] + [(0, 0)] * (grid.ndim - 2)
                piece = np.pad(piece, pad)
            tiles.append(Tile(piece.copy(), r, c, (vh, vw)))
    return tiles


def assemble_tiles(tiles: list[Tile], target: int) -> np.ndarray:
    """Inverse of the tiling branch of ``resize_standard``."""
    rows = max(t.row for t in tiles) + 1
    cols = max(t.col for t in tiles) + 1
    height = sum(t.valid_shape[0] for t in tiles if t.col == 0)
    width = sum(t.valid_shape[1] for t in tiles if t.row == 0)
    sample = tiles[0].data
    out = np.zeros((height, width) + sample.shape[2:], dtype=sample.dtype)
    for t in tiles:
        vh, vw = t.valid_shape
        out[t.row * target:t.row * target + vh, t.col * target:t.col * target + vw] = t.data[:vh, :vw]
    assert rows * cols == len(tiles)
    return out
