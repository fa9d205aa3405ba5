"""Synthetic bi-temporal scenes with exact change masks.

Each scene is a smooth textured background with coloured shapes. Shapes of a
registered change class ("red squares", "blue disks", ...) that exist in only
one epoch are the changes; grey rectangles and class shapes present in both
epochs are distractors. Epoch 2 gets a global per-channel colour jitter to
mimic a change in imaging conditions.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from ..exceptions import UsageError
from ..prompting import render_prompt
from .manifest import SampleRecord, write_manifest, write_mask, write_rgb

CLASS_STYLES = {
    "red squares": ("square", (0.86, 0.14, 0.12)),
    "blue disks": ("disk", (0.12, 0.22, 0.88)),
    "green squares": ("square", (0.18, 0.78, 0.22)),
    "yellow disks": ("disk", (0.92, 0.84, 0.16)),
}
DEFAULT_CLASSES = ("red squares", "blue disks")
GRID = 8


@dataclass
class Shape:
    kind: str  # "square", "disk" or "rect"
    y: int
    x: int
    h: int
    w: int
    color: tuple[float, float, float]
    epochs: tuple[int, ...]  # subset of (1, 2)
    cls: str | None = None  # None for distractors

    def footprint(self, size: int) -> np.ndarray:
        out = np.zeros((size, size), dtype=bool)
        if self.kind == "disk":
            yy, xx = np.mgrid[0:size, 0:size] + 0.5
            cy, cx = self.y + self.h / 2, self.x + self.w / 2
            out[:] = (yy - cy) ** 2 + (xx - cx) ** 2 <= (self.h / 2) ** 2
        else:
            out[self.y:self.y + self.h, self.x:self.x + self.w] = True
        return out


@dataclass
class Scene:
    image1: np.ndarray  # (3, S, S) float in [0, 1]
    image2: np.ndarray
    shapes: list[Shape]

    def change_mask(self, classes) -> np.ndarray:
        """Symmetric difference of the given classes' footprints across epochs, {0,1}."""
        size = self.image1.shape[-1]
        f1 = np.zeros((size, size), dtype=bool)
        f2 = np.zeros((size, size), dtype=bool)
        for s in self.shapes:
            if s.cls in classes:
                fp = s.footprint(size)
                if 1 in s.epochs:
                    f1 |= fp
                if 2 in s.epochs:
                    f2 |= fp
        return (f1 ^ f2).astype(np.uint8)

    def changed_classes(self) -> list[str]:
        return sorted({s.cls for s in self.shapes if s.cls and len(s.epochs) == 1})


def _background(rng, size):
    base = rng.uniform(0.3, 0.6, size=3)
    yy, xx = np.mgrid[0:size, 0:size] / size
    angle = rng.uniform(0, 2 * np.pi)
    ramp = (np.cos(angle) * yy + np.sin(angle) * xx) - 0.5
    coarse = rng.normal(0, 1, size=(3, 5, 5))
    # bilinear upsampling of a coarse noise grid gives a smooth texture
    pos = np.linspace(0, 4, size)
    i0 = np.clip(pos.astype(int), 0, 3)
    t = pos - i0
    rows = coarse[:, i0] * (1 - t)[None, :, None] + coarse[:, i0 + 1] * t[None, :, None]
    tex = rows[:, :, i0] * (1 - t)[None, None, :] + rows[:, :, i0 + 1] * t[None, None, :]
    img = base[:, None, None] + 0.12 * ramp[None] + 0.04 * tex
    return img


def _place(rng, size, side, taken, tries=200):
    cells = size // GRID
    span = side // GRID
    for _ in range(tries):
        cy = int(rng.integers(0, cells - span + 1))
        cx = int(rng.integers(0, cells - span + 1))
        # one free cell of margin around every shape keeps footprints disjoint
        region = taken[max(cy - 1, 0):cy + span + 1, max(cx - 1, 0):cx + span + 1]
        if not region.any():
            taken[cy:cy + span, cx:cx + span] = True
            return cy * GRID, cx * GRID
    return None


def _side(rng, size):
    lo, hi = max(2, size // 64), max(2, size // 32)
    return int(rng.integers(lo, hi + 1)) * GRID


def make_scene(rng, size=128, classes=DEFAULT_CLASSES, changes=None, jitter=0.08,
               n_static=(0, 2), n_distractors=(1, 2)) -> Scene:
    """Draw one scene.

    ``changes`` lists the class of each changed shape; by default 1-3 changes
    with classes drawn uniformly from ``classes``.
    """
    for c in classes:
        if c not in CLASS_STYLES:
            raise UsageError(f"no synthetic style for class {c!r}; known: {sorted(CLASS_STYLES)}")
    if size % GRID or size < 4 * GRID:
        raise UsageError(f"synthetic size must be a multiple of {GRID} and >= {4 * GRID}")
    if changes is None:
        changes = [classes[int(i)] for i in rng.integers(0, len(classes), size=int(rng.integers(1, 4)))]
    taken = np.zeros((size // GRID, size // GRID), dtype=bool)
    shapes: list[Shape] = []

    def add(cls, epochs):
        side = _side(rng, size)
        spot = _place(rng, size, side, taken)
        if spot is None:
            return
        if cls is None:
            g = float(rng.uniform(0.65, 0.85))
            w = side + GRID * int(rng.integers(0, 2))
            if spot[1] + w > size or taken[spot[0] // GRID:(spot[0] + side) // GRID,
                                           (spot[1] + side) // GRID:(spot[1] + w) // GRID].any():
                w = side
            taken[spot[0] // GRID:(spot[0] + side) // GRID, spot[1] // GRID:(spot[1] + w) // GRID] = True
            shapes.append(Shape("rect", spot[0], spot[1], side, w, (g, g, g * 0.95), epochs))
            return
        kind, color = CLASS_STYLES[cls]
        color = tuple(float(np.clip(c + rng.uniform(-0.04, 0.04), 0, 1)) for c in color)
        shapes.append(Shape(kind, spot[0], spot[1], side, side, color, epochs, cls))

    for cls in changes:
        add(cls, (int(rng.integers(1, 3)),))
    for _ in range(int(rng.integers(n_static[0], n_static[1] + 1))):
        add(classes[int(rng.integers(0, len(classes)))], (1, 2))
    for _ in range(int(rng.integers(n_distractors[0], n_distractors[1] + 1))):
        add(None, (1, 2))

    bg = _background(rng, size)
    epochs = []
    for epoch in (1, 2):
        img = bg.copy()
        for s in shapes:
            if epoch in s.epochs:
                img[:, s.footprint(size)] = np.asarray(s.color)[:, None]
        epochs.append(img)
    gain = 1 + rng.uniform(-jitter, jitter, size=3)
    bias = rng.uniform(-jitter / 2, jitter / 2, size=3)
    epochs[1] = epochs[1] * gain[:, None, None] + bias[:, None, None]
    im1, im2 = (np.clip(e, 0, 1).astype(np.float32) for e in epochs)
    # quantise through 8 bits so in-memory scenes equal what the PNGs hold
    im1, im2 = (np.rint(e * 255).astype(np.float32) / 255 for e in (im1, im2))
    return Scene(im1, im2, shapes)


def synth_scenes(n: int, seed: int, size: int = 128, classes=DEFAULT_CLASSES,
                 per_class: bool = False, **scene_kwargs) -> list[Scene]:
    """The scenes ``synth_generate`` would write for the same arguments."""
    if n < 1:
        raise UsageError("n must be >= 1")
    rng = np.random.default_rng(seed)
    scenes = []
    for _ in range(n):
        changes = None
        if per_class:
            extra = int(rng.integers(0, 2))
            changes = list(classes) + [classes[int(j)] for j in rng.integers(0, len(classes), size=extra)]
        scenes.append(make_scene(rng, size, classes, changes=changes, **scene_kwargs))
    return scenes


def synth_generate(n: int, seed: int, size: int = 128, out_dir=None, classes=DEFAULT_CLASSES,
                   per_class: bool = False, **scene_kwargs) -> list[SampleRecord]:
    """Write ``n`` synthetic pairs (PNG) plus ``manifest.jsonl`` under ``out_dir``.

    Default: one record per pair, prompting for every class that changed.
    ``per_class=True``: every pair gets changes of each class and one record
    per changed class, so the same images appear with different prompts and
    masks.
    """
    if out_dir is None:
        raise UsageError("synth_generate needs an output directory")
    scenes = synth_scenes(n, seed, size, classes, per_class, **scene_kwargs)
    for sub in ("A", "B", "label"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    records = []
    for i, scene in enumerate(scenes):
        name = f"synth_{seed}_{i:04d}"
        write_rgb(os.path.join(out_dir, "A", name + ".png"), scene.image1)
        write_rgb(os.path.join(out_dir, "B", name + ".png"), scene.image2)
        changed = scene.changed_classes()
        groups = [[c] for c in changed] if per_class else [changed]
        for group in groups:
            tag = f"{name}_{group[0].replace(' ', '_')}" if per_class else name
            mask_rel = f"label/{tag}.png"
            write_mask(os.path.join(out_dir, mask_rel), scene.change_mask(group))
            prompt = render_prompt(group[0] if len(group) == 1 else frozenset(group))
            records.append(SampleRecord(
                id=tag, image_t1=f"A/{name}.png", image_t2=f"B/{name}.png", mask=mask_rel,
                prompt=prompt, source_dataset="synthetic", classes=list(group)))
    write_manifest(records, os.path.join(out_dir, "manifest.jsonl"))
    return records
