"""Directory-level conversion of an existing change-detection dataset.

Expected input layout (files matched by name across folders)::

    in/A/*.png        epoch-1 images
    in/B/*.png        epoch-2 images
    in/label/*.png    change labels       (single_binary, multi_single)
    in/label1/*.png   epoch-1 class maps  (multi_bitemporal)
    in/label2/*.png   epoch-2 class maps  (multi_bitemporal)
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from ..exceptions import DataError, UsageError
from ..prompting import register_class, render_prompt
from .labels import (BACKGROUND, LabelSource, expand_bitemporal_pairs, expand_multiclass_single,
                     standardize_binary)
from .manifest import SampleRecord, write_manifest, write_mask, write_rgb
from .tiling import resize_standard

KIND_ALIASES = {"single_binary": "single_binary", "multi_single": "multi_single_temporal",
                "multi_bitemporal": "multi_bi_temporal"}
IMAGE_EXTS = (".png", ".tif", ".tiff", ".jpg", ".jpeg", ".bmp")


def _read_label(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            if img.mode in ("RGB", "RGBA"):
                img = img.convert("L")
            return np.asarray(img).astype(np.int64)
    except OSError as exc:
        raise DataError(f"cannot read label {path}: {exc}") from exc


def _read_image(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except OSError as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc


def _stems(folder):
    if not os.path.isdir(folder):
        raise DataError(f"missing input folder {folder}")
    return {os.path.splitext(f)[0]: os.path.join(folder, f)
            for f in sorted(os.listdir(folder)) if f.lower().endswith(IMAGE_EXTS)}


def _prompt_for(change):
    names = [change] if isinstance(change, str) else list(change)
    for n in names:
        register_class(n)
    if isinstance(change, frozenset) and len(change) == 1:
        change = next(iter(change))
    return render_prompt(change)


def convert_dataset(in_dir, out_dir, kind, class_map, target=512, max_subset=2, name=None):
    """Standardise ``in_dir`` into ``out_dir`` and write ``manifest.jsonl``."""
    if kind not in KIND_ALIASES:
        raise UsageError(f"unknown kind {kind!r}; expected one of {sorted(KIND_ALIASES)}")
    source = LabelSource(KIND_ALIASES[kind], class_map)
    name = name or os.path.basename(os.path.normpath(in_dir))
    a_files, b_files = _stems(os.path.join(in_dir, "A")), _stems(os.path.join(in_dir, "B"))
    if source.kind == "multi_bi_temporal":
        l1_files = _stems(os.path.join(in_dir, "label1"))
        l2_files = _stems(os.path.join(in_dir, "label2"))
    else:
        l1_files, l2_files = _stems(os.path.join(in_dir, "label")), None
    if source.kind == "single_binary" and len(class_map) != 1:
        raise UsageError("single_binary conversion needs a class map with exactly one class")
    for sub in ("A", "B", "label"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)

    records = []
    for stem in sorted(a_files):
        if stem not in b_files or stem not in l1_files or (l2_files is not None and stem not in l2_files):
            raise DataError(f"sample {stem!r} is missing its epoch-2 image or label")
        t1 = resize_standard(_read_image(a_files[stem]), target)
        t2 = resize_standard(_read_image(b_files[stem]), target)
        lab1 = resize_standard(_read_label(l1_files[stem]), target, is_label=True)
        lab2 = (resize_standard(_read_label(l2_files[stem]), target, is_label=True)
                if l2_files is not None else None)
        if len(t1) != len(t2) or len(t1) != len(lab1):
            raise DataError(f"sample {stem!r}: images and labels differ in size")
        for i, (tile1, tile2, tl) in enumerate(zip(t1, t2, lab1)):
            tag = stem if len(t1) == 1 else f"{stem}_r{tile1.row}c{tile1.col}"
            im1_rel, im2_rel = f"A/{tag}.png", f"B/{tag}.png"
            write_rgb(os.path.join(out_dir, im1_rel), tile1.data)
            write_rgb(os.path.join(out_dir, im2_rel), tile2.data)
            if source.kind == "single_binary":
                outputs = [(standardize_binary(tl.data), next(iter(class_map.values())))]
            elif source.kind == "multi_single_temporal":
                outputs = expand_multiclass_single(tl.data, class_map, max_subset)
                if not outputs:
                    outputs = [(np.zeros_like(tl.data, dtype=np.uint8), frozenset(class_map.values()))]
            else:
                outputs = expand_bitemporal_pairs(tl.data, lab2[i].data, class_map)
            valid = list(tl.valid_shape) if tl.padded else None
            for j, (mask, change) in enumerate(outputs):
                rid = tag if len(outputs) == 1 else f"{tag}_{j}"
                mask_rel = f"label/{rid}.png"
                write_mask(os.path.join(out_dir, mask_rel), mask)
                classes = [change] if isinstance(change, str) else (
                    list(change) if isinstance(change, tuple) else sorted(change))
                records.append(SampleRecord(rid, im1_rel, im2_rel, mask_rel, _prompt_for(change),
                                            name, classes, valid))
    write_manifest(records, os.path.join(out_dir, "manifest.jsonl"))
    return records


__all__ = ["convert_dataset", "BACKGROUND"]
