"""JSON-lines manifests and PNG raster I/O."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np
from PIL import Image

from ..exceptions import DataError, MalformedManifestError

REQUIRED_KEYS = ("id", "image_t1", "image_t2", "mask", "prompt", "source_dataset", "classes")


@dataclass
class SampleRecord:
    id: str
    image_t1: str
    image_t2: str
    mask: str
    prompt: str
    source_dataset: str
    classes: list[str] = field(default_factory=list)
    # (height, width) of the non-padded region for zero-padded remainder tiles
    valid_shape: list[int] | None = None

    def to_json(self) -> str:
        data = asdict(self)
        if data["valid_shape"] is None:
            del data["valid_shape"]
        return json.dumps(data, ensure_ascii=False)


@dataclass
class BiTemporalSample:
    record: SampleRecord
    image1: np.ndarray  # (3, H, W) float32 in [0, 1]
    image2: np.ndarray
    mask: np.ndarray  # (H, W) uint8 in {0, 1}
    valid: np.ndarray | None = None  # (H, W) bool, None when the whole raster counts

    @property
    def prompt(self) -> str:
        return self.record.prompt


# -- rasters ----------------------------------------------------------------------

def to_uint8(image) -> np.ndarray:
    image = np.asarray(image)
    if image.dtype == np.uint8:
        return image
    return np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255), 0, 255).astype(np.uint8)


def write_rgb(path, image) -> None:
    """Write (3, H, W) or (H, W, 3) float-in-[0,1] or uint8 data as an RGB PNG."""
    image = np.asarray(image)
    if image.ndim == 3 and image.shape[0] == 3 and image.shape[-1] != 3:
        image = image.transpose(1, 2, 0)
    Image.fromarray(to_uint8(image), mode="RGB").save(path, format="PNG")


def read_rgb(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    return arr.transpose(2, 0, 1).copy()


def write_mask(path, mask) -> None:
    """Write a {0,1} or {0,255} mask as an 8-bit single-channel PNG with values {0,255}."""
    mask = np.asarray(mask)
    Image.fromarray(np.where(mask > 0, 255, 0).astype(np.uint8), mode="L").save(path, format="PNG")


def write_gray(path, values) -> None:
    """Write a [0,1] map as an 8-bit grayscale PNG."""
    Image.fromarray(to_uint8(values), mode="L").save(path, format="PNG")


def read_mask(path) -> np.ndarray:
    """Read a {0,255} single-channel mask and return it as uint8 {0,1}."""
    try:
        with Image.open(path) as img:
            if img.mode not in ("L", "1", "P", "I"):
                raise DataError(f"mask {path} is not single-channel (mode {img.mode})")
            arr = np.asarray(img.convert("L") if img.mode != "L" else img)
    except OSError as exc:
        raise DataError(f"cannot read mask {path}: {exc}") from exc
    values = set(np.unique(arr).tolist())
    if not values <= {0, 255} and not values <= {0, 1}:
        raise DataError(f"mask {path} has values outside {{0, 255}}: {sorted(values)[:8]}")
    return (arr > 0).astype(np.uint8)


# -- manifests --------------------------------------------------------------------

def write_manifest(records, path) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def _parse(line: str, path, lineno: int) -> SampleRecord:
    try:
        data = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedManifestError(path, lineno, f"invalid JSON ({exc.msg})") from exc
    if not isinstance(data, dict):
        raise MalformedManifestError(path, lineno, "expected a JSON object")
    missing = [k for k in REQUIRED_KEYS if k not in data]
    if missing:
        raise MalformedManifestError(path, lineno, f"missing key(s) {missing}")
    extra = set(data) - set(REQUIRED_KEYS) - {"valid_shape"}
    if extra:
        raise MalformedManifestError(path, lineno, f"unexpected key(s) {sorted(extra)}")
    if not isinstance(data["classes"], list):
        raise MalformedManifestError(path, lineno, "'classes' must be a list")
    return SampleRecord(**data)


def read_manifest(path) -> list[SampleRecord]:
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open manifest {path}: {exc}") from exc
    with fh:
        return [_parse(line, path, n) for n, line in enumerate(fh, start=1) if line.strip()]


def load_sample(record: SampleRecord, root) -> BiTemporalSample:
    img1 = read_rgb(os.path.join(root, record.image_t1))
    img2 = read_rgb(os.path.join(root, record.image_t2))
    mask = read_mask(os.path.join(root, record.mask))
    if img1.shape != img2.shape or img1.shape[1:] != mask.shape:
        raise DataError(f"sample {record.id}: rasters differ in size "
                        f"({img1.shape[1:]}, {img2.shape[1:]}, {mask.shape})")
    valid = None
    if record.valid_shape is not None:
        vh, vw = record.valid_shape
        valid = np.zeros(mask.shape, dtype=bool)
        valid[:vh, :vw] = True
    return BiTemporalSample(record, img1, img2, mask, valid)


def load_manifest(path) -> Iterator[BiTemporalSample]:
    """Yield samples; image paths are resolved relative to the manifest's directory."""
    root = os.path.dirname(os.path.abspath(path))
    for record in read_manifest(path):
        yield load_sample(record, root)
