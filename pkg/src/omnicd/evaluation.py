"""Manifest-level evaluation and preview rasters."""

from __future__ import annotations

import csv
import json
import os

import numpy as np
import torch

from .datakit.manifest import load_manifest, write_rgb
from .exceptions import DataError
from .metrics import METRIC_KEYS, ConfusionCounts, confusion, metrics

PER_SAMPLE_COLUMNS = ("id", "tp", "fp", "fn", "tn") + METRIC_KEYS


def evaluate(manifest, estimator, threshold: float = 0.5):
    """Micro-averaged metrics over a manifest, plus one row per sample.

    Pixels outside a sample's ``valid_shape`` (padding) are not counted.
    """
    size = estimator.config_.input_size
    total = ConfusionCounts()
    rows = []
    for sample in load_manifest(manifest):
        if sample.mask.shape != (size, size):
            raise DataError(f"sample {sample.record.id} is {sample.mask.shape[0]}x"
                            f"{sample.mask.shape[1]} but the checkpoint expects {size}x{size}")
        pair = np.stack([sample.image1, sample.image2])[None]
        prob = estimator.predict_proba(pair, [sample.prompt])[0]
        counts = confusion(prob > threshold, sample.mask, sample.valid)
        total = total + counts
        rep = metrics(counts)
        rows.append({"id": sample.record.id, "tp": counts.tp, "fp": counts.fp, "fn": counts.fn,
                     "tn": counts.tn, **rep.as_dict()})
    if not rows:
        raise DataError(f"manifest {manifest} holds no samples")
    return metrics(total), rows


def write_evaluation(report, rows, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "metrics.json"), "w", encoding="utf-8") as fh:
        json.dump(report.as_dict(), fh, indent=2)
        fh.write("\n")
    with open(os.path.join(out_dir, "per_sample.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, PER_SAMPLE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


@torch.no_grad()
def write_reconstruction_previews(net, images, out_dir, prefix="recon"):
    """Save input | reconstruction | |error| triptychs for (n, 3, S, S) images."""
    os.makedirs(out_dir, exist_ok=True)
    dtype = next(net.parameters()).dtype
    images = torch.as_tensor(np.asarray(images), dtype=dtype)
    net.eval()
    content = net.encode_image(images)
    recon = net.reconstructor(content, net.encode_style(images))
    paths = []
    for i, (img, rec) in enumerate(zip(images, recon)):
        strip = torch.cat([img, rec, (img - rec).abs()], dim=-1).float().numpy()
        path = os.path.join(out_dir, f"{prefix}_{i:03d}.png")
        write_rgb(path, strip)
        paths.append(path)
    return paths
