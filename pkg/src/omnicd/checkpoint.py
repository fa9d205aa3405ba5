"""Weight checkpoints: one safetensors archive, ModelConfig JSON in the header."""

from __future__ import annotations

import json
import os

import torch
from safetensors import safe_open
from safetensors.torch import load_file, save_file

from .config import ModelConfig
from .exceptions import DataError

FORMAT = "omnicd-checkpoint-1"
HEADER_KEY = "omnicd"


def save_checkpoint(net, path, extra: dict | None = None) -> None:
    state = {k: v.detach().contiguous().cpu() for k, v in net.state_dict().items()}
    header = {"format": FORMAT, "config": net.config.to_dict(), "extra": extra or {}}
    # a single metadata entry: safetensors writes multi-key metadata in hash order,
    # which would make identical runs produce different bytes
    metadata = {HEADER_KEY: json.dumps(header, sort_keys=True)}
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    save_file(state, str(path), metadata=metadata)


def read_header(path) -> tuple[ModelConfig, dict]:
    try:
        with safe_open(str(path), framework="pt") as fh:
            meta = fh.metadata() or {}
    except (OSError, Exception) as exc:  # safetensors raises its own error types
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    try:
        header = json.loads(meta[HEADER_KEY])
    except (KeyError, ValueError):
        header = {}
    if header.get("format") != FORMAT:
        raise DataError(f"{path} is not an omnicd checkpoint")
    return ModelConfig.from_dict(header["config"]), header["extra"]


def load_checkpoint(path, dtype=torch.float32):
    """Rebuild the network stored at ``path``."""
    from .model import OmniCDNet

    config, _ = read_header(path)
    net = OmniCDNet(config)
    state = load_file(str(path))
    net.load_state_dict(state)
    return net.to(dtype).eval()
