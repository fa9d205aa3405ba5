"""Prompt-guided bi-temporal change detection."""

from .config import ModelConfig
from .estimator import PromptedChangeDetector
from .exceptions import ConfigError, DataError, NumericError, OmniCDError, ShapeError, UsageError
from .metrics import ConfusionCounts, MetricReport, confusion, metrics
from .model import OmniCDNet
from .prompting import render_prompt

__version__ = "0.1.0"

__all__ = [
    "ModelConfig", "PromptedChangeDetector", "OmniCDNet", "render_prompt",
    "ConfusionCounts", "MetricReport", "confusion", "metrics",
    "OmniCDError", "UsageError", "ConfigError", "DataError", "ShapeError", "NumericError",
]
