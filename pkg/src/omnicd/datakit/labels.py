"""Conversion of heterogeneous change labels into {0, 255} binary masks."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from ..exceptions import DataError, ShapeError

LABEL_KINDS = ("single_binary", "multi_single_temporal", "multi_bi_temporal")
BACKGROUND = "background"


@dataclass
class LabelSource:
    kind: str
    class_map: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LABEL_KINDS:
            raise DataError(f"unknown label kind {self.kind!r}; expected one of {LABEL_KINDS}")
        self.class_map = {int(k): v for k, v in self.class_map.items()}
        names = list(self.class_map.values())
        if len(set(names)) != len(names):
            raise DataError("class_map values must be unique")


def standardize_binary(label) -> np.ndarray:
    """0 stays 0, any other value becomes 255."""
    label = np.asarray(label)
    values = np.unique(label)
    if len(values) > 2 or (len(values) == 2 and values[0] != 0):
        raise DataError(
            f"binary label has values {values.tolist()}; use a multi-type label kind instead")
    return np.where(label != 0, 255, 0).astype(np.uint8)


def _present_classes(label, class_map):
    values = [int(v) for v in np.unique(label) if v != 0]
    missing = [v for v in values if v not in class_map]
    if missing:
        raise DataError(f"label values {missing} are not in the class map")
    return values


def expand_multiclass_single(label, class_map: dict[int, str], max_subset: int = 2):
    """One mask per non-empty class subset of size <= max_subset, plus the full union.

    Returns a list of (mask uint8 {0,255}, frozenset of class names), subsets
    ordered by size then by pixel value.
    """
    label = np.asarray(label)
    values = _present_classes(label, class_map)
    subsets = [c for k in range(1, min(max_subset, len(values)) + 1)
               for c in combinations(values, k)]
    if values and tuple(values) not in subsets:
        subsets.append(tuple(values))
    out = []
    for subset in subsets:
        mask = np.where(np.isin(label, subset), 255, 0).astype(np.uint8)
        out.append((mask, frozenset(class_map[v] for v in subset)))
    return out


def expand_bitemporal_pairs(label1, label2, class_map: dict[int, str]):
    """One mask per observed (from_class, to_class) transition.

    Value 0 is named ``background`` unless the class map names it.
    """
    label1, label2 = np.asarray(label1), np.asarray(label2)
    if label1.shape != label2.shape:
        raise ShapeError(f"label shapes differ: {label1.shape} vs {label2.shape}")
    names = {0: BACKGROUND, **class_map}
    for lab in (label1, label2):
        _present_classes(lab, names)
    changed = label1 != label2
    pairs = np.unique(np.stack([label1[changed], label2[changed]], axis=1), axis=0) \
        if changed.any() else np.empty((0, 2), dtype=label1.dtype)
    out = []
    for a, b in pairs.tolist():
        mask = np.where((label1 == a) & (label2 == b), 255, 0).astype(np.uint8)
        out.append((mask, (names[a], names[b])))
    return out
