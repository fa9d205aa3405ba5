"""Dataset standardisation: label conversion, tiling, manifests and synthetic scenes."""

from .convert import convert_dataset
from .labels import LabelSource, expand_bitemporal_pairs, expand_multiclass_single, standardize_binary
from .manifest import BiTemporalSample, SampleRecord, load_manifest, read_manifest, write_manifest
from .synth import make_scene, synth_generate, synth_scenes
from .tiling import Tile, assemble_tiles, resize_standard

__all__ = [
    "convert_dataset", "LabelSource", "standardize_binary", "expand_multiclass_single",
    "expand_bitemporal_pairs", "SampleRecord", "BiTemporalSample", "read_manifest",
    "write_manifest", "load_manifest", "make_scene", "synth_scenes", "synth_generate",
    "Tile", "resize_standard", "assemble_tiles",
]
