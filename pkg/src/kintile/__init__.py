"""Constant-memory tiled inference for convolutional image translators.

The package runs a CycleGAN-style generator over ultra-high-resolution
images one patch at a time, swapping the behaviour of every instance
normalization site between four strategies: full-image IN, patch-wise IN,
thumbnail IN (TIN), and kernelized IN (KIN) with cached per-patch
statistics convolved by a spatial kernel.
"""

from .tensor import MemoryMeter, PadSpec, Tensor, meter
from .normalize import (
    KinKernel,
    NormLayerState,
    NormMode,
    Phase,
    StatTable,
    apply_norm,
    build_kernel,
    cache_stats,
    kin_stats,
    tin_capture,
)
from .generator import Generator, GeneratorConfig, WeightStore
from .pipeline import TileGrid, TranslationReport, cache_pass, infer_pass, tile, translate

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "MemoryMeter",
    "PadSpec",
    "meter",
    "KinKernel",
    "NormMode",
    "NormLayerState",
    "Phase",
    "StatTable",
    "apply_norm",
    "build_kernel",
    "cache_stats",
    "kin_stats",
    "tin_capture",
    "Generator",
    "GeneratorConfig",
    "WeightStore",
    "TileGrid",
    "TranslationReport",
    "tile",
    "translate",
    "cache_pass",
    "infer_pass",
]
