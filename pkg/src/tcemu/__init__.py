"""Tensor Core numerics emulator, microbenchmark harness and performance model."""

from .formats import (
    BF16,
    FP8_E4M3,
    FP8_E5M2,
    FP16,
    FP32,
    TF32,
    FloatFormat,
    QuantizedValue,
    RoundingMode,
    decode,
    get_format,
    quantize,
    ulp,
)
from .fragments import FragmentLayout, fragment_layout, gather_from_fragments, scatter_to_fragments
from .mma_emu import ExactWide, MmaShape, NumericPipelineConfig, RoundEachStep, mma_emulate
from .oracle import DenseMatrix, Layout, matmul_ref, relative_l2_error
from .sparse24 import Sparse24Matrix, check_24, compress_24, decompress_24, mma_sp_emulate, prune_24

__version__ = "0.1.0"

__all__ = [
    "BF16",
    "FP8_E4M3",
    "FP8_E5M2",
    "FP16",
    "FP32",
    "TF32",
    "DenseMatrix",
    "ExactWide",
    "FloatFormat",
    "FragmentLayout",
    "Layout",
    "MmaShape",
    "NumericPipelineConfig",
    "QuantizedValue",
    "RoundEachStep",
    "RoundingMode",
    "Sparse24Matrix",
    "check_24",
    "compress_24",
    "decode",
    "decompress_24",
    "fragment_layout",
    "gather_from_fragments",
    "get_format",
    "matmul_ref",
    "mma_emulate",
    "mma_sp_emulate",
    "prune_24",
    "quantize",
    "relative_l2_error",
    "scatter_to_fragments",
    "ulp",
]
